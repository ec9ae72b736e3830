#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <numeric>
#include <vector>

#include "spcal/error.hpp"

namespace spcal {

struct NelderMeadOptions {
    std::size_t max_iterations = 20000;
    double x_tol = 1e-8;        ///< simplex diameter bound
    double f_tol = 1e-12;       ///< best-value improvement bound over the last 2*dim iterations
    double initial_step = 0.25; ///< edge length of the starting simplex along each axis
};

struct NelderMeadResult {
    std::vector<double> x;
    double f = std::numeric_limits<double>::infinity();
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    bool converged = false;
};

/// Unconstrained derivative-free minimization with the standard simplex moves
/// (reflection 1, expansion 2, contraction 1/2, shrink 1/2). Non-finite
/// objective values are treated as +inf.
///
/// Converged means: the largest pairwise vertex distance is below x_tol and the
/// best value improved by less than f_tol over the last 2*dim iterations.
template <class Objective>
NelderMeadResult nelder_mead(Objective&& objective, const std::vector<double>& start,
                             const NelderMeadOptions& opt = {})
{
    const std::size_t dim = start.size();
    detail::require(dim >= 1, ErrorKind::invalid_parameter, "nelder_mead needs at least one free variable");

    NelderMeadResult result;
    auto eval = [&](const std::vector<double>& x) {
        ++result.evaluations;
        const double v = objective(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };

    std::vector<std::vector<double>> simplex(dim + 1, start);
    for (std::size_t j = 0; j < dim; ++j) simplex[j + 1][j] += opt.initial_step;
    std::vector<double> fv(dim + 1);
    for (std::size_t j = 0; j <= dim; ++j) fv[j] = eval(simplex[j]);

    std::vector<std::size_t> order(dim + 1);
    auto sort_simplex = [&] {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        std::vector<std::vector<double>> s(dim + 1);
        std::vector<double> f(dim + 1);
        for (std::size_t j = 0; j <= dim; ++j) {
            s[j] = std::move(simplex[order[j]]);
            f[j] = fv[order[j]];
        }
        simplex = std::move(s);
        fv = std::move(f);
    };
    auto diameter = [&] {
        double d2 = 0;
        for (std::size_t a = 0; a <= dim; ++a)
            for (std::size_t b = a + 1; b <= dim; ++b) {
                double s = 0;
                for (std::size_t k = 0; k < dim; ++k) {
                    const double t = simplex[a][k] - simplex[b][k];
                    s += t * t;
                }
                d2 = std::max(d2, s);
            }
        return std::sqrt(d2);
    };
    auto point = [&](const std::vector<double>& centroid, double coeff) {
        std::vector<double> p(dim);
        for (std::size_t k = 0; k < dim; ++k) p[k] = centroid[k] + coeff * (simplex[dim][k] - centroid[k]);
        return p;
    };

    std::deque<double> history;  // best value at the start of each iteration
    sort_simplex();
    while (result.iterations < opt.max_iterations) {
        history.push_back(fv[0]);
        if (history.size() > 2 * dim + 1) history.pop_front();
        if (history.size() == 2 * dim + 1 && history.front() - fv[0] < opt.f_tol && diameter() < opt.x_tol) {
            result.converged = true;
            break;
        }
        ++result.iterations;

        std::vector<double> centroid(dim, 0.0);
        for (std::size_t j = 0; j < dim; ++j)
            for (std::size_t k = 0; k < dim; ++k) centroid[k] += simplex[j][k];
        for (double& c : centroid) c /= static_cast<double>(dim);

        const auto xr = point(centroid, -1.0);
        const double fr = eval(xr);
        if (fr < fv[0]) {
            const auto xe = point(centroid, -2.0);
            const double fe = eval(xe);
            if (fe < fr) {
                simplex[dim] = xe;
                fv[dim] = fe;
            } else {
                simplex[dim] = xr;
                fv[dim] = fr;
            }
        } else if (fr < fv[dim - 1]) {
            simplex[dim] = xr;
            fv[dim] = fr;
        } else {
            const bool outside = fr < fv[dim];
            const auto xc = point(centroid, outside ? -0.5 : 0.5);
            const double fc = eval(xc);
            if (fc < (outside ? fr : fv[dim])) {
                simplex[dim] = xc;
                fv[dim] = fc;
            } else {
                for (std::size_t j = 1; j <= dim; ++j) {
                    for (std::size_t k = 0; k < dim; ++k)
                        simplex[j][k] = simplex[0][k] + 0.5 * (simplex[j][k] - simplex[0][k]);
                    fv[j] = eval(simplex[j]);
                }
            }
        }
        sort_simplex();
    }

    result.x = simplex[0];
    result.f = fv[0];
    return result;
}

} // namespace spcal
