#pragma once

// Least-squares recovery of twin-beam parameters (most importantly the two
// detection efficiencies) from a measured joint photocount histogram.
//
// The distance minimized is D = sqrt(sum over cells of (p_model - f)^2).
// Parameters are optimized in an unbounded space: logit for efficiencies,
// log for mode counts, means and dark rates.

#include <array>
#include <bitset>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "spcal/detector_sim.hpp"
#include "spcal/error.hpp"
#include "spcal/frame_pipeline.hpp"
#include "spcal/nelder_mead.hpp"
#include "spcal/parallel.hpp"
#include "spcal/photocount_model.hpp"

namespace spcal {

enum class Param : std::size_t {
    pair_modes,
    pair_mean,
    noise_modes_s,
    noise_modes_i,
    noise_mean_s,
    noise_mean_i,
    eta_s,
    eta_i,
    dark_s,
    dark_i,
};

inline constexpr std::size_t param_count = 10;

inline constexpr std::array<std::string_view, param_count> param_names{
    "pair_modes", "pair_mean", "noise_modes_s", "noise_modes_i", "noise_mean_s",
    "noise_mean_i", "eta_s", "eta_i", "dark_s", "dark_i"};

/// Bit k set means parameter k is held fixed during a fit.
using FixedMask = std::bitset<param_count>;

inline double& param_ref(TwinBeamParams& p, Param which)
{
    switch (which) {
    case Param::pair_modes: return p.pair_modes;
    case Param::pair_mean: return p.pair_mean;
    case Param::noise_modes_s: return p.noise_modes_s;
    case Param::noise_modes_i: return p.noise_modes_i;
    case Param::noise_mean_s: return p.noise_mean_s;
    case Param::noise_mean_i: return p.noise_mean_i;
    case Param::eta_s: return p.eta_s;
    case Param::eta_i: return p.eta_i;
    case Param::dark_s: return p.dark_s;
    case Param::dark_i: return p.dark_i;
    }
    return p.pair_modes;
}

inline double param_value(const TwinBeamParams& p, Param which)
{
    return param_ref(const_cast<TwinBeamParams&>(p), which);
}

/// Noise mode counts and dark rates fixed; efficiencies, pair field and noise means free.
inline FixedMask default_fixed_mask()
{
    FixedMask m;
    m.set(static_cast<std::size_t>(Param::noise_modes_s));
    m.set(static_cast<std::size_t>(Param::noise_modes_i));
    m.set(static_cast<std::size_t>(Param::dark_s));
    m.set(static_cast<std::size_t>(Param::dark_i));
    return m;
}

struct FitOptions {
    std::size_t restarts = 8;
    std::uint64_t seed = 1;
    double restart_spread = 0.5;  ///< std of restart perturbations in transformed space
    NelderMeadOptions simplex{};
    unsigned threads = 1;
};

struct FitResult {
    TwinBeamParams params;
    double residual = 0;  ///< D at the optimum
    double eta_s_err = 0; ///< bootstrap standard deviation, 0 when not computed
    double eta_i_err = 0;
    std::size_t n_evaluations = 0;
    bool converged = false;
    FixedMask fixed_mask = default_fixed_mask();

    friend bool operator==(const FitResult&, const FitResult&) = default;
};

namespace detail {

inline constexpr double transform_floor = 1e-12;

inline bool is_efficiency(Param p) { return p == Param::eta_s || p == Param::eta_i; }

inline double to_unbounded(Param which, double v)
{
    if (is_efficiency(which)) {
        const double e = std::clamp(v, transform_floor, 1.0 - transform_floor);
        return std::log(e / (1.0 - e));
    }
    return std::log(std::max(v, transform_floor));
}

inline double from_unbounded(Param which, double z)
{
    if (is_efficiency(which)) return 1.0 / (1.0 + std::exp(-z));
    return std::exp(z);
}

inline std::vector<Param> free_params(const FixedMask& fixed)
{
    std::vector<Param> out;
    for (std::size_t k = 0; k < param_count; ++k)
        if (!fixed.test(k)) out.push_back(static_cast<Param>(k));
    return out;
}

inline std::vector<double> histogram_frequencies(const JointHistogram& hist)
{
    std::vector<double> f(hist.counts.size());
    for (std::size_t k = 0; k < f.size(); ++k)
        f[k] = static_cast<double>(hist.counts[k]) / static_cast<double>(hist.n_frames);
    return f;
}

inline double distance(const JointDistribution& model, std::span<const double> freq)
{
    double sum = 0;
    for (std::size_t k = 0; k < freq.size(); ++k) {
        const double d = model.probs[k] - freq[k];
        sum += d * d;
    }
    return std::sqrt(sum);
}

/// D as a function of the free transformed coordinates; +inf where the model is undefined.
class TransformedObjective {
public:
    TransformedObjective(const JointHistogram& hist, const TwinBeamParams& base, std::vector<Param> free)
        : c_max_(hist.c_max), freq_(histogram_frequencies(hist)), base_(base), free_(std::move(free))
    {
    }

    TwinBeamParams params_at(const std::vector<double>& z) const
    {
        TwinBeamParams p = base_;
        for (std::size_t k = 0; k < free_.size(); ++k) param_ref(p, free_[k]) = from_unbounded(free_[k], z[k]);
        return p;
    }

    std::vector<double> coordinates(const TwinBeamParams& p) const
    {
        std::vector<double> z(free_.size());
        for (std::size_t k = 0; k < free_.size(); ++k) z[k] = to_unbounded(free_[k], param_value(p, free_[k]));
        return z;
    }

    /// Where the histogram's c_max truncates too much model mass, the model is
    /// evaluated on a larger grid and cells beyond c_max enter with f = 0, so
    /// the sum still runs over every cell carrying mass.
    double operator()(const std::vector<double>& z) const
    {
        TwinBeamParams p;
        try {
            p = params_at(z);
            p.validate();
        } catch (const Error&) {
            return std::numeric_limits<double>::infinity();
        }
        for (std::size_t c = c_max_; c <= max_model_c_max; c *= 2) {
            try {
                return extended_distance(joint_photocount_dist(p, c));
            } catch (const Error&) {
            }
        }
        return std::numeric_limits<double>::infinity();
    }

private:
    static constexpr std::size_t max_model_c_max = 640;

    double extended_distance(const JointDistribution& model) const
    {
        if (model.c_max == c_max_) return distance(model, freq_);
        const std::size_t side = c_max_ + 1;
        double sum = 0;
        for (std::size_t s = 0; s < model.side(); ++s)
            for (std::size_t i = 0; i < model.side(); ++i) {
                const double f = (s < side && i < side) ? freq_[s * side + i] : 0.0;
                const double d = model(s, i) - f;
                sum += d * d;
            }
        return std::sqrt(sum);
    }

    std::size_t c_max_;
    std::vector<double> freq_;
    TwinBeamParams base_;
    std::vector<Param> free_;
};

inline void require_usable(const JointHistogram& hist)
{
    require(hist.n_frames > 0, ErrorKind::empty_histogram, "histogram has no frames");
    require(hist.total() == hist.n_frames, ErrorKind::invalid_parameter, "histogram counts do not sum to n_frames");
}

} // namespace detail

/// D = sqrt(sum_{c_s,c_i <= c_max} (p_c - f)^2) with p_c evaluated at the histogram's c_max.
inline double objective(const TwinBeamParams& params, const JointHistogram& hist)
{
    detail::require_usable(hist);
    const auto model = joint_photocount_dist(params, hist.c_max);
    return detail::distance(model, detail::histogram_frequencies(hist));
}

/// Multi-start simplex minimization of D over the free parameters.
///
/// Restart 0 starts at `init`; the others start from seeded Gaussian
/// perturbations of it in transformed space. Every run is re-launched once
/// from its end point. The best run wins; near-ties (|dD| < 1e-14) go to the
/// smaller eta_s.
inline FitResult fit(const JointHistogram& hist, const TwinBeamParams& init, const FixedMask& fixed = default_fixed_mask(),
                     const FitOptions& options = {})
{
    detail::require_usable(hist);
    init.validate();
    const auto free = detail::free_params(fixed);
    detail::require(!free.empty(), ErrorKind::invalid_parameter, "at least one parameter must be free");
    detail::require(hist.at(0, 0) != hist.n_frames, ErrorKind::degenerate_histogram, "all histogram mass at (0,0)");
    detail::require(options.restarts >= 1, ErrorKind::invalid_parameter, "restarts must be >= 1");

    const detail::TransformedObjective fn(hist, init, free);
    const auto z0 = fn.coordinates(init);

    struct Run {
        NelderMeadResult nm;
        std::size_t evaluations = 0;
    };
    std::vector<Run> runs(options.restarts);
    parallel_for(options.restarts, options.threads, [&](std::size_t r) {
        auto start = z0;
        if (r > 0) {
            auto rng = detail::frame_engine(options.seed, r);
            std::normal_distribution<double> jitter(0.0, options.restart_spread);
            for (double& z : start) z += jitter(rng);
        }
        auto first = nelder_mead(fn, start, options.simplex);
        auto polish_opts = options.simplex;
        polish_opts.initial_step = std::max(options.simplex.initial_step * 0.1, 10 * options.simplex.x_tol);
        auto second = nelder_mead(fn, first.x, polish_opts);
        runs[r].evaluations = first.evaluations + second.evaluations;
        runs[r].nm = std::move(second);
    });

    std::size_t best = 0;
    std::size_t evaluations = 0;
    for (std::size_t r = 0; r < runs.size(); ++r) {
        evaluations += runs[r].evaluations;
        if (r == 0) continue;
        const double df = runs[r].nm.f - runs[best].nm.f;
        if (df < -1e-14) {
            best = r;
        } else if (std::abs(df) <= 1e-14 &&
                   fn.params_at(runs[r].nm.x).eta_s < fn.params_at(runs[best].nm.x).eta_s) {
            best = r;
        }
    }

    FitResult out;
    out.params = fn.params_at(runs[best].nm.x);
    out.residual = runs[best].nm.f;
    out.n_evaluations = evaluations;
    out.converged = runs[best].nm.converged && std::isfinite(out.residual);
    out.fixed_mask = fixed;
    return out;
}

/// What a bootstrap refit needs: start point, mask, optimizer options and histogram size.
struct FitSpec {
    TwinBeamParams init;
    FixedMask fixed = default_fixed_mask();
    FitOptions options{};
    std::size_t c_max = default_c_max;
};

struct BootstrapResult {
    double eta_s_err = 0;
    double eta_i_err = 0;
    std::vector<double> eta_s_samples;
    std::vector<double> eta_i_samples;
};

/// Standard deviation of the fitted efficiencies over `n_resamples` resamples
/// (with replacement) of the per-frame counts. Each resample is refitted from
/// spec.init (normally the point estimate) with spec.options, one thread per
/// refit; resamples run in parallel.
inline BootstrapResult bootstrap_errors(std::span<const FrameCounts> frame_counts, const FitSpec& spec,
                                        std::size_t n_resamples, std::uint64_t seed)
{
    detail::require(frame_counts.size() >= 2, ErrorKind::too_few_frames, "bootstrap needs at least 2 frames");
    detail::require(n_resamples >= 2, ErrorKind::invalid_parameter, "bootstrap needs at least 2 resamples");

    FitOptions single = spec.options;
    single.threads = 1;

    BootstrapResult out;
    out.eta_s_samples.assign(n_resamples, 0.0);
    out.eta_i_samples.assign(n_resamples, 0.0);
    parallel_for(n_resamples, spec.options.threads, [&](std::size_t r) {
        auto rng = detail::frame_engine(seed, r);
        std::uniform_int_distribution<std::size_t> pick(0, frame_counts.size() - 1);
        JointHistogram hist(spec.c_max);
        for (std::size_t k = 0; k < frame_counts.size(); ++k) add_to_histogram(hist, frame_counts[pick(rng)]);
        const auto res = fit(hist, spec.init, spec.fixed, single);
        out.eta_s_samples[r] = res.params.eta_s;
        out.eta_i_samples[r] = res.params.eta_i;
    });

    auto stddev = [](const std::vector<double>& v) {
        double mean = 0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return std::sqrt(ss / static_cast<double>(v.size() - 1));
    };
    out.eta_s_err = stddev(out.eta_s_samples);
    out.eta_i_err = stddev(out.eta_i_samples);
    return out;
}

} // namespace spcal
