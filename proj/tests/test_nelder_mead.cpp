#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "spcal/nelder_mead.hpp"

using spcal::nelder_mead;
using spcal::NelderMeadOptions;

TEST(NelderMead, QuadraticBowl)
{
    auto f = [](const std::vector<double>& x) {
        return (x[0] - 1.0) * (x[0] - 1.0) + 4.0 * (x[1] + 2.0) * (x[1] + 2.0) + 3.0;
    };
    const auto r = nelder_mead(f, {5.0, 5.0});
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.x[0], 1.0, 1e-7);
    EXPECT_NEAR(r.x[1], -2.0, 1e-7);
    EXPECT_NEAR(r.f, 3.0, 1e-12);
}

TEST(NelderMead, Rosenbrock)
{
    auto f = [](const std::vector<double>& x) {
        return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
    };
    const auto r = nelder_mead(f, {-1.2, 1.0});
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.x[0], 1.0, 1e-6);
    EXPECT_NEAR(r.x[1], 1.0, 1e-6);
}

TEST(NelderMead, OneDimension)
{
    const auto r = nelder_mead([](const std::vector<double>& x) { return std::cosh(x[0] - 0.3); }, {4.0});
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.x[0], 0.3, 1e-6);
}

TEST(NelderMead, NonFiniteRegionsAreAvoided)
{
    auto f = [](const std::vector<double>& x) {
        if (x[0] < 0) return std::numeric_limits<double>::quiet_NaN();
        return (x[0] - 0.5) * (x[0] - 0.5) + x[1] * x[1];
    };
    const auto r = nelder_mead(f, {0.1, 1.0});
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.x[0], 0.5, 1e-6);
    EXPECT_TRUE(std::isfinite(r.f));
}

TEST(NelderMead, IterationLimitReportsNotConverged)
{
    NelderMeadOptions opt;
    opt.max_iterations = 5;
    auto f = [](const std::vector<double>& x) { return x[0] * x[0] + x[1] * x[1]; };
    const auto r = nelder_mead(f, {3.0, 3.0}, opt);
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.iterations, 5u);
    EXPECT_LT(r.f, 18.0);
}

TEST(NelderMead, DeterministicAndCountsEvaluations)
{
    std::size_t calls = 0;
    auto f = [&calls](const std::vector<double>& x) {
        ++calls;
        return std::pow(x[0] - 2, 4) + std::pow(x[1], 2) + std::pow(x[2] + 1, 2);
    };
    const auto a = nelder_mead(f, {0.0, 0.0, 0.0});
    EXPECT_EQ(a.evaluations, calls);
    const auto b = nelder_mead(f, {0.0, 0.0, 0.0});
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.f, b.f);
    EXPECT_EQ(a.iterations, b.iterations);
}

TEST(NelderMead, RejectsEmptyStart)
{
    EXPECT_THROW(nelder_mead([](const std::vector<double>&) { return 0.0; }, {}), spcal::Error);
}
