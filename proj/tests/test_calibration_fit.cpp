#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "spcal/calibration_fit.hpp"
#include "spcal/frame_pipeline.hpp"

using namespace spcal;

namespace {

std::vector<FrameCounts> sample_counts(const TwinBeamParams& p, std::size_t n, std::uint64_t seed)
{
    oracle::TwinBeamSampler sampler(p, seed);
    std::vector<FrameCounts> out(n);
    for (auto& c : out) {
        const auto [s, i] = sampler();
        c = {s, i};
    }
    return out;
}

JointHistogram transposed(const JointHistogram& h)
{
    JointHistogram t = h;
    for (std::size_t s = 0; s < h.side(); ++s)
        for (std::size_t i = 0; i < h.side(); ++i) t.at(i, s) = h.at(s, i);
    return t;
}

TwinBeamParams typical()
{
    TwinBeamParams p;
    p.pair_modes = 1.0;
    p.pair_mean = 1.0;
    p.noise_mean_s = 0.1;
    p.noise_mean_i = 0.05;
    p.eta_s = 0.4;
    p.eta_i = 0.3;
    return p;
}

} // namespace

TEST(Objective, VacuumMatchesDelta)
{
    JointHistogram h(4);
    h.at(0, 0) = 10;
    h.n_frames = 10;
    EXPECT_EQ(objective(TwinBeamParams{}, h), 0.0);
}

TEST(Objective, DeltaAgainstGeometricDiagonal)
{
    JointHistogram h(32);
    h.at(0, 0) = 1;
    h.n_frames = 1;
    TwinBeamParams p;
    p.pair_mean = 1.0;
    const double d = objective(p, h);

    const auto ref = oracle::joint_by_enumeration(p, 32, 120);
    double naive = 0;
    for (std::size_t s = 0; s <= 32; ++s)
        for (std::size_t i = 0; i <= 32; ++i) {
            const double f = (s == 0 && i == 0) ? 1.0 : 0.0;
            naive += (ref[s * 33 + i] - f) * (ref[s * 33 + i] - f);
        }
    EXPECT_NEAR(d, std::sqrt(naive), 1e-12);
    EXPECT_NEAR(d, std::sqrt(1.0 / 3.0), 1e-12);  // 1/4 + sum_{n>=1} 4^-(n+1)
}

TEST(Objective, TransposeEquivariance)
{
    const auto p = typical();
    const auto counts = sample_counts(p, 5000, 3);
    const auto h = accumulate_histogram(counts, 20);
    TwinBeamParams q = p;
    q.eta_s = 0.55;
    q.noise_mean_i = 0.3;
    EXPECT_NEAR(objective(q, h), objective(q.swapped(), transposed(h)), 1e-15);
}

TEST(Objective, ShrinksWithSampleSizeAtTruth)
{
    const auto p = typical();
    const auto counts = sample_counts(p, 100000, 11);
    const std::span<const FrameCounts> all(counts);
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t n : {1000ul, 10000ul, 100000ul}) {
        const double d = objective(p, accumulate_histogram(all.first(n), 20));
        EXPECT_LT(d, previous) << n;
        previous = d;
    }
    EXPECT_LT(previous, 5e-3);
}

TEST(Objective, FiniteDifferenceGradientIsStable)
{
    const auto h = accumulate_histogram(sample_counts(typical(), 20000, 5), 25);
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> eta(0.2, 0.8), mean(0.1, 1.0), modes(1.0, 3.0), dark(0.0, 0.3);
    for (int trial = 0; trial < 5; ++trial) {
        TwinBeamParams p;
        p.pair_modes = modes(rng);
        p.pair_mean = mean(rng);
        p.noise_modes_s = modes(rng);
        p.noise_modes_i = modes(rng);
        p.noise_mean_s = mean(rng) * 0.3;
        p.noise_mean_i = mean(rng) * 0.3;
        p.eta_s = eta(rng);
        p.eta_i = eta(rng);
        p.dark_s = dark(rng);
        p.dark_i = dark(rng);
        auto gradient = [&](double step) {
            std::vector<double> g(param_count);
            for (std::size_t k = 0; k < param_count; ++k) {
                TwinBeamParams up = p, down = p;
                param_ref(up, static_cast<Param>(k)) += step;
                param_ref(down, static_cast<Param>(k)) -= step;
                g[k] = (objective(up, h) - objective(down, h)) / (2 * step);
            }
            return g;
        };
        const auto g5 = gradient(1e-5), g6 = gradient(1e-6);
        double scale = 0;
        for (double v : g5) scale = std::max(scale, std::abs(v));
        for (std::size_t k = 0; k < param_count; ++k)
            EXPECT_LT(std::abs(g5[k] - g6[k]), 1e-2 * std::max(std::abs(g5[k]), 1e-3 * scale))
                << "trial " << trial << " param " << param_names[k];
    }
}

TEST(Objective, PropagatesTruncationAndRejectsEmpty)
{
    JointHistogram h(3);
    h.at(1, 1) = 1;
    h.n_frames = 1;
    TwinBeamParams p;
    p.pair_mean = 5.0;
    try {
        objective(p, h);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::truncation_insufficient);
    }
    EXPECT_THROW(objective(TwinBeamParams{}, JointHistogram(3)), Error);
}

TEST(Fit, FixedPointAtTruth)
{
    const auto p = typical();
    const auto h = accumulate_histogram(sample_counts(p, 200000, 21), 20);
    const auto r = fit(h, p);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.residual, objective(p, h) + 1e-15);
    EXPECT_NEAR(r.params.eta_s, p.eta_s, 0.03);
    EXPECT_NEAR(r.params.eta_i, p.eta_i, 0.03);
    EXPECT_GT(r.n_evaluations, 0u);
    EXPECT_EQ(r.params.noise_modes_s, 1.0);
    EXPECT_EQ(r.params.dark_s, 0.0);
}

TEST(Fit, DeterministicAcrossThreadCounts)
{
    const auto p = typical();
    const auto h = accumulate_histogram(sample_counts(p, 20000, 22), 20);
    TwinBeamParams init;
    init.pair_mean = 0.5;
    init.eta_s = init.eta_i = 0.5;
    init.noise_mean_s = init.noise_mean_i = 0.1;
    FitOptions o1, o4;
    o4.threads = 4;
    const auto a = fit(h, init, default_fixed_mask(), o1);
    const auto b = fit(h, init, default_fixed_mask(), o4);
    EXPECT_EQ(a.params.eta_s, b.params.eta_s);
    EXPECT_EQ(a.params.eta_i, b.params.eta_i);
    EXPECT_EQ(a.residual, b.residual);
    EXPECT_EQ(a.n_evaluations, b.n_evaluations);
}

TEST(Fit, RespectsFixedMask)
{
    const auto p = typical();
    const auto h = accumulate_histogram(sample_counts(p, 20000, 23), 20);
    FixedMask only_etas;
    only_etas.set();
    only_etas.reset(static_cast<std::size_t>(Param::eta_s));
    only_etas.reset(static_cast<std::size_t>(Param::eta_i));
    TwinBeamParams init = p;
    init.eta_s = init.eta_i = 0.6;
    const auto r = fit(h, init, only_etas);
    EXPECT_EQ(r.params.pair_mean, p.pair_mean);
    EXPECT_EQ(r.params.noise_mean_s, p.noise_mean_s);
    EXPECT_NEAR(r.params.eta_s, p.eta_s, 0.03);
    EXPECT_EQ(r.fixed_mask, only_etas);
}

TEST(Fit, IterationCapReportsNotConverged)
{
    const auto h = accumulate_histogram(sample_counts(typical(), 5000, 24), 20);
    FitOptions o;
    o.restarts = 2;
    o.simplex.max_iterations = 10;
    const auto r = fit(h, typical(), default_fixed_mask(), o);
    EXPECT_FALSE(r.converged);
    EXPECT_TRUE(std::isfinite(r.residual));
}

TEST(Fit, Errors)
{
    JointHistogram vac(5);
    vac.at(0, 0) = 7;
    vac.n_frames = 7;
    try {
        fit(vac, typical());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::degenerate_histogram);
    }
    const auto h = accumulate_histogram(sample_counts(typical(), 100, 1), 20);
    FixedMask all;
    all.set();
    EXPECT_THROW(fit(h, typical(), all), Error);
    TwinBeamParams bad = typical();
    bad.eta_s = 2;
    EXPECT_THROW(fit(h, bad), Error);
    EXPECT_THROW(fit(JointHistogram(5), typical()), Error);
}

// Planted-truth harness over eta, pair mean and noise level. Each case
// draws 10^5 frames photon by photon, fits from a neutral start and checks
// the recovered efficiencies against the bootstrap spread.
TEST(Fit, PlantedGridRecoveredWithinThreeBootstrapErrors)
{
    std::uint64_t seed = 1000;
    for (double eta : {0.1, 0.5, 0.9})
        for (double pair_mean : {0.1, 0.5, 1.0})
            for (double noise : {0.0, 0.05, 0.2}) {
                TwinBeamParams truth;
                truth.pair_mean = pair_mean;
                truth.noise_mean_s = truth.noise_mean_i = noise;
                truth.eta_s = truth.eta_i = eta;
                const auto counts = sample_counts(truth, 100000, ++seed);
                const std::size_t c_max = std::max<std::size_t>(20, suggest_c_max(truth));
                const auto h = accumulate_histogram(counts, c_max);

                TwinBeamParams init;
                init.pair_mean = 0.5;
                init.noise_mean_s = init.noise_mean_i = 0.1;
                init.eta_s = init.eta_i = 0.5;
                const auto r = fit(h, init);
                FitSpec spec{r.params, default_fixed_mask(), {}, c_max};
                const auto boot = bootstrap_errors(counts, spec, 20, seed);
                SCOPED_TRACE(testing::Message() << "eta=" << eta << " B_p=" << pair_mean << " noise=" << noise
                                                << " fit=(" << r.params.eta_s << ", " << r.params.eta_i
                                                << ") err=(" << boot.eta_s_err << ", " << boot.eta_i_err << ")");
                EXPECT_LE(std::abs(r.params.eta_s - eta), 3 * boot.eta_s_err);
                EXPECT_LE(std::abs(r.params.eta_i - eta), 3 * boot.eta_i_err);
            }
}

TEST(Bootstrap, IdenticalFramesGiveZeroError)
{
    const std::vector<FrameCounts> counts(500, FrameCounts{1, 1});
    TwinBeamParams init;
    init.pair_mean = 0.5;
    FitSpec spec{init, default_fixed_mask(), {}, 10};
    spec.options.simplex.max_iterations = 500;
    const auto b = bootstrap_errors(counts, spec, 4, 9);
    EXPECT_EQ(b.eta_s_err, 0.0);
    EXPECT_EQ(b.eta_i_err, 0.0);
}

TEST(Bootstrap, ErrorShrinksWithMoreFrames)
{
    const auto p = typical();
    const auto counts = sample_counts(p, 100000, 31);
    const std::span<const FrameCounts> all(counts);
    FitSpec spec{p, default_fixed_mask(), {}, 20};
    const auto small = bootstrap_errors(all.first(2000), spec, 12, 4);
    const auto large = bootstrap_errors(all, spec, 12, 4);
    EXPECT_LT(large.eta_s_err, small.eta_s_err);
    EXPECT_LT(large.eta_i_err, small.eta_i_err);
    EXPECT_LT(large.eta_s_err, 0.05);
    EXPECT_EQ(large.eta_s_samples.size(), 12u);
}

TEST(Bootstrap, DeterministicForSeed)
{
    const auto counts = sample_counts(typical(), 3000, 41);
    FitSpec spec{typical(), default_fixed_mask(), {}, 20};
    const auto a = bootstrap_errors(counts, spec, 3, 7);
    spec.options.threads = 3;
    const auto b = bootstrap_errors(counts, spec, 3, 7);
    EXPECT_EQ(a.eta_s_samples, b.eta_s_samples);
    EXPECT_EQ(a.eta_i_samples, b.eta_i_samples);
}

TEST(Bootstrap, Errors)
{
    FitSpec spec{typical(), default_fixed_mask(), {}, 20};
    const std::vector<FrameCounts> one{{1, 1}};
    try {
        bootstrap_errors(one, spec, 5, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::too_few_frames);
    }
    const std::vector<FrameCounts> two{{1, 1}, {0, 1}};
    EXPECT_THROW(bootstrap_errors(two, spec, 1, 1), Error);
}
