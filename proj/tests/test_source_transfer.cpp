#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spcal/source_transfer.hpp"

using namespace spcal;

namespace {

constexpr double year = seconds_per_year;

SourceState source(double flux, double deg_years = infinite_duration)
{
    SourceState s;
    s.flux_ref = flux;
    s.t_ref = 1000.0;
    s.deg_time_const = std::isinf(deg_years) ? infinite_duration : deg_years * year;
    return s;
}

MeasurementPoint point(double t, double mean, double err = 0)
{
    MeasurementPoint p;
    p.t = t;
    p.mean_events = mean;
    p.mean_events_err = err;
    return p;
}

std::vector<MeasurementPoint> series(const SourceState& truth, double eta, std::size_t n, double span_years,
                                     double rel_noise, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, rel_noise);
    std::vector<MeasurementPoint> out;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = truth.t_ref + span_years * year * static_cast<double>(k) / static_cast<double>(n - 1);
        const double clean = eta * flux_at(truth, t);
        out.push_back(point(t, clean * (1.0 + (rel_noise > 0 ? g(rng) : 0.0)), clean * rel_noise));
    }
    return out;
}

} // namespace

TEST(FluxAt, ReferenceEpoch)
{
    EXPECT_EQ(flux_at(source(7.5, 3.0), 1000.0), 7.5);
}

TEST(FluxAt, HalfLifeHalvesFlux)
{
    const auto s = source(10.0);
    EXPECT_NEAR(flux_at(s, s.t_ref + 12.32 * year), 5.0, 5.0 * 1e-12);
    for (int n = 1; n <= 6; ++n) {
        const double expected = 10.0 * std::pow(2.0, -n);
        EXPECT_NEAR(flux_at(s, s.t_ref + n * s.half_life), expected, expected * 1e-12);
    }
}

TEST(FluxAt, DecayTimesDegradationAfterOneYear)
{
    const auto s = source(1.0, 20.0);
    const double expected = std::pow(2.0, -1.0 / 12.32) * std::exp(-1.0 / 20.0);
    EXPECT_NEAR(flux_at(s, s.t_ref + year), expected, 1e-15);
    EXPECT_NEAR(flux_at(s, s.t_ref + year), 0.8992, 5e-5);
}

TEST(FluxAt, StrictlyDecreasing)
{
    const auto s = source(3.0, 5.0);
    double previous = flux_at(s, s.t_ref - year);
    for (double t = s.t_ref - year + 0.1 * year; t < s.t_ref + 30 * year; t += 0.37 * year) {
        const double f = flux_at(s, t);
        EXPECT_LT(f, previous);
        previous = f;
    }
}

TEST(Calibrate, SinglePointExamples)
{
    const auto model = source(0.0);
    const std::vector<MeasurementPoint> a{point(model.t_ref, 10.0)};
    EXPECT_DOUBLE_EQ(calibrate_source(a, 1.0, 0.0, model).flux_ref, 10.0);
    const std::vector<MeasurementPoint> b{point(model.t_ref, 5.0)};
    EXPECT_DOUBLE_EQ(calibrate_source(b, 0.5, 0.0, model).flux_ref, 10.0);
}

TEST(Calibrate, DecayCorrectsToReferenceEpoch)
{
    const auto truth = source(8.0, 15.0);
    const auto pts = series(truth, 0.25, 6, 3.0, 0.0, 1);
    const auto cal = calibrate_source(pts, 0.25, 0.0, source(0.0, 15.0));
    EXPECT_NEAR(cal.flux_ref, 8.0, 8.0 * 1e-12);
    EXPECT_NEAR(cal.flux_ref_err, 0.0, 1e-12);
}

TEST(Calibrate, ErrorPropagation)
{
    const auto model = source(0.0);
    const std::vector<MeasurementPoint> pts{point(model.t_ref, 4.0, 0.2), point(model.t_ref, 4.4, 0.2)};
    const auto cal = calibrate_source(pts, 0.5, 0.05, model);
    EXPECT_NEAR(cal.flux_ref, 8.4, 1e-12);
    const double stat = std::sqrt(1.0 / (2.0 / (0.4 * 0.4)));
    const double sys = 8.4 * 0.05 / 0.5;
    EXPECT_NEAR(cal.flux_ref_err, std::hypot(stat, sys), 1e-12);
}

TEST(Calibrate, Errors)
{
    const auto model = source(0.0);
    const std::vector<MeasurementPoint> pts{point(0, 1)};
    try {
        calibrate_source(pts, 0.0, 0.0, model);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::zero_efficiency);
    }
    EXPECT_THROW(calibrate_source(pts, 1.2, 0.0, model), Error);
    try {
        calibrate_source(std::vector<MeasurementPoint>{}, 0.5, 0.0, model);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::empty_input);
    }
}

TEST(Transfer, Examples)
{
    const auto s = source(6.0, 10.0);
    const double t = s.t_ref + 2 * year;
    EXPECT_NEAR(transfer_efficiency(point(t, flux_at(s, t)), s).eta, 1.0, 1e-15);
    EXPECT_NEAR(transfer_efficiency(point(t, 0.5 * flux_at(s, t)), s).eta, 0.5, 1e-15);
}

TEST(Transfer, FlagsUnphysicalEfficiency)
{
    const auto s = source(2.0);
    const auto r = transfer_efficiency(point(s.t_ref, 3.0), s);
    EXPECT_DOUBLE_EQ(r.eta, 1.5);
    EXPECT_FALSE(r.valid);
    EXPECT_TRUE(transfer_efficiency(point(s.t_ref, 1.0), s).valid);
}

TEST(Transfer, ErrorPropagation)
{
    auto s = source(10.0);
    s.flux_ref_err = 0.5;
    const auto r = transfer_efficiency(point(s.t_ref, 3.0, 0.3), s);
    EXPECT_NEAR(r.eta, 0.3, 1e-15);
    EXPECT_NEAR(r.eta_err, std::hypot(0.03, 0.3 * 0.05), 1e-15);
}

TEST(Transfer, RoundTripReproducesReferenceCamera)
{
    const auto truth = source(8.0, 20.0);
    const double eta_a = 0.243;
    const auto pts = series(truth, eta_a, 5, 1.0, 0.01, 3);
    auto model = truth;
    model.flux_ref = 0;
    const auto cal = calibrate_source(pts, eta_a, 0.002, model);
    for (const auto& p : pts) {
        const auto r = transfer_efficiency(p, cal);
        EXPECT_NEAR(r.eta, eta_a, 3 * std::hypot(r.eta_err, eta_a * 0.01));
    }
}

TEST(Transfer, ZeroFlux)
{
    try {
        transfer_efficiency(point(0, 1), source(0.0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::zero_flux);
    }
}

TEST(Degradation, PureDecayGivesInfiniteConstant)
{
    const auto truth = source(5.0);
    const auto pts = series(truth, 1.0, 10, 4.0, 0.0, 0);
    const auto f = fit_degradation(pts, source(5.0));
    EXPECT_TRUE(std::isinf(f.deg_time_const));
}

TEST(Degradation, ExcessGrowthAlsoGivesInfiniteConstant)
{
    const auto base = source(5.0);
    std::vector<MeasurementPoint> pts;
    for (int k = 0; k < 5; ++k) {
        const double t = base.t_ref + k * year;
        pts.push_back(point(t, flux_at(base, t) * (1 + 0.01 * k)));
    }
    const auto f = fit_degradation(pts, base);
    EXPECT_TRUE(std::isinf(f.deg_time_const));
    EXPECT_LT(f.excess_rate, 0);
}

TEST(Degradation, NoiselessRecoveryIsExact)
{
    const auto truth = source(5.0, 20.0);
    const auto pts = series(truth, 1.0, 20, 2.0, 0.0, 0);
    const auto f = fit_degradation(pts, source(5.0));
    EXPECT_NEAR(f.deg_time_const / year, 20.0, 20.0 * 1e-6);
}

TEST(Degradation, NoisyRecoveryIsUnbiasedWithHonestErrors)
{
    // 20 points over 2 years at 1% noise: the slope error is about 7% of the
    // 0.05/year excess rate, so single draws scatter by several percent.
    const auto truth = source(5.0, 20.0);
    const int trials = 400;
    double sum = 0, sum2 = 0, reported = 0;
    int within = 0;
    for (int seed = 0; seed < trials; ++seed) {
        const auto pts = series(truth, 0.3, 20, 2.0, 0.01, 100 + static_cast<std::uint64_t>(seed));
        const auto f = fit_degradation(pts, source(1.0));
        ASSERT_TRUE(std::isfinite(f.deg_time_const)) << seed;
        const double rate = f.excess_rate * year;
        sum += rate;
        sum2 += rate * rate;
        reported += f.deg_err * f.excess_rate * f.excess_rate * year;  // back to a rate error
        within += std::abs(f.deg_time_const / year - 20.0) < 1.0;
    }
    const double mean = sum / trials;
    const double sd = std::sqrt(sum2 / trials - mean * mean);
    EXPECT_NEAR(mean, 0.05, 3 * sd / std::sqrt(trials));
    EXPECT_NEAR(sd, reported / trials, 0.15 * sd);
    EXPECT_NEAR(sd / 0.05, 0.0737, 0.01);
    // fraction inside +-5% of the time constant, predicted from the normal law of the rate
    auto cdf = [&](double r) { return 0.5 * std::erfc(-(r - 0.05) / (sd * std::sqrt(2.0))); };
    const double predicted = cdf(0.05 / 0.95) - cdf(0.05 / 1.05);
    EXPECT_NEAR(static_cast<double>(within) / trials, predicted, 0.08);
}

TEST(Degradation, Errors)
{
    const auto s = source(1.0);
    const std::vector<MeasurementPoint> two{point(0, 1), point(1, 1)};
    try {
        fit_degradation(two, s);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::insufficient_points);
    }
    const std::vector<MeasurementPoint> same{point(5, 1), point(5, 2), point(5, 3)};
    try {
        fit_degradation(same, s);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::degenerate_times);
    }
}
