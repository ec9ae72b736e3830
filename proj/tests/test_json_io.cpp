#include <gtest/gtest.h>

#include <sstream>

#include "spcal/json_io.hpp"

using namespace spcal;

namespace {

// Serialize to text and parse back, as the command-line tool does.
json through_text(const json& j) { return json::parse(j.dump(2)); }

} // namespace

TEST(Json, TwinBeamParamsRoundTrip)
{
    TwinBeamParams p;
    p.pair_modes = 1.25;
    p.pair_mean = 0.1 + 0.2;  // not exactly representable in short decimal form
    p.noise_mean_s = 1.0 / 3.0;
    p.eta_s = 0.243;
    p.eta_i = 0.235;
    p.dark_i = 1e-7;
    EXPECT_EQ(twin_beam_from_json(through_text(to_json(p))), p);
}

TEST(Json, TwinBeamPartialOverridesBase)
{
    TwinBeamParams base;
    base.eta_s = 0.4;
    const auto p = twin_beam_from_json(json{{"eta_i", 0.7}}, base);
    EXPECT_EQ(p.eta_s, 0.4);
    EXPECT_EQ(p.eta_i, 0.7);
    EXPECT_THROW(twin_beam_from_json(json{{"eta_i", "high"}}), Error);
}

TEST(Json, FitResultRoundTrip)
{
    FitResult r;
    r.params.eta_s = 0.2431234567891;
    r.params.pair_mean = 3.3;
    r.residual = 1.5e-4;
    r.eta_s_err = 0.004;
    r.eta_i_err = 0.0041;
    r.n_evaluations = 123456;
    r.converged = true;
    r.fixed_mask = fixed_mask_from_names({"eta_s", "eta_i", "pair_mean"}, true);
    const auto j = through_text(to_json(r));
    EXPECT_EQ(j.at("uncertainty_method"), "bootstrap");
    EXPECT_EQ(j.at("free").size(), 3u);
    EXPECT_EQ(fit_result_from_json(j), r);
}

TEST(Json, FixedMaskNames)
{
    const auto m = fixed_mask_from_names({"dark_s"}, false);
    EXPECT_TRUE(m.test(static_cast<std::size_t>(Param::dark_s)));
    EXPECT_EQ(m.count(), 1u);
    EXPECT_EQ(fixed_mask_from_names({"dark_s"}, true).count(), param_count - 1);
    EXPECT_THROW(fixed_mask_from_names({"eta_x"}, false), Error);
}

TEST(Json, SourceStateRoundTripIncludingInfinity)
{
    SourceState s;
    s.flux_ref = 8.0123;
    s.flux_ref_err = 0.07;
    s.t_ref = 1.7e9;
    const auto j = through_text(to_json(s));
    EXPECT_TRUE(j.at("deg_time_const").is_null());
    EXPECT_EQ(source_state_from_json(j), s);
    s.deg_time_const = 20 * seconds_per_year;
    EXPECT_EQ(source_state_from_json(through_text(to_json(s))), s);
    EXPECT_TRUE(std::isinf(source_state_from_json(json{{"deg_time_const", "inf"}}).deg_time_const));
}

TEST(Json, MeasurementSeriesRoundTrip)
{
    std::vector<MeasurementPoint> pts{{0.5, 1.25, 0.01, "e1", "A"}, {3e7, 1.1, 0.02, "e2", "B"}};
    EXPECT_EQ(measurements_from_json(through_text(to_json(pts))), pts);
    const json bare = json::array({to_json(pts[0])});
    EXPECT_EQ(measurements_from_json(bare).front(), pts[0]);
}

TEST(Json, MeasurementTsv)
{
    std::vector<MeasurementPoint> pts{{0.1, 2.0 / 3.0, 0.01, "0", ""}, {31557600.5, 0.6, 0.0, "1", ""}};
    std::stringstream ss;
    write_measurements_tsv(ss, pts);
    const auto back = read_measurements_tsv(ss);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back, pts);

    std::stringstream two_columns("# comment\n5\t1.5\n\n6\t1.4\n");
    const auto p = read_measurements_tsv(two_columns);
    ASSERT_EQ(p.size(), 2u);
    EXPECT_EQ(p[1].t, 6.0);
    EXPECT_EQ(p[1].mean_events_err, 0.0);

    std::stringstream bad("abc\t1\n");
    EXPECT_THROW(read_measurements_tsv(bad), Error);
}

TEST(Json, CameraConfigRoundTrip)
{
    CameraConfig c;
    c.width = 300;
    c.signal_region = {1, 2, 30, 40};
    c.readout_sigma = 17.5;
    c.efficiency = 0.3;
    const auto back = camera_from_json(through_text(to_json(c)));
    EXPECT_EQ(back.width, c.width);
    EXPECT_EQ(back.signal_region, c.signal_region);
    EXPECT_EQ(back.idler_region, c.idler_region);
    EXPECT_EQ(back.readout_sigma, c.readout_sigma);
    EXPECT_EQ(back.efficiency, c.efficiency);
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_THROW(camera_from_json(json{{"signal_region", {1, 2, 3}}}), Error);
}

TEST(Json, PipelineAndFitOptionsRoundTrip)
{
    PipelineConfig p;
    p.threshold_k = 4.5;
    p.connectivity = 4;
    p.min_pixels = 3;
    p.signal_region = {0, 0, 5, 5};
    EXPECT_EQ(to_json(pipeline_from_json(through_text(to_json(p)))), to_json(p));

    FitOptions o;
    o.restarts = 3;
    o.seed = 99;
    o.simplex.x_tol = 1e-9;
    EXPECT_EQ(to_json(fit_options_from_json(through_text(to_json(o)))), to_json(o));
}

TEST(Json, TransferAndDegradationRoundTrip)
{
    const TransferResult t{0.3012, 0.0045, true};
    EXPECT_EQ(transfer_result_from_json(through_text(to_json(t))), t);
    const DegradationFit d{20.1 * seconds_per_year, 1.2e7, 1.0 / (20.1 * seconds_per_year)};
    EXPECT_EQ(degradation_from_json(through_text(to_json(d))), d);
    const DegradationFit none{};
    EXPECT_EQ(degradation_from_json(through_text(to_json(none))), none);
}
