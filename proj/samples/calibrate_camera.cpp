// Library walk-through: simulate twin-beam frames, count events, fit the
// efficiencies and carry the result over to a second camera via a source.

#include <cstdio>
#include <vector>

#include "spcal/spcal.hpp"

int main()
{
    using namespace spcal;

    TwinBeamParams truth;
    truth.pair_modes = 1.0;
    truth.pair_mean = 1.0;
    truth.noise_mean_s = truth.noise_mean_i = 0.05;
    truth.eta_s = 0.243;
    truth.eta_i = 0.235;

    CameraConfig cam;  // 128x64 sensor with two 48x48 arms
    const std::uint64_t seed = 7;

    // background from dark frames, then the pair frames
    const auto dark = simulate_source_frames(0.0, cam, 200, seed + 1);
    PipelineConfig pipe;
    pipe.threshold_k = 5.0;
    pipe.min_pixels = 2;
    pipe.signal_region = cam.signal_region.expanded(2);
    pipe.idler_region = cam.idler_region.expanded(2);
    pipe.background = average_background(dark);

    const std::size_t n_frames = 100000;
    JointHistogram hist(20);
    for (std::size_t k = 0; k < n_frames; ++k)
        add_to_histogram(hist, process_frame(simulate_pair_frame(truth, cam, seed, k), pipe));

    // the ratio estimate is only unbiased for sparse pairs; at one pair per frame it reads high
    const auto ratio = klyshko_efficiency(hist);
    std::printf("ratio estimate: eta_s %.4f  eta_i %.4f\n", ratio.eta_s, ratio.eta_i);

    TwinBeamParams init;
    init.pair_mean = 0.5;
    init.noise_mean_s = init.noise_mean_i = 0.1;
    init.eta_s = init.eta_i = 0.5;
    const auto r = fit(hist, init);
    std::printf("fit:            eta_s %.4f  eta_i %.4f  (D = %.3g, %s)\n", r.params.eta_s, r.params.eta_i,
                r.residual, r.converged ? "converged" : "not converged");

    // source seen by the calibrated signal arm, then by camera B
    SourceState model;
    model.t_ref = 0.0;
    const double flux = 8.0;
    const std::vector<MeasurementPoint> with_a{{0.0, r.params.eta_s * flux, 0.01, "a0", "A"}};
    const auto src = calibrate_source(with_a, r.params.eta_s, 0.01, model);
    const double t_b = 0.5 * seconds_per_year;
    const MeasurementPoint with_b{t_b, 0.30 * flux_at(src, t_b), 0.0, "b0", "B"};
    const auto b = transfer_efficiency(with_b, src);
    std::printf("source flux %.4f +- %.4f, camera B eta %.4f +- %.4f\n", src.flux_ref, src.flux_ref_err, b.eta,
                b.eta_err);
    return 0;
}
