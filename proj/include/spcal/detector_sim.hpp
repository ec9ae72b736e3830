#pragma once

// Seeded Monte Carlo generator of raw intensified-camera frames.
//
// Every frame owns an RNG stream derived from (seed, frame index), so a frame
// can be regenerated on its own and the output does not depend on how frame
// generation is scheduled across threads.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "spcal/error.hpp"
#include "spcal/image.hpp"
#include "spcal/parallel.hpp"
#include "spcal/photocount_model.hpp"

namespace spcal {

struct CameraConfig {
    std::size_t width = 128;
    std::size_t height = 64;
    Rect signal_region{8, 8, 48, 48};
    Rect idler_region{72, 8, 48, 48};
    double baseline = 100.0;              ///< ADU offset
    double readout_sigma = 3.0;           ///< ADU, Gaussian readout noise; 0 disables it
    double event_amplitude_mean = 400.0;  ///< ADU, total charge of one event
    double event_amplitude_sigma = 100.0; ///< ADU, log-normal spread
    double psf_radius = 1.0;              ///< px, Gaussian sigma of the event footprint
    double dark_event_rate = 0.0;         ///< mean dark events per frame per region
    double efficiency = 1.0;              ///< detection probability under flat source illumination
    std::optional<RealGrid> qe_map;       ///< optional per-pixel efficiency multiplier

    void validate() const
    {
        using detail::require;
        constexpr auto bad = ErrorKind::invalid_parameter;
        require(width > 0 && height > 0, bad, "frame must have nonzero size");
        require(signal_region.fits_in(width, height) && idler_region.fits_in(width, height), bad,
                "regions must lie within the frame");
        require(signal_region.empty() || idler_region.empty() || !signal_region.overlaps(idler_region), bad,
                "signal and idler regions must be disjoint");
        require(readout_sigma >= 0 && std::isfinite(readout_sigma), bad, "readout_sigma must be >= 0");
        require(event_amplitude_mean > 0 && event_amplitude_sigma >= 0, bad, "invalid pulse-height distribution");
        require(psf_radius >= 0, bad, "psf_radius must be >= 0");
        require(dark_event_rate >= 0, bad, "dark_event_rate must be >= 0");
        require(efficiency >= 0 && efficiency <= 1, bad, "efficiency must lie in [0, 1]");
        if (qe_map) {
            require(qe_map->same_shape(width, height), bad, "qe_map shape must match the frame");
            for (double q : qe_map->values) require(q >= 0 && q <= 1, bad, "qe_map entries must lie in [0, 1]");
        }
    }

    Region region_of(double x, double y) const noexcept
    {
        if (!signal_region.empty() && signal_region.contains(x, y)) return Region::signal;
        if (!idler_region.empty() && idler_region.contains(x, y)) return Region::idler;
        return Region::outside;
    }
};

/// One rendered event in sensor coordinates (pixel (0,0) spans [0,1)x[0,1)).
struct SimulatedEvent {
    double x = 0;
    double y = 0;
    double amplitude = 0;
    Region region = Region::full;
    bool dark = false;
};

struct FrameTruth {
    std::vector<SimulatedEvent> events;

    std::size_t count(Region r) const
    {
        return static_cast<std::size_t>(
            std::count_if(events.begin(), events.end(), [r](const SimulatedEvent& e) { return e.region == r; }));
    }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::mt19937_64 frame_engine(std::uint64_t seed, std::uint64_t index)
{
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ (index * 0xd1b54a32d192ed03ull)));
}

template <class Rng>
std::uint64_t sample_poisson(double mean, Rng& rng)
{
    if (mean <= 0) return 0;
    return static_cast<std::uint64_t>(std::poisson_distribution<long long>(mean)(rng));
}

/// Multimode thermal photon number as a gamma-mixed Poisson.
template <class Rng>
std::uint64_t sample_thermal(double modes, double mean_per_mode, Rng& rng)
{
    if (mean_per_mode <= 0) return 0;
    const double intensity = std::gamma_distribution<double>(modes, mean_per_mode)(rng);
    return sample_poisson(intensity, rng);
}

template <class Rng>
double sample_amplitude(const CameraConfig& cam, Rng& rng)
{
    if (cam.event_amplitude_sigma == 0) return cam.event_amplitude_mean;
    const double m = cam.event_amplitude_mean;
    const double s2 = std::log1p((cam.event_amplitude_sigma * cam.event_amplitude_sigma) / (m * m));
    return std::lognormal_distribution<double>(std::log(m) - 0.5 * s2, std::sqrt(s2))(rng);
}

template <class Rng>
void uniform_position(const Rect& r, Rng& rng, double& x, double& y)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    x = static_cast<double>(r.x0) + u(rng) * static_cast<double>(r.width);
    y = static_cast<double>(r.y0) + u(rng) * static_cast<double>(r.height);
}

inline double local_qe(const CameraConfig& cam, double x, double y)
{
    if (!cam.qe_map) return 1.0;
    const auto px = std::min(cam.width - 1, static_cast<std::size_t>(x));
    const auto py = std::min(cam.height - 1, static_cast<std::size_t>(y));
    return (*cam.qe_map)(px, py);
}

/// Adds Gaussian-footprint blobs (truncated at 3 psf radii) to a charge buffer.
inline void deposit(const CameraConfig& cam, const SimulatedEvent& e, RealGrid& charge)
{
    if (cam.psf_radius == 0) {
        const auto px = std::min(cam.width - 1, static_cast<std::size_t>(e.x));
        const auto py = std::min(cam.height - 1, static_cast<std::size_t>(e.y));
        charge(px, py) += e.amplitude;
        return;
    }
    const double r = cam.psf_radius;
    const double reach = 3.0 * r;
    const auto lo = [](double v) { return static_cast<std::ptrdiff_t>(std::floor(v)); };
    const std::ptrdiff_t x_lo = std::max<std::ptrdiff_t>(0, lo(e.x - reach));
    const std::ptrdiff_t y_lo = std::max<std::ptrdiff_t>(0, lo(e.y - reach));
    const std::ptrdiff_t x_hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(cam.width) - 1, lo(e.x + reach));
    const std::ptrdiff_t y_hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(cam.height) - 1, lo(e.y + reach));

    struct Cell {
        std::size_t x, y;
        double w;
    };
    std::vector<Cell> cells;
    double total = 0;
    for (std::ptrdiff_t py = y_lo; py <= y_hi; ++py)
        for (std::ptrdiff_t px = x_lo; px <= x_hi; ++px) {
            const double dx = static_cast<double>(px) + 0.5 - e.x;
            const double dy = static_cast<double>(py) + 0.5 - e.y;
            const double d2 = dx * dx + dy * dy;
            if (d2 > reach * reach) continue;
            const double w = std::exp(-d2 / (2.0 * r * r));
            cells.push_back({static_cast<std::size_t>(px), static_cast<std::size_t>(py), w});
            total += w;
        }
    if (cells.empty()) {
        // footprint narrower than the pixel grid sampling: the whole charge lands in one pixel
        charge(std::min(cam.width - 1, static_cast<std::size_t>(e.x)),
               std::min(cam.height - 1, static_cast<std::size_t>(e.y))) += e.amplitude;
        return;
    }
    for (const auto& c : cells) charge(c.x, c.y) += e.amplitude * c.w / total;
}

template <class Rng>
Frame render(const CameraConfig& cam, std::span<const SimulatedEvent> events, Rng& rng)
{
    RealGrid charge(cam.width, cam.height, 0.0);
    for (const auto& e : events) deposit(cam, e, charge);

    Frame frame(cam.width, cam.height);
    boost::random::normal_distribution<double> noise(0.0, 1.0);  // ziggurat
    for (std::size_t k = 0; k < frame.size(); ++k) {
        double v = cam.baseline + charge.values[k];
        if (cam.readout_sigma > 0) v += cam.readout_sigma * noise(rng);
        frame.values[k] = static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, 65535.0));
    }
    return frame;
}

template <class Rng>
void add_dark_events(const CameraConfig& cam, const Rect& area, Region label, double rate, Rng& rng,
                     std::vector<SimulatedEvent>& events)
{
    const auto n = sample_poisson(rate, rng);
    for (std::uint64_t k = 0; k < n; ++k) {
        SimulatedEvent e;
        uniform_position(area, rng, e.x, e.y);
        e.amplitude = sample_amplitude(cam, rng);
        e.region = label;
        e.dark = true;
        events.push_back(e);
    }
}

} // namespace detail

/// Renders a caller-supplied event list with the camera's noise model.
inline Frame render_events(const CameraConfig& cam, std::span<const SimulatedEvent> events, std::uint64_t seed,
                           std::uint64_t index = 0)
{
    cam.validate();
    auto rng = detail::frame_engine(seed, index);
    return detail::render(cam, events, rng);
}

/// Frame `index` of a twin-beam exposure. Dark events per region come from
/// the camera rate plus the arm's dark rate in `params`.
inline Frame simulate_pair_frame(const TwinBeamParams& params, const CameraConfig& cam, std::uint64_t seed,
                                 std::uint64_t index, FrameTruth* truth = nullptr)
{
    auto rng = detail::frame_engine(seed, index);
    std::bernoulli_distribution keep_s(params.eta_s), keep_i(params.eta_i);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    const auto pairs = detail::sample_thermal(params.pair_modes, params.pair_mean, rng);
    const auto noise_s = detail::sample_thermal(params.noise_modes_s, params.noise_mean_s, rng);
    const auto noise_i = detail::sample_thermal(params.noise_modes_i, params.noise_mean_i, rng);

    std::vector<SimulatedEvent> events;
    auto land = [&](const Rect& area, Region label, double eta) {
        SimulatedEvent e;
        detail::uniform_position(area, rng, e.x, e.y);
        const double p = eta * detail::local_qe(cam, e.x, e.y);
        if (u(rng) < p) {
            e.amplitude = detail::sample_amplitude(cam, rng);
            e.region = label;
            events.push_back(e);
        }
    };
    for (std::uint64_t k = 0; k < pairs + noise_s; ++k) land(cam.signal_region, Region::signal, params.eta_s);
    for (std::uint64_t k = 0; k < pairs + noise_i; ++k) land(cam.idler_region, Region::idler, params.eta_i);
    detail::add_dark_events(cam, cam.signal_region, Region::signal, cam.dark_event_rate + params.dark_s, rng, events);
    detail::add_dark_events(cam, cam.idler_region, Region::idler, cam.dark_event_rate + params.dark_i, rng, events);

    Frame frame = detail::render(cam, events, rng);
    if (truth) truth->events = std::move(events);
    return frame;
}

inline std::vector<Frame> simulate_pair_frames(const TwinBeamParams& params, const CameraConfig& cam,
                                               std::size_t n_frames, std::uint64_t seed, unsigned threads = 1,
                                               std::vector<FrameTruth>* truths = nullptr)
{
    params.validate();
    cam.validate();
    detail::require(!cam.signal_region.empty() && !cam.idler_region.empty(), ErrorKind::invalid_parameter,
                    "pair frames need both a signal and an idler region");
    detail::require(n_frames >= 1, ErrorKind::invalid_parameter, "n_frames must be >= 1");
    std::vector<Frame> frames(n_frames);
    if (truths) truths->assign(n_frames, {});
    parallel_for(n_frames, threads, [&](std::size_t k) {
        frames[k] = simulate_pair_frame(params, cam, seed, k, truths ? &(*truths)[k] : nullptr);
    });
    return frames;
}

/// Frame `index` under flat illumination by `flux_per_frame` mean photons.
/// Photons land uniformly over the sensor; each is detected with
/// probability efficiency * qe_map.
inline Frame simulate_source_frame(double flux_per_frame, const CameraConfig& cam, std::uint64_t seed,
                                   std::uint64_t index, FrameTruth* truth = nullptr)
{
    auto rng = detail::frame_engine(seed, index);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Rect sensor{0, 0, cam.width, cam.height};

    std::vector<SimulatedEvent> events;
    const auto photons = detail::sample_poisson(flux_per_frame, rng);
    for (std::uint64_t k = 0; k < photons; ++k) {
        SimulatedEvent e;
        detail::uniform_position(sensor, rng, e.x, e.y);
        if (u(rng) < cam.efficiency * detail::local_qe(cam, e.x, e.y)) {
            e.amplitude = detail::sample_amplitude(cam, rng);
            e.region = Region::full;
            events.push_back(e);
        }
    }
    detail::add_dark_events(cam, sensor, Region::full, cam.dark_event_rate, rng, events);

    Frame frame = detail::render(cam, events, rng);
    if (truth) truth->events = std::move(events);
    return frame;
}

inline std::vector<Frame> simulate_source_frames(double flux_per_frame, const CameraConfig& cam,
                                                 std::size_t n_frames, std::uint64_t seed, unsigned threads = 1,
                                                 std::vector<FrameTruth>* truths = nullptr)
{
    cam.validate();
    detail::require(flux_per_frame >= 0 && std::isfinite(flux_per_frame), ErrorKind::invalid_parameter,
                    "flux must be >= 0");
    detail::require(n_frames >= 1, ErrorKind::invalid_parameter, "n_frames must be >= 1");
    std::vector<Frame> frames(n_frames);
    if (truths) truths->assign(n_frames, {});
    parallel_for(n_frames, threads, [&](std::size_t k) {
        frames[k] = simulate_source_frame(flux_per_frame, cam, seed, k, truths ? &(*truths)[k] : nullptr);
    });
    return frames;
}

} // namespace spcal
