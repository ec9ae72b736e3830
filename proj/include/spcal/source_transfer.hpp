#pragma once

// Radioluminescent reference source: flux over time, absolute calibration of
// the source with a pair-calibrated camera, and calibration transfer to other
// cameras.
//
// Timestamps and durations are seconds; a year is a Julian year (365.25 d).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "spcal/error.hpp"

namespace spcal {

inline constexpr double seconds_per_year = 365.25 * 86400.0;
inline constexpr double tritium_half_life_years = 12.32;
inline constexpr double infinite_duration = std::numeric_limits<double>::infinity();

struct SourceState {
    double flux_ref = 0;      ///< mean photons per exposure at the sensor plane at t_ref
    double flux_ref_err = 0;
    double t_ref = 0;         ///< seconds since the epoch
    double half_life = tritium_half_life_years * seconds_per_year;
    double deg_time_const = infinite_duration;  ///< phosphor degradation e-folding time

    void validate() const
    {
        using detail::require;
        constexpr auto bad = ErrorKind::invalid_parameter;
        require(flux_ref >= 0 && flux_ref_err >= 0, bad, "flux must be >= 0");
        require(half_life > 0, bad, "half_life must be > 0");
        require(deg_time_const > 0, bad, "deg_time_const must be > 0 or infinite");
    }

    friend bool operator==(const SourceState&, const SourceState&) = default;
};

struct MeasurementPoint {
    double t = 0;
    double mean_events = 0;  ///< detection events per frame
    double mean_events_err = 0;
    std::string exposure_id;
    std::string camera_id;

    friend bool operator==(const MeasurementPoint&, const MeasurementPoint&) = default;
};

/// Flux relative to flux_ref after dt seconds: radioactive decay times phosphor degradation.
inline double decay_factor(const SourceState& src, double dt)
{
    const double degradation = std::isinf(src.deg_time_const) ? 1.0 : std::exp(-dt / src.deg_time_const);
    return std::exp2(-dt / src.half_life) * degradation;
}

inline double flux_at(const SourceState& src, double t)
{
    return src.flux_ref * decay_factor(src, t - src.t_ref);
}

inline double flux_err_at(const SourceState& src, double t)
{
    return src.flux_ref_err * decay_factor(src, t - src.t_ref);
}

/// Absolute source flux from measurements by a camera of known efficiency.
///
/// `model` supplies t_ref and the decay constants; its flux fields are ignored.
/// Each point is converted to an at-t_ref flux; points are combined with
/// inverse-variance weights (plain mean when no point carries an error), and
/// the efficiency uncertainty is added in quadrature.
inline SourceState calibrate_source(std::span<const MeasurementPoint> points, double eta_camera, double eta_err,
                                    const SourceState& model)
{
    detail::require(!points.empty(), ErrorKind::empty_input, "no measurement points");
    detail::require(eta_camera > 0 && eta_camera <= 1, ErrorKind::zero_efficiency,
                    "camera efficiency must lie in (0, 1]");
    detail::require(eta_err >= 0, ErrorKind::invalid_parameter, "eta_err must be >= 0");
    model.validate();

    bool weighted = true;
    for (const auto& p : points) {
        detail::require(p.mean_events >= 0 && p.mean_events_err >= 0, ErrorKind::invalid_parameter,
                        "mean events and errors must be >= 0");
        if (p.mean_events_err <= 0) weighted = false;
    }

    double sw = 0, swx = 0;
    for (const auto& p : points) {
        const double scale = 1.0 / (eta_camera * decay_factor(model, p.t - model.t_ref));
        const double value = p.mean_events * scale;
        const double w = weighted ? 1.0 / std::pow(p.mean_events_err * scale, 2) : 1.0;
        sw += w;
        swx += w * value;
    }

    SourceState out = model;
    out.flux_ref = swx / sw;
    double stat_err = 0;
    if (weighted) {
        stat_err = std::sqrt(1.0 / sw);
    } else if (points.size() > 1) {
        double ss = 0;
        for (const auto& p : points) {
            const double value = p.mean_events / (eta_camera * decay_factor(model, p.t - model.t_ref));
            ss += (value - out.flux_ref) * (value - out.flux_ref);
        }
        stat_err = std::sqrt(ss / static_cast<double>(points.size() - 1) / static_cast<double>(points.size()));
    }
    const double eta_part = out.flux_ref * eta_err / eta_camera;
    out.flux_ref_err = std::hypot(stat_err, eta_part);
    return out;
}

struct TransferResult {
    double eta = 0;
    double eta_err = 0;
    bool valid = true;  ///< false when eta > 1, which no physical detector reaches

    friend bool operator==(const TransferResult&, const TransferResult&) = default;
};

/// Efficiency of a camera that observed `point` under the calibrated source.
inline TransferResult transfer_efficiency(const MeasurementPoint& point, const SourceState& src)
{
    src.validate();
    const double flux = flux_at(src, point.t);
    detail::require(flux > 0, ErrorKind::zero_flux, "source flux at the measurement time is zero");
    TransferResult r;
    r.eta = point.mean_events / flux;
    const double rel_flux = src.flux_ref > 0 ? src.flux_ref_err / src.flux_ref : 0.0;
    r.eta_err = std::hypot(point.mean_events_err / flux, r.eta * rel_flux);
    r.valid = r.eta <= 1.0;
    return r;
}

struct DegradationFit {
    double deg_time_const = infinite_duration;
    double deg_err = 0;
    double excess_rate = 0;  ///< fitted extra decay rate, 1/s (<= 0 means none)

    friend bool operator==(const DegradationFit&, const DegradationFit&) = default;
};

/// Fits the phosphor degradation constant from a rate series.
///
/// Regresses log(rate) + ln2 (t - t_ref)/half_life on (t - t_ref); the negated
/// slope is the excess decay rate. Points are weighted by their relative
/// errors when every point has one. A non-positive excess rate yields an
/// infinite constant.
inline DegradationFit fit_degradation(std::span<const MeasurementPoint> points, const SourceState& src_known)
{
    detail::require(points.size() >= 3, ErrorKind::insufficient_points, "degradation fit needs at least 3 points");
    src_known.validate();

    bool weighted = true;
    for (const auto& p : points) {
        detail::require(p.mean_events > 0, ErrorKind::invalid_parameter, "rates must be > 0 for a log fit");
        if (p.mean_events_err <= 0) weighted = false;
    }

    std::vector<double> x, y, w;
    for (const auto& p : points) {
        const double dt = p.t - src_known.t_ref;
        x.push_back(dt);
        y.push_back(std::log(p.mean_events) + std::log(2.0) * dt / src_known.half_life);
        w.push_back(weighted ? std::pow(p.mean_events / p.mean_events_err, 2) : 1.0);
    }

    double sw = 0, sx = 0, sy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sw += w[k];
        sx += w[k] * x[k];
        sy += w[k] * y[k];
    }
    const double xbar = sx / sw, ybar = sy / sw;
    double sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxx += w[k] * (x[k] - xbar) * (x[k] - xbar);
        sxy += w[k] * (x[k] - xbar) * (y[k] - ybar);
    }
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    const double span = *hi - *lo;
    detail::require(span > 0 && sxx > 0, ErrorKind::degenerate_times, "measurement times do not vary");
    const double slope = sxy / sxx;

    double slope_var = 0;
    if (weighted) {
        slope_var = 1.0 / sxx;
    } else {
        const double intercept = ybar - slope * xbar;
        double ss = 0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double r = y[k] - intercept - slope * x[k];
            ss += r * r;
        }
        slope_var = ss / static_cast<double>(x.size() - 2) / sxx;
    }

    DegradationFit out;
    out.excess_rate = -slope;
    // excess decline below rounding level over the whole span counts as none
    if (out.excess_rate * span > 1e-12) {
        out.deg_time_const = 1.0 / out.excess_rate;
        out.deg_err = std::sqrt(slope_var) / (out.excess_rate * out.excess_rate);
    }
    return out;
}

} // namespace spcal
