#pragma once

// JSON and TSV serialization for parameters, fit results and source data.
// Infinite durations are written as JSON null.

#include <cmath>
#include <istream>
#include <ostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spcal/calibration_fit.hpp"
#include "spcal/detector_sim.hpp"
#include "spcal/error.hpp"
#include "spcal/frame_pipeline.hpp"
#include "spcal/photocount_model.hpp"
#include "spcal/source_transfer.hpp"

namespace spcal {

using nlohmann::json;

namespace detail {

template <class T>
void read_if(const json& j, const char* key, T& out)
{
    if (!j.contains(key) || j.at(key).is_null()) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_parameter, std::string("bad value for '") + key + "': " + e.what());
    }
}

inline json duration_to_json(double d) { return std::isinf(d) ? json(nullptr) : json(d); }

inline double duration_from_json(const json& j, const char* key, double fallback)
{
    if (!j.contains(key)) return fallback;
    if (j.at(key).is_null()) return infinite_duration;
    if (j.at(key).is_string() && j.at(key).get<std::string>() == "inf") return infinite_duration;
    double v = fallback;
    read_if(j, key, v);
    return v;
}

} // namespace detail

inline json to_json(const TwinBeamParams& p)
{
    json j;
    for (std::size_t k = 0; k < param_count; ++k)
        j[std::string(param_names[k])] = param_value(p, static_cast<Param>(k));
    return j;
}

/// Keys absent from `j` keep the values of `base`.
inline TwinBeamParams twin_beam_from_json(const json& j, TwinBeamParams base = {})
{
    for (std::size_t k = 0; k < param_count; ++k)
        detail::read_if(j, std::string(param_names[k]).c_str(), param_ref(base, static_cast<Param>(k)));
    return base;
}

inline json fixed_mask_to_json(const FixedMask& m)
{
    json arr = json::array();
    for (std::size_t k = 0; k < param_count; ++k)
        if (m.test(k)) arr.push_back(std::string(param_names[k]));
    return arr;
}

/// Accepts a list of parameter names; unknown names are an invalid_parameter error.
inline FixedMask fixed_mask_from_names(const std::vector<std::string>& names, bool names_are_free)
{
    FixedMask selected;
    for (const auto& n : names) {
        std::size_t k = 0;
        while (k < param_count && param_names[k] != n) ++k;
        if (k == param_count) throw Error(ErrorKind::invalid_parameter, "unknown parameter name: " + n);
        selected.set(k);
    }
    return names_are_free ? ~selected : selected;
}

inline json to_json(const FitResult& r)
{
    json free = json::array();
    for (std::size_t k = 0; k < param_count; ++k)
        if (!r.fixed_mask.test(k)) free.push_back(std::string(param_names[k]));
    return json{{"params", to_json(r.params)},
                {"residual", r.residual},
                {"eta_s_err", r.eta_s_err},
                {"eta_i_err", r.eta_i_err},
                {"uncertainty_method", "bootstrap"},
                {"n_evaluations", r.n_evaluations},
                {"converged", r.converged},
                {"fixed", fixed_mask_to_json(r.fixed_mask)},
                {"free", free}};
}

inline FitResult fit_result_from_json(const json& j)
{
    FitResult r;
    r.params = twin_beam_from_json(j.at("params"));
    detail::read_if(j, "residual", r.residual);
    detail::read_if(j, "eta_s_err", r.eta_s_err);
    detail::read_if(j, "eta_i_err", r.eta_i_err);
    detail::read_if(j, "n_evaluations", r.n_evaluations);
    detail::read_if(j, "converged", r.converged);
    if (j.contains("fixed")) r.fixed_mask = fixed_mask_from_names(j.at("fixed").get<std::vector<std::string>>(), false);
    return r;
}

inline json to_json(const SourceState& s)
{
    return json{{"flux_ref", s.flux_ref},
                {"flux_ref_err", s.flux_ref_err},
                {"t_ref", s.t_ref},
                {"half_life", s.half_life},
                {"deg_time_const", detail::duration_to_json(s.deg_time_const)}};
}

inline SourceState source_state_from_json(const json& j, SourceState base = {})
{
    detail::read_if(j, "flux_ref", base.flux_ref);
    detail::read_if(j, "flux_ref_err", base.flux_ref_err);
    detail::read_if(j, "t_ref", base.t_ref);
    detail::read_if(j, "half_life", base.half_life);
    base.deg_time_const = detail::duration_from_json(j, "deg_time_const", base.deg_time_const);
    return base;
}

inline json to_json(const MeasurementPoint& p)
{
    return json{{"t", p.t},
                {"mean_events", p.mean_events},
                {"mean_events_err", p.mean_events_err},
                {"exposure_id", p.exposure_id},
                {"camera_id", p.camera_id}};
}

inline MeasurementPoint measurement_from_json(const json& j)
{
    MeasurementPoint p;
    detail::read_if(j, "t", p.t);
    detail::read_if(j, "mean_events", p.mean_events);
    detail::read_if(j, "mean_events_err", p.mean_events_err);
    detail::read_if(j, "exposure_id", p.exposure_id);
    detail::read_if(j, "camera_id", p.camera_id);
    return p;
}

inline json to_json(const std::vector<MeasurementPoint>& points)
{
    json arr = json::array();
    for (const auto& p : points) arr.push_back(to_json(p));
    return json{{"measurements", arr}};
}

/// Accepts either {"measurements": [...]} or a bare array.
inline std::vector<MeasurementPoint> measurements_from_json(const json& j)
{
    const json& arr = j.is_array() ? j : j.at("measurements");
    std::vector<MeasurementPoint> out;
    for (const auto& e : arr) out.push_back(measurement_from_json(e));
    return out;
}

/// Rows `t_seconds<TAB>mean_events<TAB>err`; blank lines and '#' comments are skipped.
inline std::vector<MeasurementPoint> read_measurements_tsv(std::istream& is)
{
    std::vector<MeasurementPoint> out;
    std::string line;
    std::size_t row = 0;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        MeasurementPoint p;
        if (!(fields >> p.t >> p.mean_events)) throw Error(ErrorKind::io, "malformed measurement row: " + line);
        if (!(fields >> p.mean_events_err)) p.mean_events_err = 0;
        p.exposure_id = std::to_string(row++);
        out.push_back(p);
    }
    return out;
}

inline void write_measurements_tsv(std::ostream& os, const std::vector<MeasurementPoint>& points)
{
    const auto old_precision = os.precision(std::numeric_limits<double>::max_digits10);
    os << "# t_seconds\tmean_events\terr\n";
    for (const auto& p : points) os << p.t << '\t' << p.mean_events << '\t' << p.mean_events_err << '\n';
    os.precision(old_precision);
    if (!os) throw Error(ErrorKind::io, "failed to write measurements");
}

inline json rect_to_json(const Rect& r) { return json::array({r.x0, r.y0, r.width, r.height}); }

inline Rect rect_from_json(const json& j)
{
    const auto v = j.get<std::vector<std::size_t>>();
    if (v.size() != 4) throw Error(ErrorKind::invalid_parameter, "a rectangle is [x0, y0, width, height]");
    return {v[0], v[1], v[2], v[3]};
}

/// Camera settings; the qe_map is not serialized.
inline json to_json(const CameraConfig& c)
{
    return json{{"width", c.width},
                {"height", c.height},
                {"signal_region", rect_to_json(c.signal_region)},
                {"idler_region", rect_to_json(c.idler_region)},
                {"baseline", c.baseline},
                {"readout_sigma", c.readout_sigma},
                {"event_amplitude_mean", c.event_amplitude_mean},
                {"event_amplitude_sigma", c.event_amplitude_sigma},
                {"psf_radius", c.psf_radius},
                {"dark_event_rate", c.dark_event_rate},
                {"efficiency", c.efficiency}};
}

inline CameraConfig camera_from_json(const json& j, CameraConfig c = {})
{
    detail::read_if(j, "width", c.width);
    detail::read_if(j, "height", c.height);
    if (j.contains("signal_region")) c.signal_region = rect_from_json(j.at("signal_region"));
    if (j.contains("idler_region")) c.idler_region = rect_from_json(j.at("idler_region"));
    detail::read_if(j, "baseline", c.baseline);
    detail::read_if(j, "readout_sigma", c.readout_sigma);
    detail::read_if(j, "event_amplitude_mean", c.event_amplitude_mean);
    detail::read_if(j, "event_amplitude_sigma", c.event_amplitude_sigma);
    detail::read_if(j, "psf_radius", c.psf_radius);
    detail::read_if(j, "dark_event_rate", c.dark_event_rate);
    detail::read_if(j, "efficiency", c.efficiency);
    return c;
}

/// Thresholding and clustering settings; background statistics are not serialized.
inline json to_json(const PipelineConfig& c)
{
    return json{{"threshold_k", c.threshold_k},
                {"connectivity", c.connectivity},
                {"min_pixels", c.min_pixels},
                {"signal_region", rect_to_json(c.signal_region)},
                {"idler_region", rect_to_json(c.idler_region)}};
}

inline PipelineConfig pipeline_from_json(const json& j, PipelineConfig c = {})
{
    detail::read_if(j, "threshold_k", c.threshold_k);
    detail::read_if(j, "connectivity", c.connectivity);
    detail::read_if(j, "min_pixels", c.min_pixels);
    if (j.contains("signal_region")) c.signal_region = rect_from_json(j.at("signal_region"));
    if (j.contains("idler_region")) c.idler_region = rect_from_json(j.at("idler_region"));
    return c;
}

inline json to_json(const FitOptions& o)
{
    return json{{"restarts", o.restarts},
                {"seed", o.seed},
                {"restart_spread", o.restart_spread},
                {"max_iterations", o.simplex.max_iterations},
                {"x_tol", o.simplex.x_tol},
                {"f_tol", o.simplex.f_tol},
                {"initial_step", o.simplex.initial_step}};
}

inline FitOptions fit_options_from_json(const json& j, FitOptions o = {})
{
    detail::read_if(j, "restarts", o.restarts);
    detail::read_if(j, "seed", o.seed);
    detail::read_if(j, "restart_spread", o.restart_spread);
    detail::read_if(j, "max_iterations", o.simplex.max_iterations);
    detail::read_if(j, "x_tol", o.simplex.x_tol);
    detail::read_if(j, "f_tol", o.simplex.f_tol);
    detail::read_if(j, "initial_step", o.simplex.initial_step);
    return o;
}

inline json to_json(const TransferResult& r)
{
    return json{{"eta", r.eta}, {"eta_err", r.eta_err}, {"valid", r.valid}};
}

inline TransferResult transfer_result_from_json(const json& j)
{
    TransferResult r;
    detail::read_if(j, "eta", r.eta);
    detail::read_if(j, "eta_err", r.eta_err);
    detail::read_if(j, "valid", r.valid);
    return r;
}

inline json to_json(const DegradationFit& f)
{
    return json{{"deg_time_const", detail::duration_to_json(f.deg_time_const)},
                {"deg_err", f.deg_err},
                {"excess_rate", f.excess_rate}};
}

inline DegradationFit degradation_from_json(const json& j)
{
    DegradationFit f;
    f.deg_time_const = detail::duration_from_json(j, "deg_time_const", infinite_duration);
    detail::read_if(j, "deg_err", f.deg_err);
    detail::read_if(j, "excess_rate", f.excess_rate);
    return f;
}

} // namespace spcal
