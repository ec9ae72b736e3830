// spcal: command-line front end for simulation, frame processing, efficiency
// fitting and source-based calibration transfer.
//
// Every command resolves a JSON config (file, then flag overrides) and echoes
// it, together with SHA-256 digests of the input files, next to its results.
// JSON results carry that provenance inline; binary and TSV outputs get a
// `<out>.meta.json` sidecar.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "spcal/spcal.hpp"

namespace {

using spcal::Error;
using spcal::ErrorKind;
using spcal::json;

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_numeric = 3, exit_io = 4 };

// ---------------------------------------------------------------------------
// small utilities

std::string sha256_file(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorKind::io, "cannot open " + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    std::vector<char> buf(1 << 16);
    while (is) {
        is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(is.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned k = 0; k < len; ++k) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[k]);
    return "sha256:" + hex.str();
}

json read_json_file(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw Error(ErrorKind::io, "cannot open " + path);
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_parameter, path + ": " + e.what());
    }
}

std::ofstream open_output(const std::string& path, bool binary = false)
{
    std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
    if (!os) throw Error(ErrorKind::io, "cannot write " + path);
    return os;
}

bool has_extension(const std::string& path, const char* ext)
{
    return std::filesystem::path(path).extension() == ext;
}

std::vector<spcal::MeasurementPoint> read_measurements(const std::string& path)
{
    if (has_extension(path, ".tsv") || has_extension(path, ".txt")) {
        std::ifstream is(path);
        if (!is) throw Error(ErrorKind::io, "cannot open " + path);
        return spcal::read_measurements_tsv(is);
    }
    return spcal::measurements_from_json(read_json_file(path));
}

spcal::JointHistogram read_histogram(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw Error(ErrorKind::io, "cannot open " + path);
    return spcal::read_histogram_tsv(is);
}

// Section of the resolved config, created empty when missing.
json& section(json& cfg, const char* name)
{
    if (!cfg.contains(name) || cfg[name].is_null()) cfg[name] = json::object();
    return cfg[name];
}

template <class T>
T value_or(const json& j, const char* key, T fallback)
{
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_parameter, std::string("bad value for '") + key + "': " + e.what());
    }
}

// ---------------------------------------------------------------------------
// run context shared by all commands

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<unsigned> threads;
    bool quiet = false;
};

class Run {
public:
    Run(std::string command, const Globals& g) : command_(std::move(command)), globals_(g)
    {
        if (!g.config_path.empty()) {
            config_ = read_json_file(g.config_path);
            if (!config_.is_object()) throw Error(ErrorKind::invalid_parameter, "config must be a JSON object");
            inputs_[g.config_path] = sha256_file(g.config_path);
        } else {
            config_ = json::object();
        }
        if (g.seed) config_["seed"] = *g.seed;
        if (g.threads) config_["threads"] = *g.threads;
        if (!config_.contains("seed")) config_["seed"] = 1;
        if (!config_.contains("threads")) config_["threads"] = 1;
    }

    json& config() { return config_; }
    std::uint64_t seed() const { return value_or<std::uint64_t>(config_, "seed", 1); }
    unsigned threads() const { return value_or<unsigned>(config_, "threads", 1); }
    bool quiet() const { return globals_.quiet; }
    const std::string& out() const { return globals_.out; }

    void input(const std::string& path) { inputs_[path] = sha256_file(path); }

    void log(const std::string& msg) const
    {
        if (!globals_.quiet) std::cerr << "spcal " << command_ << ": " << msg << "\n";
    }

    json provenance() const
    {
        json digests = json::object();
        for (const auto& [path, digest] : inputs_) digests[path] = digest;
        return json{{"command", command_}, {"config", config_}, {"inputs", digests}};
    }

    /// JSON result with provenance keys merged in, to --out or stdout.
    void emit_json(json result) const
    {
        result.update(provenance());
        const std::string text = result.dump(2) + "\n";
        if (globals_.out.empty()) {
            std::cout << text;
        } else {
            auto os = open_output(globals_.out);
            os << text;
            if (!os) throw Error(ErrorKind::io, "failed to write " + globals_.out);
        }
    }

    /// Sidecar with provenance and a summary next to a non-JSON output.
    void emit_sidecar(const std::string& primary, json summary) const
    {
        summary.update(provenance());
        auto os = open_output(primary + ".meta.json");
        os << summary.dump(2) << "\n";
        if (!os) throw Error(ErrorKind::io, "failed to write sidecar for " + primary);
    }

    const std::string& require_out() const
    {
        if (globals_.out.empty()) throw Error(ErrorKind::invalid_parameter, command_ + " needs --out");
        return globals_.out;
    }

private:
    std::string command_;
    Globals globals_;
    json config_;
    std::map<std::string, std::string> inputs_;
};

spcal::CameraConfig camera_of(json& cfg) { return spcal::camera_from_json(section(cfg, "camera")); }

constexpr std::size_t frame_block = 256;

// ---------------------------------------------------------------------------
// simulate-pairs / simulate-source

struct SimulateArgs {
    std::optional<std::size_t> frames;
    std::optional<double> flux;
    std::optional<double> efficiency;
    std::string truth_path;
};

template <class MakeFrame>
void write_frames(const Run& run, const spcal::CameraConfig& cam, std::size_t n_frames, MakeFrame&& make,
                  const std::string& truth_path)
{
    const auto& out = run.require_out();
    auto os = open_output(out, true);
    spcal::FrameContainerWriter writer(os, static_cast<std::uint32_t>(n_frames), static_cast<std::uint32_t>(cam.width),
                                       static_cast<std::uint32_t>(cam.height));
    std::optional<std::ofstream> truth;
    if (!truth_path.empty()) {
        truth = open_output(truth_path);
        *truth << "# frame\tc_s\tc_i\n";
    }
    std::vector<spcal::Frame> block;
    std::vector<spcal::FrameTruth> truths;
    for (std::size_t first = 0; first < n_frames; first += frame_block) {
        const std::size_t n = std::min(frame_block, n_frames - first);
        block.assign(n, {});
        truths.assign(n, {});
        spcal::parallel_for(n, run.threads(), [&](std::size_t k) { block[k] = make(first + k, &truths[k]); });
        for (std::size_t k = 0; k < n; ++k) {
            writer.write(block[k]);
            if (truth) {
                const auto& t = truths[k];
                const auto s = t.count(spcal::Region::signal) + t.count(spcal::Region::full);
                *truth << first + k << '\t' << s << '\t' << t.count(spcal::Region::idler) << '\n';
            }
        }
    }
    if (truth && !*truth) throw Error(ErrorKind::io, "failed to write " + truth_path);
}

int cmd_simulate_pairs(Run& run, const SimulateArgs& a)
{
    auto& cfg = run.config();
    if (a.frames) cfg["frames"] = *a.frames;
    if (!cfg.contains("frames")) cfg["frames"] = 1000;
    const auto params = spcal::twin_beam_from_json(section(cfg, "twin_beam"));
    const auto cam = camera_of(cfg);
    cfg["twin_beam"] = spcal::to_json(params);
    cfg["camera"] = spcal::to_json(cam);
    params.validate();
    cam.validate();
    const auto n = value_or<std::size_t>(cfg, "frames", 1000);
    spcal::detail::require(n >= 1, ErrorKind::invalid_parameter, "frames must be >= 1");
    spcal::detail::require(!cam.signal_region.empty() && !cam.idler_region.empty(), ErrorKind::invalid_parameter,
                           "pair frames need both a signal and an idler region");

    const auto seed = run.seed();
    write_frames(run, cam, n, [&](std::size_t k, spcal::FrameTruth* t) {
        return spcal::simulate_pair_frame(params, cam, seed, k, t);
    }, a.truth_path);
    run.emit_sidecar(run.out(), json{{"frames", n}, {"width", cam.width}, {"height", cam.height}});
    run.log("wrote " + std::to_string(n) + " frames to " + run.out());
    return exit_ok;
}

int cmd_simulate_source(Run& run, const SimulateArgs& a)
{
    auto& cfg = run.config();
    if (a.frames) cfg["frames"] = *a.frames;
    if (a.flux) cfg["flux"] = *a.flux;
    if (a.efficiency) section(cfg, "camera")["efficiency"] = *a.efficiency;
    if (!cfg.contains("frames")) cfg["frames"] = 1000;
    if (!cfg.contains("flux")) cfg["flux"] = 0.0;
    const auto cam = camera_of(cfg);
    cfg["camera"] = spcal::to_json(cam);
    cam.validate();
    const auto n = value_or<std::size_t>(cfg, "frames", 1000);
    const auto flux = value_or<double>(cfg, "flux", 0.0);
    spcal::detail::require(n >= 1, ErrorKind::invalid_parameter, "frames must be >= 1");
    spcal::detail::require(flux >= 0 && std::isfinite(flux), ErrorKind::invalid_parameter, "flux must be >= 0");

    const auto seed = run.seed();
    write_frames(run, cam, n, [&](std::size_t k, spcal::FrameTruth* t) {
        return spcal::simulate_source_frame(flux, cam, seed, k, t);
    }, a.truth_path);
    run.emit_sidecar(run.out(), json{{"frames", n}, {"width", cam.width}, {"height", cam.height}});
    run.log("wrote " + std::to_string(n) + " frames to " + run.out());
    return exit_ok;
}

// ---------------------------------------------------------------------------
// process

struct ProcessArgs {
    std::string input;
    std::string background;
    std::optional<std::size_t> c_max;
    std::optional<double> threshold_k;
    std::optional<int> connectivity;
    std::optional<std::size_t> min_pixels;
    bool full_frame = false;
    std::string events_path;
    std::string accumulated_path;
    std::optional<double> time;
    std::string camera_id;
};

spcal::BackgroundStats background_from(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorKind::io, "cannot open " + path);
    spcal::FrameContainerReader reader(is);
    spcal::BackgroundAccumulator acc;
    while (!reader.done()) acc.add(reader.next());
    return acc.result();
}

struct RunningMean {
    double sum = 0, sum2 = 0;
    std::uint64_t n = 0;
    void add(double v)
    {
        sum += v;
        sum2 += v * v;
        ++n;
    }
    double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
    double standard_error() const
    {
        if (n < 2) return 0.0;
        const double m = mean();
        const double var = std::max(0.0, (sum2 - static_cast<double>(n) * m * m) / static_cast<double>(n - 1));
        return std::sqrt(var / static_cast<double>(n));
    }
};

int cmd_process(Run& run, const ProcessArgs& a)
{
    auto& cfg = run.config();
    auto& pipe = section(cfg, "pipeline");
    if (a.threshold_k) pipe["threshold_k"] = *a.threshold_k;
    if (a.connectivity) pipe["connectivity"] = *a.connectivity;
    if (a.min_pixels) pipe["min_pixels"] = *a.min_pixels;
    if (a.c_max) cfg["c_max"] = *a.c_max;
    if (!cfg.contains("c_max")) cfg["c_max"] = spcal::default_c_max;
    if (a.full_frame) {
        pipe["signal_region"] = spcal::rect_to_json({});
        pipe["idler_region"] = spcal::rect_to_json({});
    }
    // counting regions default to the camera's illuminated regions
    const auto cam = camera_of(cfg);
    if (!pipe.contains("signal_region")) pipe["signal_region"] = spcal::rect_to_json(cam.signal_region);
    if (!pipe.contains("idler_region")) pipe["idler_region"] = spcal::rect_to_json(cam.idler_region);
    auto pcfg = spcal::pipeline_from_json(pipe);
    cfg["pipeline"] = spcal::to_json(pcfg);
    pcfg.validate();
    const auto c_max = value_or<std::size_t>(cfg, "c_max", spcal::default_c_max);
    spcal::detail::require(c_max >= 1, ErrorKind::invalid_parameter, "c_max must be >= 1");
    if (a.time) cfg["time"] = *a.time;

    if (a.background.empty()) throw Error(ErrorKind::missing_background, "process needs --background frames");
    run.input(a.input);
    run.input(a.background);
    pcfg.background = background_from(a.background);

    std::ifstream is(a.input, std::ios::binary);
    if (!is) throw Error(ErrorKind::io, "cannot open " + a.input);
    spcal::FrameContainerReader reader(is);
    spcal::detail::require(reader.count() >= 1, ErrorKind::empty_input, "input container has no frames");

    const auto& out = run.require_out();
    std::optional<std::ofstream> events_os;
    if (!a.events_path.empty()) {
        events_os = open_output(a.events_path);
        *events_os << std::setprecision(std::numeric_limits<double>::max_digits10);
        *events_os << "# frame\tcentroid_x\tcentroid_y\tpixel_count\ttotal_adu\tregion\n";
    }
    std::optional<spcal::Image<std::uint32_t>> hit_map;
    if (!a.accumulated_path.empty()) hit_map.emplace(reader.width(), reader.height(), 0u);

    spcal::JointHistogram hist(c_max);
    RunningMean mean_s, mean_i;
    std::vector<spcal::Frame> block;
    std::vector<spcal::FrameCounts> counts;
    std::vector<std::vector<spcal::DetectionEvent>> events;
    std::vector<spcal::Mask> masks;
    std::uint64_t index = 0;
    while (!reader.done()) {
        block.clear();
        while (!reader.done() && block.size() < frame_block) block.push_back(reader.next());
        const std::size_t n = block.size();
        counts.assign(n, {});
        events.assign(n, {});
        masks.assign(n, {});
        spcal::parallel_for(n, run.threads(), [&](std::size_t k) {
            masks[k] = spcal::threshold_frame(block[k], pcfg);
            events[k] = spcal::cluster_events(masks[k], block[k], pcfg);
            counts[k] = spcal::count_events(events[k]);
        });
        for (std::size_t k = 0; k < n; ++k, ++index) {
            spcal::add_to_histogram(hist, counts[k]);
            mean_s.add(static_cast<double>(counts[k].c_s));
            mean_i.add(static_cast<double>(counts[k].c_i));
            if (events_os)
                for (const auto& e : events[k])
                    *events_os << index << '\t' << e.centroid_x << '\t' << e.centroid_y << '\t' << e.pixel_count
                               << '\t' << e.total_adu << '\t' << spcal::to_string(e.region) << '\n';
            if (hit_map)
                for (std::size_t p = 0; p < masks[k].size(); ++p) hit_map->values[p] += masks[k].values[p];
        }
    }

    {
        auto os = open_output(out);
        spcal::write_histogram_tsv(os, hist);
    }
    if (events_os && !*events_os) throw Error(ErrorKind::io, "failed to write " + a.events_path);
    if (hit_map) {
        spcal::Frame img(hit_map->width, hit_map->height);
        for (std::size_t p = 0; p < img.size(); ++p)
            img.values[p] = static_cast<std::uint16_t>(std::min<std::uint32_t>(hit_map->values[p], 65535u));
        spcal::write_pgm(a.accumulated_path, img, "per-pixel count of frames in which the pixel was above threshold");
    }

    json summary{{"frames", hist.n_frames},
                 {"clamped", hist.clamped},
                 {"mean_c_s", mean_s.mean()},
                 {"mean_c_s_err", mean_s.standard_error()},
                 {"mean_c_i", mean_i.mean()},
                 {"mean_c_i_err", mean_i.standard_error()}};
    if (a.time) {
        // a ready-to-use source measurement: full-frame counts land in c_s
        spcal::MeasurementPoint m{*a.time, mean_s.mean(), mean_s.standard_error(), a.input, a.camera_id};
        summary["measurement"] = spcal::to_json(m);
    }
    run.emit_sidecar(out, summary);
    run.log("processed " + std::to_string(hist.n_frames) + " frames, " + std::to_string(hist.clamped) + " clamped");
    return exit_ok;
}

// ---------------------------------------------------------------------------
// klyshko / fit

int cmd_klyshko(Run& run, const std::string& input)
{
    run.input(input);
    const auto hist = read_histogram(input);
    const auto k = spcal::klyshko_efficiency(hist);
    run.emit_json(json{{"eta_s", k.eta_s}, {"eta_i", k.eta_i}, {"frames", hist.n_frames}});
    return exit_ok;
}

struct FitArgs {
    std::string input;
    std::vector<std::string> free;
    std::optional<std::size_t> restarts;
    std::optional<std::size_t> bootstrap;
    std::string init_path;
};

int cmd_fit(Run& run, const FitArgs& a)
{
    auto& cfg = run.config();
    auto& fcfg = section(cfg, "fit");
    if (!a.free.empty()) fcfg["free"] = a.free;
    if (a.restarts) fcfg["restarts"] = *a.restarts;
    if (a.bootstrap) fcfg["bootstrap"] = *a.bootstrap;
    if (!a.init_path.empty()) {
        run.input(a.init_path);
        const auto j = read_json_file(a.init_path);
        fcfg["init"] = j.contains("params") ? j.at("params") : j;
    }

    spcal::TwinBeamParams start;
    start.pair_mean = 0.5;
    start.noise_mean_s = start.noise_mean_i = 0.1;
    start.eta_s = start.eta_i = 0.5;
    const auto init = spcal::twin_beam_from_json(fcfg.value("init", json::object()), start);
    spcal::FixedMask fixed = spcal::default_fixed_mask();
    if (fcfg.contains("free")) fixed = spcal::fixed_mask_from_names(fcfg.at("free").get<std::vector<std::string>>(), true);
    auto options = spcal::fit_options_from_json(fcfg);
    if (!fcfg.contains("seed")) options.seed = run.seed();
    options.threads = run.threads();
    const auto n_boot = value_or<std::size_t>(fcfg, "bootstrap", 20);
    const auto boot_restarts = value_or<std::size_t>(fcfg, "bootstrap_restarts", 1);

    fcfg["init"] = spcal::to_json(init);
    fcfg["free"] = json::array();
    for (std::size_t k = 0; k < spcal::param_count; ++k)
        if (!fixed.test(k)) fcfg["free"].push_back(std::string(spcal::param_names[k]));
    fcfg.update(spcal::to_json(options));
    fcfg["bootstrap"] = n_boot;
    fcfg["bootstrap_restarts"] = boot_restarts;

    run.input(a.input);
    const auto hist = read_histogram(a.input);
    auto result = spcal::fit(hist, init, fixed, options);
    run.log("D = " + std::to_string(result.residual) + (result.converged ? "" : " (not converged)"));
    if (n_boot > 0) {
        const auto frames = spcal::expand_histogram(hist);
        spcal::FitSpec spec{result.params, fixed, options, hist.c_max};
        spec.options.restarts = boot_restarts;
        const auto boot = spcal::bootstrap_errors(frames, spec, n_boot, options.seed);
        result.eta_s_err = boot.eta_s_err;
        result.eta_i_err = boot.eta_i_err;
    }
    auto out = spcal::to_json(result);
    out["bootstrap_resamples"] = n_boot;
    run.emit_json(out);
    return result.converged ? exit_ok : exit_numeric;
}

// ---------------------------------------------------------------------------
// source chain

struct SourceArgs {
    std::string input;
    std::string source_path;
    std::optional<double> eta;
    std::optional<double> eta_err;
    std::string fit_result;
    std::string arm = "signal";
    std::optional<double> t_ref;
};

spcal::SourceState source_model(Run& run, const SourceArgs& a)
{
    auto& cfg = run.config();
    auto& scfg = section(cfg, "source");
    if (!a.source_path.empty()) {
        run.input(a.source_path);
        const auto file = read_json_file(a.source_path);
        for (auto& [k, v] : file.items())
            if (k == "flux_ref" || k == "flux_ref_err" || k == "t_ref" || k == "half_life" || k == "deg_time_const")
                scfg[k] = v;
    }
    if (a.t_ref) scfg["t_ref"] = *a.t_ref;
    const auto src = spcal::source_state_from_json(scfg);
    cfg["source"] = spcal::to_json(src);
    src.validate();
    return src;
}

int cmd_calibrate_source(Run& run, const SourceArgs& a)
{
    auto& cfg = run.config();
    const auto model = source_model(run, a);
    double eta = value_or<double>(cfg, "eta", 0.0), eta_err = value_or<double>(cfg, "eta_err", 0.0);
    if (!a.fit_result.empty()) {
        run.input(a.fit_result);
        const auto fr = spcal::fit_result_from_json(read_json_file(a.fit_result));
        if (a.arm != "signal" && a.arm != "idler")
            throw Error(ErrorKind::invalid_parameter, "--arm must be signal or idler");
        eta = a.arm == "signal" ? fr.params.eta_s : fr.params.eta_i;
        eta_err = a.arm == "signal" ? fr.eta_s_err : fr.eta_i_err;
    }
    if (a.eta) eta = *a.eta;
    if (a.eta_err) eta_err = *a.eta_err;
    cfg["eta"] = eta;
    cfg["eta_err"] = eta_err;

    run.input(a.input);
    const auto points = read_measurements(a.input);
    const auto src = spcal::calibrate_source(points, eta, eta_err, model);
    run.emit_json(spcal::to_json(src));
    return exit_ok;
}

int cmd_transfer(Run& run, const SourceArgs& a)
{
    const auto src = source_model(run, a);
    run.input(a.input);
    const auto points = read_measurements(a.input);
    spcal::detail::require(!points.empty(), ErrorKind::empty_input, "no measurement points");
    json results = json::array();
    bool all_valid = true;
    for (const auto& p : points) {
        const auto r = spcal::transfer_efficiency(p, src);
        auto j = spcal::to_json(r);
        j["t"] = p.t;
        j["camera_id"] = p.camera_id;
        j["exposure_id"] = p.exposure_id;
        results.push_back(j);
        all_valid = all_valid && r.valid;
    }
    if (!all_valid) run.log("warning: efficiency above 1 reported; check the source calibration");
    run.emit_json(json{{"results", results}});
    return exit_ok;
}

int cmd_decay_fit(Run& run, const SourceArgs& a)
{
    const auto src = source_model(run, a);
    run.input(a.input);
    const auto points = read_measurements(a.input);
    const auto f = spcal::fit_degradation(points, src);
    auto j = spcal::to_json(f);
    j["deg_time_const_years"] =
        std::isinf(f.deg_time_const) ? json(nullptr) : json(f.deg_time_const / spcal::seconds_per_year);
    run.emit_json(j);
    return exit_ok;
}

// ---------------------------------------------------------------------------
// plot-data

struct PlotArgs {
    std::string source_path;
    std::optional<double> t_start;
    std::optional<double> t_end;
    std::optional<std::size_t> points;
    std::vector<std::string> efficiency_files;
};

std::string tsv_number(double v)
{
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
    return os.str();
}

int cmd_plot_data(Run& run, const PlotArgs& a)
{
    auto& cfg = run.config();
    auto& pcfg = section(cfg, "plot");
    std::ostringstream tsv;
    json summary = json::object();

    if (!a.efficiency_files.empty()) {
        // one bar per result file: fit results give both arms, transfer results one row per point
        tsv << "# label\teta\teta_err\n";
        std::size_t rows = 0;
        for (const auto& path : a.efficiency_files) {
            run.input(path);
            const auto j = read_json_file(path);
            const std::string stem = std::filesystem::path(path).stem().string();
            if (j.contains("params")) {
                const auto fr = spcal::fit_result_from_json(j);
                tsv << stem << ":signal\t" << tsv_number(fr.params.eta_s) << '\t' << tsv_number(fr.eta_s_err) << '\n';
                tsv << stem << ":idler\t" << tsv_number(fr.params.eta_i) << '\t' << tsv_number(fr.eta_i_err) << '\n';
                rows += 2;
            } else if (j.contains("results")) {
                for (const auto& r : j.at("results")) {
                    const auto tr = spcal::transfer_result_from_json(r);
                    const std::string id = r.value("camera_id", std::string{});
                    tsv << stem << ":" << (id.empty() ? std::to_string(rows) : id) << '\t' << tsv_number(tr.eta)
                        << '\t' << tsv_number(tr.eta_err) << '\n';
                    ++rows;
                }
            } else {
                throw Error(ErrorKind::invalid_parameter, path + " is neither a fit nor a transfer result");
            }
        }
        summary["kind"] = "efficiency";
        summary["rows"] = rows;
    } else {
        if (a.source_path.empty() && !cfg.contains("source"))
            throw Error(ErrorKind::invalid_parameter, "plot-data needs --source or efficiency result files");
        SourceArgs sa;
        sa.source_path = a.source_path;
        const auto src = source_model(run, sa);
        if (a.t_start) pcfg["t_start"] = *a.t_start;
        if (a.t_end) pcfg["t_end"] = *a.t_end;
        if (a.points) pcfg["points"] = *a.points;
        const double t0 = value_or<double>(pcfg, "t_start", src.t_ref);
        const double t1 = value_or<double>(pcfg, "t_end", src.t_ref + 2 * spcal::seconds_per_year);
        const auto n = value_or<std::size_t>(pcfg, "points", 25);
        pcfg["t_start"] = t0;
        pcfg["t_end"] = t1;
        pcfg["points"] = n;
        spcal::detail::require(n >= 2 && t1 > t0, ErrorKind::invalid_parameter, "need points >= 2 and t_end > t_start");

        auto pure = src;
        pure.deg_time_const = spcal::infinite_duration;
        tsv << "# t_seconds\tt_years\tmeasured\texpected\n";
        for (std::size_t k = 0; k < n; ++k) {
            const double t = t0 + (t1 - t0) * static_cast<double>(k) / static_cast<double>(n - 1);
            tsv << tsv_number(t) << '\t' << tsv_number((t - src.t_ref) / spcal::seconds_per_year) << '\t'
                << tsv_number(spcal::flux_at(src, t)) << '\t' << tsv_number(spcal::flux_at(pure, t)) << '\n';
        }
        summary["kind"] = "decay";
        summary["rows"] = n;
    }

    if (run.out().empty()) {
        std::cout << tsv.str();
    } else {
        auto os = open_output(run.out());
        os << tsv.str();
        if (!os) throw Error(ErrorKind::io, "failed to write " + run.out());
        run.emit_sidecar(run.out(), summary);
    }
    return exit_ok;
}

int exit_code_for(ErrorKind kind) { return kind == ErrorKind::io ? exit_io : exit_config; }

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"spcal: single-photon camera calibration toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", "spcal 0.1.0");

    Globals g;
    app.add_option("--config", g.config_path, "JSON config file; flags override its keys")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "RNG seed");
    app.add_option("--out", g.out, "output path (JSON commands default to stdout)");
    app.add_option("--threads", g.threads, "worker threads (0 = all cores)");
    app.add_flag("--quiet", g.quiet, "suppress progress messages");

    SimulateArgs sim;
    auto* pairs = app.add_subcommand("simulate-pairs", "simulate twin-beam frames into a frame container");
    pairs->add_option("--frames", sim.frames, "number of frames (default 1000)");
    pairs->add_option("--truth", sim.truth_path, "also write per-frame true event counts as TSV");

    auto* source = app.add_subcommand("simulate-source", "simulate frames under flat source illumination");
    source->add_option("--frames", sim.frames, "number of frames (default 1000)");
    source->add_option("--flux", sim.flux, "mean photons per frame reaching the sensor");
    source->add_option("--efficiency", sim.efficiency, "camera detection efficiency");
    source->add_option("--truth", sim.truth_path, "also write per-frame true event counts as TSV");

    ProcessArgs proc;
    auto* process = app.add_subcommand("process", "threshold, cluster and count events into a joint histogram");
    process->add_option("--input", proc.input, "frame container to process")->required();
    process->add_option("--background", proc.background, "frame container of background-only frames");
    process->add_option("--cmax", proc.c_max, "histogram truncation (default 20)");
    process->add_option("--threshold-k", proc.threshold_k, "threshold in units of background sigma (default 3)");
    process->add_option("--connectivity", proc.connectivity, "4 or 8 (default 8)");
    process->add_option("--min-pixels", proc.min_pixels, "smallest accepted cluster (default 1)");
    process->add_flag("--full-frame", proc.full_frame, "count every event on the sensor into c_s");
    process->add_option("--events", proc.events_path, "write the event list as TSV");
    process->add_option("--emit-accumulated", proc.accumulated_path, "write the accumulated hit map as PGM");
    process->add_option("--time", proc.time, "measurement time (s); adds a measurement point to the sidecar");
    process->add_option("--camera-id", proc.camera_id, "camera label for the measurement point");

    std::string klyshko_input;
    auto* klyshko = app.add_subcommand("klyshko", "ratio estimate of both efficiencies from a histogram");
    klyshko->add_option("--input", klyshko_input, "histogram TSV")->required();

    FitArgs fa;
    auto* fit = app.add_subcommand("fit", "fit the twin-beam model to a histogram");
    fit->add_option("--input", fa.input, "histogram TSV")->required();
    fit->add_option("--free", fa.free, "parameters to fit (default: efficiencies, pair and noise means, pair modes)")
        ->delimiter(',');
    fit->add_option("--init", fa.init_path, "JSON with starting parameters (a fit result works)");
    fit->add_option("--restarts", fa.restarts, "multi-start count (default 8)");
    fit->add_option("--bootstrap", fa.bootstrap, "bootstrap resamples for efficiency errors (default 20, 0 = off)");

    SourceArgs sa;
    auto* calib = app.add_subcommand("calibrate-source", "absolute source flux from a calibrated camera");
    calib->add_option("--input", sa.input, "measurement series (JSON or TSV)")->required();
    calib->add_option("--source", sa.source_path, "source model JSON (t_ref, half_life, deg_time_const)");
    calib->add_option("--eta", sa.eta, "camera efficiency");
    calib->add_option("--eta-err", sa.eta_err, "camera efficiency uncertainty");
    calib->add_option("--fit-result", sa.fit_result, "take the efficiency from a fit result");
    calib->add_option("--arm", sa.arm, "arm of the fit result: signal or idler");
    calib->add_option("--t-ref", sa.t_ref, "reference epoch (s)");

    auto* transfer = app.add_subcommand("transfer", "camera efficiency from a calibrated source");
    transfer->add_option("--input", sa.input, "measurement series (JSON or TSV)")->required();
    transfer->add_option("--source", sa.source_path, "calibrated source JSON")->required();

    auto* decay = app.add_subcommand("decay-fit", "fit the phosphor degradation constant");
    decay->add_option("--input", sa.input, "efficiency-normalized rate series (JSON or TSV)")->required();
    decay->add_option("--source", sa.source_path, "source model JSON (t_ref, half_life)");
    decay->add_option("--t-ref", sa.t_ref, "reference epoch (s)");

    PlotArgs pa;
    auto* plot = app.add_subcommand("plot-data", "data series for decay curves or efficiency bars");
    plot->add_option("--source", pa.source_path, "source JSON for the decay curve");
    plot->add_option("--t-start", pa.t_start, "first time (s), default t_ref");
    plot->add_option("--t-end", pa.t_end, "last time (s), default t_ref + 2 years");
    plot->add_option("--points", pa.points, "number of samples (default 25)");
    plot->add_option("--efficiency", pa.efficiency_files, "fit or transfer result files for a bar series");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        CLI::App* cmd = app.get_subcommands().front();
        Run run(cmd->get_name(), g);
        if (cmd == pairs) return cmd_simulate_pairs(run, sim);
        if (cmd == source) return cmd_simulate_source(run, sim);
        if (cmd == process) return cmd_process(run, proc);
        if (cmd == klyshko) return cmd_klyshko(run, klyshko_input);
        if (cmd == fit) return cmd_fit(run, fa);
        if (cmd == calib) return cmd_calibrate_source(run, sa);
        if (cmd == transfer) return cmd_transfer(run, sa);
        if (cmd == decay) return cmd_decay_fit(run, sa);
        if (cmd == plot) return cmd_plot_data(run, pa);
    } catch (const Error& e) {
        std::cerr << "spcal: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const json::exception& e) {
        std::cerr << "spcal: config: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "spcal: " << e.what() << "\n";
        return exit_io;
    }
    return exit_config;
}
