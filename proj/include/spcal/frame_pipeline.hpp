#pragma once

// Raw frame processing: background statistics, per-pixel thresholding,
// connected-component event clustering, per-region counting and joint
// histogram accumulation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "spcal/error.hpp"
#include "spcal/image.hpp"
#include "spcal/photocount_model.hpp"

namespace spcal {

struct BackgroundStats {
    RealGrid mean;
    RealGrid sigma;
};

/// Streaming per-pixel mean and sample standard deviation (Welford).
class BackgroundAccumulator {
public:
    void add(const Frame& frame)
    {
        if (n_ == 0) {
            mean_ = RealGrid(frame.width, frame.height, 0.0);
            m2_ = RealGrid(frame.width, frame.height, 0.0);
        }
        detail::require(frame.same_shape(mean_), ErrorKind::dimension_mismatch, "background frames differ in shape");
        ++n_;
        const double inv = 1.0 / static_cast<double>(n_);
        for (std::size_t k = 0; k < frame.size(); ++k) {
            const double v = frame.values[k];
            const double delta = v - mean_.values[k];
            mean_.values[k] += delta * inv;
            m2_.values[k] += delta * (v - mean_.values[k]);
        }
    }

    std::size_t count() const noexcept { return n_; }

    BackgroundStats result() const
    {
        detail::require(n_ >= 2, ErrorKind::too_few_frames, "background needs at least 2 frames");
        BackgroundStats out{mean_, RealGrid(mean_.width, mean_.height, 0.0)};
        const double denom = static_cast<double>(n_ - 1);
        for (std::size_t k = 0; k < m2_.size(); ++k) out.sigma.values[k] = std::sqrt(std::max(0.0, m2_.values[k] / denom));
        return out;
    }

private:
    std::size_t n_ = 0;
    RealGrid mean_;
    RealGrid m2_;
};

inline BackgroundStats average_background(std::span<const Frame> frames)
{
    detail::require(frames.size() >= 2, ErrorKind::too_few_frames, "background needs at least 2 frames");
    BackgroundAccumulator acc;
    for (const auto& f : frames) acc.add(f);
    return acc.result();
}

struct PipelineConfig {
    double threshold_k = 3.0;
    int connectivity = 8;
    std::size_t min_pixels = 1;
    std::optional<BackgroundStats> background;
    /// Counting regions; with both empty every event is labeled `full`.
    Rect signal_region{};
    Rect idler_region{};

    bool full_frame() const noexcept { return signal_region.empty() && idler_region.empty(); }

    void validate() const
    {
        using detail::require;
        require(threshold_k > 0, ErrorKind::invalid_parameter, "threshold_k must be > 0");
        require(connectivity == 4 || connectivity == 8, ErrorKind::invalid_parameter, "connectivity must be 4 or 8");
        require(min_pixels >= 1, ErrorKind::invalid_parameter, "min_pixels must be >= 1");
    }

    Region region_of(double x, double y) const noexcept
    {
        if (full_frame()) return Region::full;
        if (!signal_region.empty() && signal_region.contains(x, y)) return Region::signal;
        if (!idler_region.empty() && idler_region.contains(x, y)) return Region::idler;
        return Region::outside;
    }
};

struct DetectionEvent {
    double centroid_x = 0;
    double centroid_y = 0;
    std::size_t pixel_count = 0;
    double total_adu = 0;  ///< background-subtracted sum over the cluster
    Region region = Region::full;
};

/// Marks pixels with (value - background mean) > k * background sigma.
inline Mask threshold_frame(const Frame& frame, const PipelineConfig& cfg)
{
    cfg.validate();
    detail::require(cfg.background.has_value(), ErrorKind::missing_background, "no background statistics");
    const auto& bg = *cfg.background;
    detail::require(frame.same_shape(bg.mean) && frame.same_shape(bg.sigma), ErrorKind::dimension_mismatch,
                    "frame and background differ in shape");
    Mask mask(frame.width, frame.height, 0);
    for (std::size_t k = 0; k < frame.size(); ++k)
        mask.values[k] = (static_cast<double>(frame.values[k]) - bg.mean.values[k]) > cfg.threshold_k * bg.sigma.values[k];
    return mask;
}

/// Connected components of the mask. Centroids are weighted by the
/// background-subtracted signal; components below min_pixels are dropped.
/// Events come out in raster order of their first pixel.
inline std::vector<DetectionEvent> cluster_events(const Mask& mask, const Frame& frame, const PipelineConfig& cfg)
{
    cfg.validate();
    detail::require(mask.same_shape(frame), ErrorKind::dimension_mismatch, "mask and frame differ in shape");
    const RealGrid* bg_mean = nullptr;
    if (cfg.background) {
        detail::require(frame.same_shape(cfg.background->mean), ErrorKind::dimension_mismatch,
                        "frame and background differ in shape");
        bg_mean = &cfg.background->mean;
    }

    const std::size_t w = mask.width, h = mask.height;
    std::vector<std::uint8_t> seen(mask.size(), 0);
    std::vector<std::size_t> stack;
    std::vector<DetectionEvent> events;

    for (std::size_t start = 0; start < mask.size(); ++start) {
        if (!mask.values[start] || seen[start]) continue;
        seen[start] = 1;
        stack.assign(1, start);

        std::size_t pixels = 0;
        double sw = 0, swx = 0, swy = 0, sx = 0, sy = 0;
        while (!stack.empty()) {
            const std::size_t k = stack.back();
            stack.pop_back();
            const std::size_t x = k % w, y = k / w;
            const double signal = static_cast<double>(frame.values[k]) - (bg_mean ? bg_mean->values[k] : 0.0);
            const double cx = static_cast<double>(x) + 0.5, cy = static_cast<double>(y) + 0.5;
            ++pixels;
            sw += signal;
            swx += signal * cx;
            swy += signal * cy;
            sx += cx;
            sy += cy;

            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    if (cfg.connectivity == 4 && dx != 0 && dy != 0) continue;
                    const auto nx = static_cast<std::ptrdiff_t>(x) + dx;
                    const auto ny = static_cast<std::ptrdiff_t>(y) + dy;
                    if (nx < 0 || ny < 0 || nx >= static_cast<std::ptrdiff_t>(w) || ny >= static_cast<std::ptrdiff_t>(h))
                        continue;
                    const std::size_t nk = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
                    if (mask.values[nk] && !seen[nk]) {
                        seen[nk] = 1;
                        stack.push_back(nk);
                    }
                }
        }
        if (pixels < cfg.min_pixels) continue;

        DetectionEvent e;
        e.pixel_count = pixels;
        e.total_adu = sw;
        if (sw > 0) {
            e.centroid_x = swx / sw;
            e.centroid_y = swy / sw;
        } else {
            e.centroid_x = sx / static_cast<double>(pixels);
            e.centroid_y = sy / static_cast<double>(pixels);
        }
        e.region = cfg.region_of(e.centroid_x, e.centroid_y);
        events.push_back(e);
    }
    return events;
}

/// Per-frame event counts. In full-frame mode all events count towards c_s.
struct FrameCounts {
    std::uint64_t c_s = 0;
    std::uint64_t c_i = 0;

    friend bool operator==(const FrameCounts&, const FrameCounts&) = default;
};

inline FrameCounts count_events(std::span<const DetectionEvent> events)
{
    FrameCounts c;
    for (const auto& e : events) {
        if (e.region == Region::signal || e.region == Region::full) ++c.c_s;
        else if (e.region == Region::idler) ++c.c_i;
    }
    return c;
}

inline FrameCounts process_frame(const Frame& frame, const PipelineConfig& cfg,
                                 std::vector<DetectionEvent>* events_out = nullptr)
{
    const auto mask = threshold_frame(frame, cfg);
    auto events = cluster_events(mask, frame, cfg);
    const auto counts = count_events(events);
    if (events_out) *events_out = std::move(events);
    return counts;
}

inline void add_to_histogram(JointHistogram& hist, const FrameCounts& c)
{
    const std::uint64_t cap = hist.c_max;
    if (c.c_s > cap || c.c_i > cap) ++hist.clamped;
    ++hist.at(static_cast<std::size_t>(std::min(c.c_s, cap)), static_cast<std::size_t>(std::min(c.c_i, cap)));
    ++hist.n_frames;
}

/// Histogram of per-frame counts; counts above c_max land in the c_max bin and
/// are tallied in `clamped`.
inline JointHistogram accumulate_histogram(std::span<const FrameCounts> counts, std::size_t c_max)
{
    detail::require(!counts.empty(), ErrorKind::empty_input, "no frame counts");
    detail::require(c_max >= 1, ErrorKind::invalid_parameter, "c_max must be >= 1");
    JointHistogram hist(c_max);
    for (const auto& c : counts) add_to_histogram(hist, c);
    return hist;
}

inline JointHistogram merge(const JointHistogram& a, const JointHistogram& b)
{
    detail::require(a.c_max == b.c_max, ErrorKind::dimension_mismatch, "histograms differ in c_max");
    JointHistogram out = a;
    for (std::size_t k = 0; k < out.counts.size(); ++k) out.counts[k] += b.counts[k];
    out.n_frames += b.n_frames;
    out.clamped += b.clamped;
    return out;
}

/// Expands a histogram back into one FrameCounts entry per frame, in cell order.
inline std::vector<FrameCounts> expand_histogram(const JointHistogram& hist)
{
    std::vector<FrameCounts> out;
    out.reserve(hist.n_frames);
    for (std::size_t s = 0; s < hist.side(); ++s)
        for (std::size_t i = 0; i < hist.side(); ++i)
            out.insert(out.end(), hist.at(s, i), FrameCounts{s, i});
    return out;
}

/// Histogram TSV: `# frames=N`, `# cmax=K`, `# clamped=M`, then one
/// `c_s<TAB>c_i<TAB>count` row per cell.
inline void write_histogram_tsv(std::ostream& os, const JointHistogram& hist)
{
    os << "# frames=" << hist.n_frames << "\n# cmax=" << hist.c_max << "\n# clamped=" << hist.clamped << "\n";
    for (std::size_t s = 0; s < hist.side(); ++s)
        for (std::size_t i = 0; i < hist.side(); ++i) os << s << '\t' << i << '\t' << hist.at(s, i) << '\n';
    if (!os) throw Error(ErrorKind::io, "failed to write histogram");
}

inline JointHistogram read_histogram_tsv(std::istream& is)
{
    std::optional<std::uint64_t> frames, clamped;
    std::optional<std::size_t> cmax;
    struct Row {
        std::size_t s, i;
        std::uint64_t n;
    };
    std::vector<Row> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string key = line.substr(1, eq - 1);
            key.erase(0, key.find_first_not_of(' '));
            const std::string value = line.substr(eq + 1);
            try {
                if (key == "frames") frames = std::stoull(value);
                else if (key == "cmax") cmax = std::stoull(value);
                else if (key == "clamped") clamped = std::stoull(value);
            } catch (const std::exception&) {
                throw Error(ErrorKind::io, "malformed histogram header: " + line);
            }
            continue;
        }
        std::istringstream fields(line);
        Row r{};
        if (!(fields >> r.s >> r.i >> r.n)) throw Error(ErrorKind::io, "malformed histogram row: " + line);
        rows.push_back(r);
    }
    if (!frames || !cmax) throw Error(ErrorKind::io, "histogram TSV is missing frames/cmax headers");
    detail::require(*cmax >= 1, ErrorKind::io, "histogram cmax must be >= 1");
    JointHistogram hist(*cmax);
    hist.n_frames = *frames;
    hist.clamped = clamped.value_or(0);
    for (const auto& r : rows) {
        if (r.s > *cmax || r.i > *cmax) throw Error(ErrorKind::io, "histogram row outside cmax");
        hist.at(r.s, r.i) += r.n;
    }
    if (hist.total() != hist.n_frames) throw Error(ErrorKind::io, "histogram counts do not sum to frames");
    return hist;
}

} // namespace spcal
