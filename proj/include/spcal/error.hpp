#pragma once

#include <stdexcept>
#include <string>

namespace spcal {

enum class ErrorKind {
    invalid_parameter,
    truncation_insufficient,
    empty_histogram,
    zero_marginal,
    dimension_mismatch,
    too_few_frames,
    missing_background,
    empty_input,
    degenerate_histogram,
    zero_efficiency,
    zero_flux,
    insufficient_points,
    degenerate_times,
    io,
};

inline const char* to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::invalid_parameter: return "invalid-parameter";
    case ErrorKind::truncation_insufficient: return "truncation-insufficient";
    case ErrorKind::empty_histogram: return "empty-histogram";
    case ErrorKind::zero_marginal: return "zero-marginal";
    case ErrorKind::dimension_mismatch: return "dimension-mismatch";
    case ErrorKind::too_few_frames: return "too-few-frames";
    case ErrorKind::missing_background: return "missing-background";
    case ErrorKind::empty_input: return "empty-input";
    case ErrorKind::degenerate_histogram: return "degenerate-histogram";
    case ErrorKind::zero_efficiency: return "zero-efficiency";
    case ErrorKind::zero_flux: return "zero-flux";
    case ErrorKind::insufficient_points: return "insufficient-points";
    case ErrorKind::degenerate_times: return "degenerate-times";
    case ErrorKind::io: return "io";
    }
    return "unknown";
}

/// Exception carrying a machine-readable kind next to the message.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

namespace detail {

inline void require(bool condition, ErrorKind kind, const char* what)
{
    if (!condition) throw Error(kind, what);
}

} // namespace detail
} // namespace spcal
