#pragma once

// Photon-number and photocount statistics of a twin-beam field with noise.
//
// Field model: a multimode-thermal (negative binomial) number of photon pairs
// shared by both arms, an independent multimode-thermal noise field per arm,
// per-photon binomial detection at eta, and Poisson dark counts.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "spcal/error.hpp"

namespace spcal {

enum class Arm { signal, idler };

struct TwinBeamParams {
    double pair_modes = 1.0;     ///< M_p, effective number of pair modes
    double pair_mean = 0.0;      ///< B_p, mean photon pairs per mode
    double noise_modes_s = 1.0;  ///< M_s
    double noise_modes_i = 1.0;  ///< M_i
    double noise_mean_s = 0.0;   ///< B_s, mean noise photons per mode
    double noise_mean_i = 0.0;   ///< B_i
    double eta_s = 1.0;
    double eta_i = 1.0;
    double dark_s = 0.0;         ///< mean dark events per frame
    double dark_i = 0.0;

    /// Throws invalid_parameter when an invariant is violated (NaN included).
    void validate() const
    {
        using detail::require;
        constexpr auto bad = ErrorKind::invalid_parameter;
        require(pair_modes > 0 && noise_modes_s > 0 && noise_modes_i > 0, bad, "mode counts must be > 0");
        require(pair_mean >= 0 && noise_mean_s >= 0 && noise_mean_i >= 0, bad, "mean photon numbers must be >= 0");
        require(dark_s >= 0 && dark_i >= 0, bad, "dark rates must be >= 0");
        require(eta_s >= 0 && eta_s <= 1 && eta_i >= 0 && eta_i <= 1, bad, "efficiencies must lie in [0, 1]");
        require(std::isfinite(pair_modes) && std::isfinite(pair_mean) && std::isfinite(noise_modes_s) &&
                    std::isfinite(noise_modes_i) && std::isfinite(noise_mean_s) && std::isfinite(noise_mean_i) &&
                    std::isfinite(dark_s) && std::isfinite(dark_i),
                bad, "parameters must be finite");
    }

    /// The same field with the roles of signal and idler exchanged.
    TwinBeamParams swapped() const
    {
        TwinBeamParams p = *this;
        std::swap(p.noise_modes_s, p.noise_modes_i);
        std::swap(p.noise_mean_s, p.noise_mean_i);
        std::swap(p.eta_s, p.eta_i);
        std::swap(p.dark_s, p.dark_i);
        return p;
    }

    double eta(Arm arm) const noexcept { return arm == Arm::signal ? eta_s : eta_i; }
    double noise_modes(Arm arm) const noexcept { return arm == Arm::signal ? noise_modes_s : noise_modes_i; }
    double noise_mean(Arm arm) const noexcept { return arm == Arm::signal ? noise_mean_s : noise_mean_i; }
    double dark(Arm arm) const noexcept { return arm == Arm::signal ? dark_s : dark_i; }

    friend bool operator==(const TwinBeamParams&, const TwinBeamParams&) = default;
};

/// Empirical joint photocount histogram, cells (c_s, c_i) for 0 <= c <= c_max.
struct JointHistogram {
    std::size_t c_max = 0;
    std::vector<std::uint64_t> counts;  ///< (c_max+1)^2, row index c_s
    std::uint64_t n_frames = 0;
    std::uint64_t clamped = 0;          ///< frames with a count folded into the c_max bin

    JointHistogram() = default;
    explicit JointHistogram(std::size_t cmax) : c_max(cmax), counts((cmax + 1) * (cmax + 1), 0) {}

    std::size_t side() const noexcept { return c_max + 1; }
    std::uint64_t& at(std::size_t cs, std::size_t ci) { return counts[cs * side() + ci]; }
    std::uint64_t at(std::size_t cs, std::size_t ci) const { return counts[cs * side() + ci]; }

    double frequency(std::size_t cs, std::size_t ci) const
    {
        return n_frames == 0 ? 0.0 : static_cast<double>(at(cs, ci)) / static_cast<double>(n_frames);
    }

    std::uint64_t total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

    friend bool operator==(const JointHistogram&, const JointHistogram&) = default;
};

/// Model joint photocount distribution p(c_s, c_i), truncated at c_max.
struct JointDistribution {
    std::size_t c_max = 0;
    std::vector<double> probs;

    JointDistribution() = default;
    explicit JointDistribution(std::size_t cmax) : c_max(cmax), probs((cmax + 1) * (cmax + 1), 0.0) {}

    std::size_t side() const noexcept { return c_max + 1; }
    double& operator()(std::size_t cs, std::size_t ci) { return probs[cs * side() + ci]; }
    double operator()(std::size_t cs, std::size_t ci) const { return probs[cs * side() + ci]; }

    double total() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }

    /// Distribution of c_s (row sums).
    std::vector<double> signal_marginal() const
    {
        std::vector<double> m(side(), 0.0);
        for (std::size_t s = 0; s < side(); ++s)
            for (std::size_t i = 0; i < side(); ++i) m[s] += (*this)(s, i);
        return m;
    }

    /// Distribution of c_i (column sums).
    std::vector<double> idler_marginal() const
    {
        std::vector<double> m(side(), 0.0);
        for (std::size_t s = 0; s < side(); ++s)
            for (std::size_t i = 0; i < side(); ++i) m[i] += (*this)(s, i);
        return m;
    }

    JointDistribution transposed() const
    {
        JointDistribution t(c_max);
        for (std::size_t s = 0; s < side(); ++s)
            for (std::size_t i = 0; i < side(); ++i) t(i, s) = (*this)(s, i);
        return t;
    }
};

inline constexpr std::size_t default_c_max = 20;
inline constexpr double model_mass_tolerance = 1e-9;

/// P(n) of a multimode thermal field: Gamma(n+M)/(n! Gamma(M)) (B/(1+B))^n (1+B)^-M.
inline double multimode_thermal_pmf(double modes, double mean_per_mode, std::size_t n)
{
    detail::require(modes > 0 && std::isfinite(modes), ErrorKind::invalid_parameter, "modes must be > 0");
    detail::require(mean_per_mode >= 0 && std::isfinite(mean_per_mode), ErrorKind::invalid_parameter,
                    "mean per mode must be >= 0");
    if (mean_per_mode == 0) return n == 0 ? 1.0 : 0.0;
    const double nd = static_cast<double>(n);
    const double log_p = std::lgamma(nd + modes) - std::lgamma(nd + 1.0) - std::lgamma(modes) +
                         nd * std::log(mean_per_mode / (1.0 + mean_per_mode)) -
                         modes * std::log1p(mean_per_mode);
    return std::exp(log_p);
}

/// Multimode thermal pmf for n = 0 .. length-1 by the ratio recurrence.
inline std::vector<double> thermal_distribution(double modes, double mean_per_mode, std::size_t length)
{
    std::vector<double> p(length, 0.0);
    if (length == 0) return p;
    p[0] = multimode_thermal_pmf(modes, mean_per_mode, 0);
    const double ratio = mean_per_mode / (1.0 + mean_per_mode);
    for (std::size_t n = 1; n < length; ++n)
        p[n] = p[n - 1] * (static_cast<double>(n - 1) + modes) / static_cast<double>(n) * ratio;
    return p;
}

inline std::vector<double> poisson_distribution(double mean, std::size_t length)
{
    detail::require(mean >= 0 && std::isfinite(mean), ErrorKind::invalid_parameter, "Poisson mean must be >= 0");
    std::vector<double> p(length, 0.0);
    if (length == 0) return p;
    if (mean == 0) {
        p[0] = 1.0;
        return p;
    }
    for (std::size_t k = 0; k < length; ++k) {
        const double kd = static_cast<double>(k);
        p[k] = std::exp(kd * std::log(mean) - mean - std::lgamma(kd + 1.0));
    }
    return p;
}

/// Discrete convolution of two pmfs, truncated to `length` entries.
inline std::vector<double> convolve(std::span<const double> a, std::span<const double> b, std::size_t length)
{
    std::vector<double> out(length, 0.0);
    for (std::size_t i = 0; i < a.size() && i < length; ++i) {
        if (a[i] == 0) continue;
        const std::size_t jmax = std::min(b.size(), length - i);
        for (std::size_t j = 0; j < jmax; ++j) out[i + j] += a[i] * b[j];
    }
    return out;
}

/// Detected-count distribution c = Binomial(n, eta) + Poisson(dark_mean) for n ~ photon_pmf.
///
/// The result extends past the photon support far enough that the neglected
/// dark-count tail is below 1e-12.
inline std::vector<double> detect_pmf(std::span<const double> photon_pmf, double eta, double dark_mean)
{
    detail::require(eta >= 0 && eta <= 1, ErrorKind::invalid_parameter, "eta must lie in [0, 1]");
    detail::require(dark_mean >= 0 && std::isfinite(dark_mean), ErrorKind::invalid_parameter,
                    "dark mean must be >= 0");
    detail::require(!photon_pmf.empty(), ErrorKind::invalid_parameter, "photon pmf is empty");

    // Thinning: q(c) = sum_n P(n) C(n,c) eta^c (1-eta)^(n-c), via repeated Bernoulli convolution.
    const std::size_t n_max = photon_pmf.size() - 1;
    std::vector<double> thinned(n_max + 1, 0.0);
    std::vector<double> binom{1.0};
    for (std::size_t n = 0; n <= n_max; ++n) {
        if (n > 0) {
            binom.push_back(0.0);
            for (std::size_t c = n; c > 0; --c) binom[c] = (1.0 - eta) * binom[c] + eta * binom[c - 1];
            binom[0] *= (1.0 - eta);
        }
        if (photon_pmf[n] == 0) continue;
        for (std::size_t c = 0; c <= n; ++c) thinned[c] += photon_pmf[n] * binom[c];
    }
    if (dark_mean == 0) return thinned;

    std::size_t dark_len = 1;
    double dark_mass = std::exp(-dark_mean);
    double term = dark_mass;
    while (1.0 - dark_mass > 1e-12 && dark_len < 100000) {
        term *= dark_mean / static_cast<double>(dark_len);
        dark_mass += term;
        ++dark_len;
    }
    const auto dark = poisson_distribution(dark_mean, dark_len);
    return convolve(thinned, dark, thinned.size() + dark_len - 1);
}

namespace detail {

/// Distribution of noise + dark counts detected in one arm, entries 0..c_max.
/// Thinning a negative binomial by eta gives a negative binomial with mean eta*B.
inline std::vector<double> arm_background(const TwinBeamParams& p, Arm arm, std::size_t c_max)
{
    const std::size_t len = c_max + 1;
    const auto noise = thermal_distribution(p.noise_modes(arm), p.eta(arm) * p.noise_mean(arm), len);
    if (p.dark(arm) == 0) return noise;
    return convolve(noise, poisson_distribution(p.dark(arm), len), len);
}

inline constexpr std::size_t max_pair_terms = std::size_t{1} << 16;

/// Pair-number pmf truncated where the remaining tail is provably below `tail`.
///
/// Beyond n the ratio of successive terms is at most r = max(q, (n+M)/(n+1) q)
/// with q = B/(1+B), so the tail is bounded by P(n) r / (1 - r).
inline std::vector<double> pair_number_distribution(double modes, double mean, double tail = 1e-15)
{
    std::vector<double> p;
    p.push_back(multimode_thermal_pmf(modes, mean, 0));
    if (mean == 0) return p;
    const double q = mean / (1.0 + mean);
    for (std::size_t n = 1;; ++n) {
        p.push_back(p.back() * (static_cast<double>(n - 1) + modes) / static_cast<double>(n) * q);
        const double r = std::max(q, (static_cast<double>(n) + modes) / static_cast<double>(n + 1) * q);
        if (r < 1.0 && p.back() * r / (1.0 - r) < tail) break;
        if (p.size() >= max_pair_terms)
            throw Error(ErrorKind::truncation_insufficient, "pair-number support exceeds the term limit");
    }
    return p;
}

} // namespace detail

/// Single-arm photocount distribution for c = 0..c_max.
///
/// Computed independently of the joint model: the thinned pair field is a
/// negative binomial with mean eta*B_p per mode, convolved with the thinned
/// noise field and the dark counts.
inline std::vector<double> arm_distribution(const TwinBeamParams& p, Arm arm, std::size_t c_max)
{
    p.validate();
    const std::size_t len = c_max + 1;
    const auto pairs = thermal_distribution(p.pair_modes, p.eta(arm) * p.pair_mean, len);
    return convolve(pairs, detail::arm_background(p, arm, c_max), len);
}

/// Smallest c_max for which both arm marginals leave less than `tail` mass above it.
inline std::size_t suggest_c_max(const TwinBeamParams& p, double tail = 1e-10, std::size_t limit = 2000)
{
    p.validate();
    std::size_t c_max = 1;
    for (;;) {
        bool enough = true;
        for (Arm arm : {Arm::signal, Arm::idler}) {
            const auto d = arm_distribution(p, arm, c_max);
            if (1.0 - std::accumulate(d.begin(), d.end(), 0.0) >= tail) enough = false;
        }
        if (enough) return c_max;
        if (c_max >= limit)
            throw Error(ErrorKind::truncation_insufficient, "no c_max below the search limit reaches the tail bound");
        c_max = std::min(limit, c_max * 2);
    }
}

/// Joint photocount distribution p(c_s, c_i) of the twin-beam model for 0 <= c <= c_max.
///
/// Paired photons are shared by both arms; given n pairs the two arms are
/// independent, so p = sum_n P(n) S_n(c_s) I_n(c_i) where S_n is the signal
/// count distribution conditioned on n pairs. S_{n+1} is S_n convolved with a
/// Bernoulli(eta_s) trial. Throws truncation_insufficient when more than 1e-9
/// of the mass lies beyond c_max.
inline JointDistribution joint_photocount_dist(const TwinBeamParams& p, std::size_t c_max = default_c_max)
{
    p.validate();
    detail::require(c_max >= 1, ErrorKind::invalid_parameter, "c_max must be >= 1");

    // cheap rejection before the O(n c_max^2) sum
    for (Arm arm : {Arm::signal, Arm::idler}) {
        const auto marginal = arm_distribution(p, arm, c_max);
        if (1.0 - std::accumulate(marginal.begin(), marginal.end(), 0.0) > model_mass_tolerance)
            throw Error(ErrorKind::truncation_insufficient, "tail mass above c_max exceeds 1e-9");
    }

    const std::size_t len = c_max + 1;
    const auto pairs = detail::pair_number_distribution(p.pair_modes, p.pair_mean);
    auto sig = detail::arm_background(p, Arm::signal, c_max);
    auto idl = detail::arm_background(p, Arm::idler, c_max);

    JointDistribution out(c_max);
    auto step = [len](std::vector<double>& d, double eta) {
        for (std::size_t c = len - 1; c > 0; --c) d[c] = (1.0 - eta) * d[c] + eta * d[c - 1];
        d[0] *= (1.0 - eta);
    };
    for (std::size_t n = 0; n < pairs.size(); ++n) {
        if (n > 0) {
            step(sig, p.eta_s);
            step(idl, p.eta_i);
        }
        const double w = pairs[n];
        if (w == 0) continue;
        for (std::size_t s = 0; s < len; ++s) {
            if (sig[s] == 0) continue;
            double* row = &out.probs[s * len];
            for (std::size_t i = 0; i < len; ++i) row[i] += w * (sig[s] * idl[i]);
        }
    }

    if (1.0 - out.total() > model_mass_tolerance)
        throw Error(ErrorKind::truncation_insufficient, "tail mass above c_max exceeds 1e-9");
    return out;
}

struct KlyshkoEstimate {
    double eta_s = 0;
    double eta_i = 0;
};

namespace detail {

inline KlyshkoEstimate klyshko_from_moments(double m_s, double m_i, double m_si)
{
    require(m_s > 0 && m_i > 0, ErrorKind::zero_marginal, "one arm never fired");
    return {m_si / m_i, m_si / m_s};
}

} // namespace detail

/// Klyshko ratios eta_i = <c_s c_i>/<c_s> and eta_s = <c_s c_i>/<c_i>.
/// Only meaningful for strictly paired fields; values above 1 are returned as-is.
inline KlyshkoEstimate klyshko_efficiency(const JointHistogram& hist)
{
    detail::require(hist.n_frames > 0, ErrorKind::empty_histogram, "histogram has no frames");
    long double s = 0, i = 0, si = 0;
    for (std::size_t cs = 0; cs < hist.side(); ++cs)
        for (std::size_t ci = 0; ci < hist.side(); ++ci) {
            const long double n = static_cast<long double>(hist.at(cs, ci));
            s += n * cs;
            i += n * ci;
            si += n * cs * ci;
        }
    const long double frames = static_cast<long double>(hist.n_frames);
    return detail::klyshko_from_moments(static_cast<double>(s / frames), static_cast<double>(i / frames),
                                        static_cast<double>(si / frames));
}

inline KlyshkoEstimate klyshko_efficiency(const JointDistribution& dist)
{
    double s = 0, i = 0, si = 0;
    for (std::size_t cs = 0; cs < dist.side(); ++cs)
        for (std::size_t ci = 0; ci < dist.side(); ++ci) {
            const double pr = dist(cs, ci);
            s += pr * static_cast<double>(cs);
            i += pr * static_cast<double>(ci);
            si += pr * static_cast<double>(cs * ci);
        }
    return detail::klyshko_from_moments(s, i, si);
}

} // namespace spcal
