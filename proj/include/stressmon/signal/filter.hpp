#pragma once

// Butterworth band-pass design and zero-phase application as a cascade of
// second-order sections.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "stressmon/error.hpp"

namespace stressmon::signal {

struct FilterSpec {
    int order = 3;
    double low_cut_hz = 0.7;
    double high_cut_hz = 3.5;
    double sample_rate_hz = 20.0;

    void validate() const {
        if (order < 1)
            fail(ErrorKind::InvalidArgument, "filter_order", "filter order must be positive");
        if (!(sample_rate_hz > 0.0))
            fail(ErrorKind::InvalidArgument, "filter_rate", "sample rate must be positive");
        if (!(low_cut_hz > 0.0 && low_cut_hz < high_cut_hz))
            fail(ErrorKind::InvalidArgument, "filter_cutoff_order",
                 "cutoffs must satisfy 0 < low_cut < high_cut");
        if (!(high_cut_hz < sample_rate_hz / 2.0))
            fail(ErrorKind::InvalidArgument, "filter_nyquist", "high cutoff must be below Nyquist");
    }
};

/// One biquad, a[0] is implicitly 1.
struct Section {
    std::array<double, 3> b{};
    std::array<double, 3> a{1.0, 0.0, 0.0};
};

struct FilterCoefficients {
    std::vector<Section> sections;
    double gain = 1.0;

    /// Roots of every denominator lie strictly inside the unit circle.
    bool is_stable() const {
        for (const auto& s : sections) {
            const std::complex<double> disc = std::sqrt(std::complex<double>(s.a[1] * s.a[1] - 4.0 * s.a[2]));
            const auto r1 = (-s.a[1] + disc) / 2.0;
            const auto r2 = (-s.a[1] - disc) / 2.0;
            if (!(std::abs(r1) < 1.0 && std::abs(r2) < 1.0)) return false;
        }
        return true;
    }

    /// Complex response at frequency `f_hz`.
    std::complex<double> response(double f_hz, double sample_rate_hz) const {
        const double w = 2.0 * std::numbers::pi * f_hz / sample_rate_hz;
        const std::complex<double> z1 = std::polar(1.0, -w);
        const std::complex<double> z2 = z1 * z1;
        std::complex<double> h = gain;
        for (const auto& s : sections)
            h *= (s.b[0] + s.b[1] * z1 + s.b[2] * z2) / (1.0 + s.a[1] * z1 + s.a[2] * z2);
        return h;
    }

    double magnitude(double f_hz, double sample_rate_hz) const {
        return std::abs(response(f_hz, sample_rate_hz));
    }
};

namespace detail {

inline Section section_from_poles(std::complex<double> p1, std::complex<double> p2) {
    // Each band-pass section carries one zero at z = 1 and one at z = -1.
    Section s;
    s.b = {1.0, 0.0, -1.0};
    s.a = {1.0, -(p1 + p2).real(), (p1 * p2).real()};
    return s;
}

} // namespace detail

/// Analog Butterworth prototype -> low-pass to band-pass transform ->
/// bilinear transform with both edges prewarped. An analog order n yields n
/// sections. The gain is fixed so the response is exactly 1 at the digital
/// image of the geometric centre frequency.
inline FilterCoefficients design_bandpass(const FilterSpec& spec) {
    spec.validate();
    using cd = std::complex<double>;
    const double fs2 = 2.0 * spec.sample_rate_hz;
    const double wl = fs2 * std::tan(std::numbers::pi * spec.low_cut_hz / spec.sample_rate_hz);
    const double wh = fs2 * std::tan(std::numbers::pi * spec.high_cut_hz / spec.sample_rate_hz);
    const double bw = wh - wl;
    const double w0sq = wl * wh;

    auto bilinear = [fs2](cd s) { return (fs2 + s) / (fs2 - s); };

    FilterCoefficients out;
    const int n = spec.order;
    for (int k = 0; k < n; ++k) {
        const cd p = std::polar(1.0, std::numbers::pi * (2.0 * k + n + 1) / (2.0 * n));
        if (p.imag() < -1e-12) continue; // conjugates are covered by their upper-half partner
        // s^2 - p*bw*s + w0^2 = 0
        const cd pb = p * bw;
        const cd disc = std::sqrt(pb * pb - 4.0 * w0sq);
        const cd q1 = (pb + disc) / 2.0;
        const cd q2 = (pb - disc) / 2.0;
        if (std::abs(p.imag()) <= 1e-12) {
            // Real prototype pole: its two band-pass poles are a conjugate
            // pair or two reals; either way they form one real section.
            out.sections.push_back(detail::section_from_poles(bilinear(q1), bilinear(q2)));
        } else {
            out.sections.push_back(detail::section_from_poles(bilinear(q1), std::conj(bilinear(q1))));
            out.sections.push_back(detail::section_from_poles(bilinear(q2), std::conj(bilinear(q2))));
        }
    }

    const double centre_hz =
        spec.sample_rate_hz / std::numbers::pi * std::atan(std::sqrt(w0sq) / fs2);
    out.gain = 1.0 / out.magnitude(centre_hz, spec.sample_rate_hz);
    return out;
}

/// Pad length used for the odd extension in `apply_filter`; also the
/// minimum accepted signal length.
inline std::size_t edge_pad_length(const FilterCoefficients& coeffs) {
    return 3 * (2 * coeffs.sections.size() + 1);
}

namespace detail {

/// Direct form II transposed, in place, starting from state `zi` scaled by `x0`.
inline void run_cascade(const FilterCoefficients& c, std::vector<double>& x, double x0) {
    for (std::size_t k = 0; k < c.sections.size(); ++k) {
        const auto& s = c.sections[k];
        const double g = (k == 0) ? c.gain : 1.0;
        const double b0 = g * s.b[0], b1 = g * s.b[1], b2 = g * s.b[2];
        const double a1 = s.a[1], a2 = s.a[2];
        // Steady-state response of this section to a constant input x0.
        const double dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
        double z1 = (dc - b0) * x0;
        double z2 = (b2 - a2 * dc) * x0;
        for (double& v : x) {
            const double in = v;
            const double y = b0 * in + z1;
            z1 = b1 * in - a1 * y + z2;
            z2 = b2 * in - a2 * y;
            v = y;
        }
        x0 *= dc;
    }
}

} // namespace detail

/// Forward-backward (zero-phase) filtering with odd-reflection padding and
/// steady-state initial conditions. Output length equals input length.
inline std::vector<double> apply_filter(const FilterCoefficients& coeffs, std::span<const double> signal) {
    if (!coeffs.is_stable())
        fail(ErrorKind::InvalidArgument, "filter_unstable", "filter coefficients are unstable");
    const std::size_t pad = edge_pad_length(coeffs);
    const std::size_t n = signal.size();
    if (n <= pad)
        fail(ErrorKind::InsufficientData, "signal_too_short",
             "signal has " + std::to_string(n) + " samples, need more than " + std::to_string(pad));

    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * signal[0] - signal[i]);
    ext.insert(ext.end(), signal.begin(), signal.end());
    for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * signal[n - 1] - signal[n - 1 - i]);

    detail::run_cascade(coeffs, ext, ext.front());
    std::reverse(ext.begin(), ext.end());
    detail::run_cascade(coeffs, ext, ext.front());
    std::reverse(ext.begin(), ext.end());

    return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

} // namespace stressmon::signal
