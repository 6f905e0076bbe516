#pragma once

// Independent references for the default band-pass (order 3, 0.7-3.5 Hz,
// fs = 20 Hz).

#include <array>
#include <cmath>
#include <complex>
#include <numbers>

namespace oracle {

/// Second-order sections [b0 b1 b2 a0 a1 a2] produced by an external
/// filter-design package for the default spec, frozen here.
inline constexpr std::array<std::array<double, 6>, 3> kReferenceSos = {{
    {0.04187682823477174, 0.08375365646954348, 0.04187682823477174, 1.0, -1.1876615738685024, 0.36002215309575664},
    {1.0, 0.0, -1.0, 1.0, -0.7516876787737752, 0.5235020598022636},
    {1.0, -2.0, 1.0, 1.0, -1.7985097009788722, 0.8477059473900113},
}};

inline double reference_sos_magnitude(double f_hz, double fs = 20.0) {
    const double w = 2.0 * std::numbers::pi * f_hz / fs;
    const std::complex<double> z1 = std::polar(1.0, -w), z2 = z1 * z1;
    std::complex<double> h = 1.0;
    for (const auto& s : kReferenceSos) h *= (s[0] + s[1] * z1 + s[2] * z2) / (s[3] + s[4] * z1 + s[5] * z2);
    return std::abs(h);
}

/// Closed-form magnitude of a bilinear-transformed Butterworth band-pass:
/// |H| = 1 / sqrt(1 + x^(2n)), x = (W^2 - Wl*Wh) / (W * (Wh - Wl)),
/// with every W = tan(pi f / fs).
inline double analytic_bandpass_magnitude(double f_hz, int order = 3, double lo = 0.7, double hi = 3.5, double fs = 20.0) {
    const double wl = std::tan(std::numbers::pi * lo / fs), wh = std::tan(std::numbers::pi * hi / fs);
    const double w = std::tan(std::numbers::pi * f_hz / fs);
    const double x = (w * w - wl * wh) / (w * (wh - wl));
    return 1.0 / std::sqrt(1.0 + std::pow(x * x, order));
}

inline double to_db(double mag) { return 20.0 * std::log10(mag); }

} // namespace oracle
