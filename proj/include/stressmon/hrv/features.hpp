#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "stressmon/error.hpp"
#include "stressmon/signal/peaks.hpp"
#include "stressmon/util/numeric.hpp"

namespace stressmon::hrv {

/// Successive beat-to-beat intervals. `contiguous[i]` is false when an
/// artifact interval was dropped between interval i-1 and interval i, in
/// which case no successive difference is formed across that gap.
struct NnSeries {
    std::vector<double> intervals_ms;
    /// Time of the beat closing each interval, relative to the window start.
    std::vector<double> beat_times_ms;
    std::vector<char> contiguous;

    std::size_t size() const noexcept { return intervals_ms.size(); }

    std::vector<double> successive_differences() const {
        std::vector<double> d;
        for (std::size_t i = 1; i < intervals_ms.size(); ++i)
            if (contiguous[i]) d.push_back(intervals_ms[i] - intervals_ms[i - 1]);
        return d;
    }

    /// Builds a gap-free series whose beats start at `first_beat_ms`.
    static NnSeries from_intervals(const std::vector<double>& intervals, double first_beat_ms = 0.0) {
        NnSeries s;
        double t = first_beat_ms;
        for (std::size_t i = 0; i < intervals.size(); ++i) {
            t += intervals[i];
            s.intervals_ms.push_back(intervals[i]);
            s.beat_times_ms.push_back(t);
            s.contiguous.push_back(i > 0 ? 1 : 0);
        }
        return s;
    }
};

namespace detail {
// Tolerance so the exact 42 / 210 bpm band edges survive rounding.
inline constexpr double kBandSlackMs = 1e-6;
} // namespace detail

/// Intervals outside the 42-210 bpm band are dropped. A too-short interval
/// marks its closing beat as spurious, so the interval that starts at that
/// beat is dropped as well.
inline NnSeries nn_from_peaks(const signal::PeakList& peaks) {
    if (peaks.size() < 3)
        fail(ErrorKind::InsufficientData, "insufficient_beats",
             "need at least 3 peaks, got " + std::to_string(peaks.size()));
    NnSeries out;
    bool spurious_start = false;
    bool prev_kept = false;
    for (std::size_t k = 1; k < peaks.size(); ++k) {
        const double iv = peaks.time_ms(k) - peaks.time_ms(k - 1);
        const bool too_short = iv < signal::kMinBeatIntervalMs - detail::kBandSlackMs;
        const bool too_long = iv > signal::kMaxBeatIntervalMs + detail::kBandSlackMs;
        const bool keep = !too_short && !too_long && !spurious_start;
        if (keep) {
            out.intervals_ms.push_back(iv);
            out.beat_times_ms.push_back(peaks.time_ms(k));
            out.contiguous.push_back(prev_kept ? 1 : 0);
        }
        prev_kept = keep;
        spurious_start = too_short;
    }
    if (out.size() < 2)
        fail(ErrorKind::InsufficientData, "insufficient_beats",
             "only " + std::to_string(out.size()) + " usable intervals");
    return out;
}

enum FeatureFlag : unsigned {
    kSd2Clamped = 1u << 0,     // SD2 radicand was negative
    kBrDegenerate = 1u << 1,   // no usable in-band respiratory peak
    kBrUnavailable = 1u << 2,  // tachogram too short for a breathing estimate
};

inline constexpr std::size_t kFeatureCount = 13;
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "bpm", "ibi", "sdnn", "sdsd", "rmssd", "pnn20", "pnn50", "mad", "sd1", "sd2", "s", "sd_ratio", "br"};

using FeatureArray = std::array<double, kFeatureCount>;

struct FeatureVector {
    double bpm = 0, ibi_ms = 0, sdnn_ms = 0, sdsd_ms = 0, rmssd_ms = 0;
    double pnn20 = 0, pnn50 = 0, mad_ms = 0;
    double sd1_ms = 0, sd2_ms = 0, s_area_ms2 = 0, sd_ratio = 0;
    double br_per_min = 0;
    unsigned flags = 0;

    FeatureArray to_array() const {
        return {bpm, ibi_ms, sdnn_ms, sdsd_ms, rmssd_ms, pnn20, pnn50, mad_ms, sd1_ms, sd2_ms, s_area_ms2, sd_ratio, br_per_min};
    }

    static FeatureVector from_array(const FeatureArray& a, unsigned flags = 0) {
        FeatureVector f;
        f.bpm = a[0]; f.ibi_ms = a[1]; f.sdnn_ms = a[2]; f.sdsd_ms = a[3]; f.rmssd_ms = a[4];
        f.pnn20 = a[5]; f.pnn50 = a[6]; f.mad_ms = a[7]; f.sd1_ms = a[8]; f.sd2_ms = a[9];
        f.s_area_ms2 = a[10]; f.sd_ratio = a[11]; f.br_per_min = a[12];
        f.flags = flags;
        return f;
    }

    bool operator==(const FeatureVector&) const = default;
};

/// The breathing estimate is always tagged "br_spectral" so exported data
/// records which estimator produced it.
inline std::string flags_to_string(unsigned flags) {
    std::string s = "br_spectral";
    if (flags & kSd2Clamped) s += "|sd2_clamped";
    if (flags & kBrDegenerate) s += "|br_degenerate";
    if (flags & kBrUnavailable) s += "|br_unavailable";
    return s;
}

inline unsigned flags_from_string(std::string_view s) {
    unsigned f = 0;
    if (s.find("sd2_clamped") != std::string_view::npos) f |= kSd2Clamped;
    if (s.find("br_degenerate") != std::string_view::npos) f |= kBrDegenerate;
    if (s.find("br_unavailable") != std::string_view::npos) f |= kBrUnavailable;
    return f;
}

struct BreathingConfig {
    double resample_hz = 4.0;
    double band_low_hz = 0.1;
    double band_high_hz = 0.4;
    double min_span_s = 30.0;
    std::size_t min_fft_size = 4096;
};

struct BreathingEstimate {
    double breaths_per_min = 0.0;
    bool degenerate = false;
};

/// Tachogram spectrum: natural cubic spline onto a uniform grid, mean
/// removal, Hann window, zero-padded FFT magnitude, peak picked inside the
/// respiratory band. Flagged degenerate when the tachogram is flat or the
/// dominant non-DC peak lies outside the band.
inline BreathingEstimate breathing_rate(const NnSeries& nn, const BreathingConfig& cfg = {}) {
    if (nn.size() < 2)
        fail(ErrorKind::InsufficientData, "br_span", "tachogram needs at least two beats");
    const double t0 = nn.beat_times_ms.front();
    const double span_s = (nn.beat_times_ms.back() - t0) / 1000.0;
    if (span_s < cfg.min_span_s)
        fail(ErrorKind::InsufficientData, "br_span", "tachogram spans less than the minimum breathing window");

    std::vector<double> knots_s(nn.size());
    for (std::size_t i = 0; i < nn.size(); ++i) knots_s[i] = (nn.beat_times_ms[i] - t0) / 1000.0;
    const util::CubicSpline spline(knots_s, nn.intervals_ms);

    const auto m = static_cast<std::size_t>(std::floor(span_s * cfg.resample_hz)) + 1;
    std::vector<double> grid(m);
    for (std::size_t i = 0; i < m; ++i) grid[i] = spline(static_cast<double>(i) / cfg.resample_hz);
    const double mu = util::mean(grid);
    double energy = 0.0;
    for (double& v : grid) {
        v -= mu;
        energy += v * v;
    }
    if (energy <= 1e-18 * mu * mu * static_cast<double>(m)) return {0.0, true};

    const std::size_t nfft = std::max(cfg.min_fft_size, util::next_pow2(m));
    std::vector<std::complex<double>> buf(nfft);
    for (std::size_t i = 0; i < m; ++i) {
        const double w = m > 1 ? 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(m - 1))) : 1.0;
        buf[i] = grid[i] * w;
    }
    util::fft(buf);

    const double df = cfg.resample_hz / static_cast<double>(nfft);
    std::size_t best_any = 1, best_band = 0;
    double mag_any = -1.0, mag_band = -1.0;
    for (std::size_t k = 1; k <= nfft / 2; ++k) {
        const double mag = std::abs(buf[k]);
        const double f = static_cast<double>(k) * df;
        if (mag > mag_any) { mag_any = mag; best_any = k; }
        if (f >= cfg.band_low_hz && f <= cfg.band_high_hz && mag > mag_band) { mag_band = mag; best_band = k; }
    }
    const double f_any = static_cast<double>(best_any) * df;
    const bool outside = f_any < cfg.band_low_hz || f_any > cfg.band_high_hz;
    return {60.0 * static_cast<double>(best_band) * df, outside};
}

/// The thirteen time-domain, Poincare and breathing features of one window.
/// Variances are population (1/N) throughout.
inline FeatureVector compute_features(const NnSeries& nn, const BreathingConfig& br_cfg = {}) {
    if (nn.size() < 4)
        fail(ErrorKind::InsufficientData, "insufficient_intervals",
             "need at least 4 NN intervals, got " + std::to_string(nn.size()));
    const auto d = nn.successive_differences();
    if (d.size() < 3)
        fail(ErrorKind::InsufficientData, "insufficient_intervals", "need at least 3 successive differences");

    const auto& x = nn.intervals_ms;
    FeatureVector f;
    f.ibi_ms = util::mean(x);
    f.bpm = 60000.0 / f.ibi_ms;
    const double var_nn = util::variance(x);
    f.sdnn_ms = std::sqrt(var_nn);
    const double var_d = util::variance(d);
    f.sdsd_ms = std::sqrt(var_d);
    double sq = 0.0;
    std::size_t over20 = 0, over50 = 0;
    for (double v : d) {
        sq += v * v;
        if (std::abs(v) > 20.0) ++over20;
        if (std::abs(v) > 50.0) ++over50;
    }
    const double nd = static_cast<double>(d.size());
    f.rmssd_ms = std::sqrt(sq / nd);
    f.pnn20 = static_cast<double>(over20) / nd;
    f.pnn50 = static_cast<double>(over50) / nd;

    const double med = util::median(x);
    std::vector<double> dev(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) dev[i] = std::abs(x[i] - med);
    f.mad_ms = util::median(std::move(dev));

    f.sd1_ms = std::sqrt(var_d / 2.0);
    double rad = 2.0 * var_nn - var_d / 2.0;
    if (rad < 0.0) {
        rad = 0.0;
        f.flags |= kSd2Clamped;
    }
    f.sd2_ms = std::sqrt(rad);
    f.s_area_ms2 = std::numbers::pi * f.sd1_ms * f.sd2_ms;
    if (f.sd2_ms > 0.0) {
        f.sd_ratio = f.sd1_ms / f.sd2_ms;
    } else {
        f.sd_ratio = 0.0;
        if (f.sd1_ms > 0.0) f.flags |= kSd2Clamped;
    }

    try {
        const auto br = breathing_rate(nn, br_cfg);
        f.br_per_min = br.breaths_per_min;
        if (br.degenerate) f.flags |= kBrDegenerate;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::InsufficientData) throw;
        f.br_per_min = 0.0;
        f.flags |= kBrUnavailable;
    }
    return f;
}

} // namespace stressmon::hrv
