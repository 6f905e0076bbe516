#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "stressmon/error.hpp"

namespace stressmon::signal {

/// Shortest admissible beat-to-beat interval (210 bpm).
inline constexpr double kMinBeatIntervalMs = 60000.0 / 210.0;
/// Longest admissible beat-to-beat interval (42 bpm).
inline constexpr double kMaxBeatIntervalMs = 60000.0 / 42.0;

struct PeakList {
    std::vector<std::size_t> indices;
    double sample_rate_hz = 20.0;

    std::size_t size() const noexcept { return indices.size(); }
    bool empty() const noexcept { return indices.empty(); }
    double time_ms(std::size_t k) const { return static_cast<double>(indices[k]) * 1000.0 / sample_rate_hz; }
};

struct PeakDetectorConfig {
    double threshold_window_s = 2.0;
    double alpha = 0.5;
    double refractory_ms = kMinBeatIntervalMs;
    /// Samples this close to either end are never reported as peaks.
    double edge_guard_s = 0.0;
};

/// Smallest index gap that satisfies the refractory period.
inline std::size_t refractory_samples(double refractory_ms, double sample_rate_hz) {
    return static_cast<std::size_t>(std::ceil(refractory_ms * sample_rate_hz / 1000.0 - 1e-9));
}

/// Local maxima above a rolling mean + alpha * rolling std threshold. When two
/// candidates are closer than the refractory period the taller one is kept.
inline PeakList detect_peaks(std::span<const double> signal, double sample_rate_hz,
                             const PeakDetectorConfig& cfg = {}) {
    if (!(sample_rate_hz > 0.0))
        fail(ErrorKind::InvalidArgument, "peak_rate", "sample rate must be positive");
    PeakList out;
    out.sample_rate_hz = sample_rate_hz;
    const std::size_t n = signal.size();
    if (n < 3) return out;

    const auto half = static_cast<std::size_t>(std::llround(cfg.threshold_window_s * sample_rate_hz / 2.0));
    const auto guard = static_cast<std::size_t>(std::llround(cfg.edge_guard_s * sample_rate_hz));

    std::vector<std::size_t> candidates;
    for (std::size_t i = std::max<std::size_t>(1, guard); i + 1 < n && i + guard < n; ++i) {
        const double v = signal[i];
        if (!(v > signal[i - 1] && v >= signal[i + 1])) continue;
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n - 1, i + half);
        const double cnt = static_cast<double>(hi - lo + 1);
        double mean = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) mean += signal[j];
        mean /= cnt;
        double var = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) var += (signal[j] - mean) * (signal[j] - mean);
        const double sd = std::sqrt(var / cnt);
        if (v > mean + cfg.alpha * sd) candidates.push_back(i);
    }

    // Tallest first; earlier index wins among equal heights.
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return signal[candidates[a]] > signal[candidates[b]]; });

    const std::size_t min_gap = refractory_samples(cfg.refractory_ms, sample_rate_hz);
    std::vector<std::size_t> kept;
    for (std::size_t o : order) {
        const std::size_t idx = candidates[o];
        const bool clash = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
            return (k > idx ? k - idx : idx - k) < min_gap;
        });
        if (!clash) kept.push_back(idx);
    }
    std::sort(kept.begin(), kept.end());
    out.indices = std::move(kept);
    return out;
}

} // namespace stressmon::signal
