#pragma once

// Synthetic PPG generator. Serves as the ground-truth oracle for the beat
// detector and as the signal engine of the device simulator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "stressmon/error.hpp"
#include "stressmon/signal/peaks.hpp"
#include "stressmon/signal/window.hpp"

namespace stressmon::signal {

/// Piecewise-constant heart rate: `bpm[i]` holds from `start_s[i]` until the
/// next breakpoint.
struct HrProfile {
    std::vector<double> start_s{0.0};
    std::vector<double> bpm{60.0};

    static HrProfile constant(double rate) { return {{0.0}, {rate}}; }

    double at(double t_s) const {
        std::size_t k = 0;
        while (k + 1 < start_s.size() && start_s[k + 1] <= t_s) ++k;
        return bpm[k];
    }
};

struct SynthParams {
    HrProfile hr = HrProfile::constant(60.0);
    double hrv_jitter_ms = 0.0;
    double noise_rms = 0.0;
    double drift_amp = 0.0;
    double duration_s = kDefaultWindowSeconds;
    double sample_rate_hz = kDefaultSampleRateHz;
    std::uint64_t seed = 0;
    std::string subject_id = "synthetic";
    std::int64_t start_time_ms = 0;
};

struct SyntheticWindow {
    RawWindow window;
    /// Systolic peak times relative to the window start.
    std::vector<double> beat_times_ms;
};

namespace detail {

/// One beat: asymmetric systolic lobe plus a smaller, later dicrotic lobe.
/// Widths scale with the beat period so fast rhythms stay separable.
struct PulseShape {
    double rise_ms, fall_ms, dicrotic_delay_ms, dicrotic_width_ms;
    static constexpr double kDicroticAmp = 0.25;

    explicit PulseShape(double period_ms)
        : rise_ms(0.07 * period_ms), fall_ms(0.14 * period_ms), dicrotic_delay_ms(0.36 * period_ms),
          dicrotic_width_ms(0.09 * period_ms) {}

    double operator()(double dt_ms) const {
        const double s = dt_ms < 0 ? rise_ms : fall_ms;
        const double sys = std::exp(-0.5 * (dt_ms / s) * (dt_ms / s));
        const double u = (dt_ms - dicrotic_delay_ms) / dicrotic_width_ms;
        return sys + kDicroticAmp * std::exp(-0.5 * u * u);
    }
    double support_before() const { return 5.0 * rise_ms; }
    double support_after() const { return dicrotic_delay_ms + 5.0 * dicrotic_width_ms; }
};

} // namespace detail

/// Noise-free pulse train power (mean-removed), used to convert a target SNR
/// into a noise level.
inline double clean_signal_power(const std::vector<double>& x) {
    if (x.empty()) return 0.0;
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double p = 0.0;
    for (double v : x) p += (v - mean) * (v - mean);
    return p / static_cast<double>(x.size());
}

inline SyntheticWindow synthesize_ppg(const SynthParams& p) {
    if (p.hr.start_s.empty() || p.hr.start_s.size() != p.hr.bpm.size())
        fail(ErrorKind::InvalidArgument, "hr_profile_shape", "heart-rate profile breakpoints and values differ in length");
    for (double b : p.hr.bpm)
        if (!(b >= 42.0 && b <= 210.0))
            fail(ErrorKind::InvalidArgument, "hr_profile_range", "heart rate outside [42, 210] bpm");
    if (!(p.duration_s > 0.0) || !(p.sample_rate_hz > 0.0) || p.hrv_jitter_ms < 0.0 || p.noise_rms < 0.0)
        fail(ErrorKind::InvalidArgument, "synth_params", "invalid synthesis parameters");

    std::mt19937_64 rng(p.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const double duration_ms = p.duration_s * 1000.0;
    SyntheticWindow out;
    out.window.subject_id = p.subject_id;
    out.window.start_time_ms = p.start_time_ms;
    out.window.sample_rate_hz = p.sample_rate_hz;
    const std::size_t n = expected_samples(p.duration_s, p.sample_rate_hz);
    std::vector<double> clean(n, 0.0);

    // Beat times: random phase, then jittered intervals clamped to the
    // physiological band.
    double t = unit(rng) * 60000.0 / p.hr.at(0.0);
    std::vector<double> periods;
    while (t < duration_ms) {
        out.beat_times_ms.push_back(t);
        double period = 60000.0 / p.hr.at(t / 1000.0);
        periods.push_back(period);
        double interval = period + p.hrv_jitter_ms * gauss(rng);
        interval = std::clamp(interval, kMinBeatIntervalMs, kMaxBeatIntervalMs);
        t += interval;
    }

    const double dt_ms = 1000.0 / p.sample_rate_hz;
    for (std::size_t b = 0; b < out.beat_times_ms.size(); ++b) {
        const double tb = out.beat_times_ms[b];
        const detail::PulseShape shape(periods[b]);
        const double lo = std::max(0.0, std::ceil((tb - shape.support_before()) / dt_ms));
        const double hi = std::min(static_cast<double>(n) - 1.0, std::floor((tb + shape.support_after()) / dt_ms));
        for (double i = lo; i <= hi; i += 1.0) clean[static_cast<std::size_t>(i)] += shape(i * dt_ms - tb);
    }

    const double drift_hz = 0.05 + 0.15 * unit(rng);
    const double drift_phase = 2.0 * std::numbers::pi * unit(rng);
    out.window.ppg.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double ts = static_cast<double>(i) / p.sample_rate_hz;
        const double drift = p.drift_amp * std::sin(2.0 * std::numbers::pi * drift_hz * ts + drift_phase);
        out.window.ppg[i] = clean[i] + drift + p.noise_rms * gauss(rng);
    }
    return out;
}

/// Noise RMS giving the requested SNR (dB) for the noise-free pulse train of `p`.
inline double noise_rms_for_snr(SynthParams p, double snr_db) {
    p.noise_rms = 0.0;
    p.drift_amp = 0.0;
    const auto clean = synthesize_ppg(p);
    return std::sqrt(clean_signal_power(clean.window.ppg) / std::pow(10.0, snr_db / 10.0));
}

} // namespace stressmon::signal
