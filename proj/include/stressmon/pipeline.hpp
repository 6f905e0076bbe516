#pragma once

// Raw window -> band-pass -> moving average -> peaks -> NN -> features.

#include <optional>
#include <string>

#include "stressmon/hrv/features.hpp"
#include "stressmon/signal/filter.hpp"
#include "stressmon/signal/peaks.hpp"
#include "stressmon/signal/smoothing.hpp"
#include "stressmon/signal/window.hpp"
#include "stressmon/util/numeric.hpp"

namespace stressmon {

struct PipelineConfig {
    signal::FilterSpec filter{};
    std::size_t moving_average_len = 3;
    /// The smoothed signal is spline-interpolated by this factor before peak
    /// search, so beat times are not quantised to the raw sample period.
    std::size_t peak_upsample = 5;
    signal::PeakDetectorConfig peaks{.edge_guard_s = 1.0};
    hrv::BreathingConfig breathing{};
    /// Windows with fewer usable NN intervals are stored but not analysed further.
    std::size_t min_intervals = 4;
};

struct PipelineResult {
    signal::PeakList peaks;
    std::optional<hrv::FeatureVector> features;
    std::string reject_reason; // empty when usable

    bool usable() const noexcept { return features.has_value(); }
};

class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg = {}) : cfg_(std::move(cfg)) {}

    const PipelineConfig& config() const noexcept { return cfg_; }

    /// Design errors and rate mismatches throw; beat-level shortfalls come
    /// back as an unusable result.
    PipelineResult run(const signal::RawWindow& w) const {
        auto spec = cfg_.filter;
        spec.sample_rate_hz = w.sample_rate_hz;
        const auto coeffs = signal::design_bandpass(spec);
        const auto filtered = signal::apply_filter(coeffs, w.ppg);
        const auto smooth = signal::moving_average(filtered, cfg_.moving_average_len);

        PipelineResult r;
        if (cfg_.peak_upsample > 1) {
            const auto fine = upsample(smooth, cfg_.peak_upsample);
            r.peaks = signal::detect_peaks(fine, w.sample_rate_hz * static_cast<double>(cfg_.peak_upsample), cfg_.peaks);
        } else {
            r.peaks = signal::detect_peaks(smooth, w.sample_rate_hz, cfg_.peaks);
        }
        try {
            const auto nn = hrv::nn_from_peaks(r.peaks);
            if (nn.size() < cfg_.min_intervals)
                fail(ErrorKind::InsufficientData, "insufficient_intervals", "too few NN intervals");
            r.features = hrv::compute_features(nn, cfg_.breathing);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::InsufficientData) throw;
            r.reject_reason = e.code();
        }
        return r;
    }

    /// Natural cubic spline through the samples, evaluated `factor` times per
    /// sample period. Output has (n - 1) * factor + 1 points.
    static std::vector<double> upsample(const std::vector<double>& x, std::size_t factor) {
        std::vector<double> knots(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) knots[i] = static_cast<double>(i);
        const util::CubicSpline spline(std::move(knots), x);
        std::vector<double> out((x.size() - 1) * factor + 1);
        for (std::size_t j = 0; j < out.size(); ++j)
            out[j] = spline(static_cast<double>(j) / static_cast<double>(factor));
        return out;
    }

private:
    PipelineConfig cfg_;
};

} // namespace stressmon
