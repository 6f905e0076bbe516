#pragma once

// Synthetic subject profiles. All times are minutes from simulation start.
//
// Profile file (JSON):
//   {
//     "subject_id": "S01",
//     "baseline_hr_bpm": 68, "baseline_rmssd_ms": 42, "hr_window_sd_bpm": 1.5,
//     "noise_rms": 0.05, "drift_amp": 0.1,
//     "stress_schedule": [{"start_min": 0, "level": 0}, {"start_min": 600, "level": 3}],
//     "stress_effect": {"hr_delta_bpm": [0, 10, 15, 20, 25],
//                       "rmssd_multiplier": [1, 0.85, 0.75, 0.65, 0.55]},
//     "adherence_prob": 0.8,
//     "response_delay_min": {"distribution": "exponential", "mean": 5},
//     "label_noise_prob": 0.05,
//     "dropouts": [{"start_min": 600, "end_min": 720}],
//     "high_volume": false, "duration_days": 30
//   }

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "stressmon/error.hpp"
#include "stressmon/labels.hpp"
#include "stressmon/signal/peaks.hpp"

namespace stressmon::sim {

using json = nlohmann::json;

struct ScheduleSegment {
    double start_min = 0.0;
    StressLevel level = StressLevel::NotAtAll;
    bool operator==(const ScheduleSegment&) const = default;
};

struct StressEffect {
    std::array<double, 5> hr_delta_bpm{0.0, 10.0, 15.0, 20.0, 25.0};
    std::array<double, 5> rmssd_multiplier{1.0, 0.85, 0.75, 0.65, 0.55};
    bool operator==(const StressEffect&) const = default;
};

enum class DelayKind { Fixed, Exponential };

struct ResponseDelay {
    DelayKind kind = DelayKind::Exponential;
    double mean_min = 5.0;

    double sample(std::mt19937_64& rng) const {
        if (kind == DelayKind::Fixed || mean_min <= 0.0) return std::max(0.0, mean_min);
        return std::exponential_distribution<double>(1.0 / mean_min)(rng);
    }
    bool operator==(const ResponseDelay&) const = default;
};

struct Dropout {
    double start_min = 0.0;
    double end_min = 0.0;
    bool operator==(const Dropout&) const = default;
};

struct SubjectProfile {
    std::string subject_id = "S01";
    double baseline_hr_bpm = 70.0;
    double baseline_rmssd_ms = 40.0;
    double hr_window_sd_bpm = 1.5;
    double noise_rms = 0.05;
    double drift_amp = 0.1;
    std::vector<ScheduleSegment> stress_schedule{{0.0, StressLevel::NotAtAll}};
    StressEffect stress_effect{};
    double adherence_prob = 0.8;
    ResponseDelay response_delay{};
    double label_noise_prob = 0.0;
    std::vector<Dropout> dropouts;
    bool high_volume = false;
    double duration_days = 30.0;

    /// Ground truth at `minute`; the schedule is piecewise constant.
    StressLevel level_at(double minute) const {
        StressLevel l = stress_schedule.front().level;
        for (const auto& s : stress_schedule) {
            if (s.start_min > minute) break;
            l = s.level;
        }
        return l;
    }

    double hr_for(StressLevel l) const { return baseline_hr_bpm + stress_effect.hr_delta_bpm[static_cast<std::size_t>(l)]; }
    double rmssd_for(StressLevel l) const {
        return baseline_rmssd_ms * stress_effect.rmssd_multiplier[static_cast<std::size_t>(l)];
    }

    /// Dropout covering `minute`, if any.
    const Dropout* dropout_at(double minute) const {
        for (const auto& d : dropouts)
            if (minute >= d.start_min && minute < d.end_min) return &d;
        return nullptr;
    }

    void validate() const {
        auto bad = [&](const std::string& what) { fail(ErrorKind::Validation, "profile", subject_id + ": " + what); };
        if (subject_id.empty()) bad("empty subject id");
        if (stress_schedule.empty()) bad("empty stress schedule");
        for (std::size_t i = 1; i < stress_schedule.size(); ++i)
            if (!(stress_schedule[i].start_min > stress_schedule[i - 1].start_min)) bad("schedule must be increasing");
        if (!(adherence_prob >= 0.0 && adherence_prob <= 1.0)) bad("adherence_prob outside [0, 1]");
        if (!(label_noise_prob >= 0.0 && label_noise_prob <= 1.0)) bad("label_noise_prob outside [0, 1]");
        if (response_delay.mean_min < 0.0) bad("negative response delay");
        if (baseline_rmssd_ms < 0.0 || hr_window_sd_bpm < 0.0 || noise_rms < 0.0 || drift_amp < 0.0)
            bad("negative physiology parameter");
        // Per-window HR variation is clipped to 3 sd, so check that envelope.
        const double lo_bpm = 60000.0 / signal::kMaxBeatIntervalMs, hi_bpm = 60000.0 / signal::kMinBeatIntervalMs;
        for (std::size_t l = 0; l < 5; ++l) {
            const double hr = hr_for(static_cast<StressLevel>(l));
            if (hr - 3.0 * hr_window_sd_bpm < lo_bpm || hr + 3.0 * hr_window_sd_bpm > hi_bpm)
                bad("heart rate leaves the 42-210 bpm band at level " + std::to_string(l));
            if (stress_effect.rmssd_multiplier[l] < 0.0) bad("negative RMSSD multiplier");
        }
        for (const auto& d : dropouts)
            if (!(d.end_min > d.start_min)) bad("dropout must end after it starts");
        if (!(duration_days > 0.0)) bad("duration must be positive");
    }

    bool operator==(const SubjectProfile&) const = default;
};

inline json to_json(const SubjectProfile& p) {
    json sched = json::array(), drops = json::array();
    for (const auto& s : p.stress_schedule) sched.push_back({{"start_min", s.start_min}, {"level", static_cast<int>(s.level)}});
    for (const auto& d : p.dropouts) drops.push_back({{"start_min", d.start_min}, {"end_min", d.end_min}});
    return {{"subject_id", p.subject_id},
            {"baseline_hr_bpm", p.baseline_hr_bpm},
            {"baseline_rmssd_ms", p.baseline_rmssd_ms},
            {"hr_window_sd_bpm", p.hr_window_sd_bpm},
            {"noise_rms", p.noise_rms},
            {"drift_amp", p.drift_amp},
            {"stress_schedule", sched},
            {"stress_effect", {{"hr_delta_bpm", p.stress_effect.hr_delta_bpm}, {"rmssd_multiplier", p.stress_effect.rmssd_multiplier}}},
            {"adherence_prob", p.adherence_prob},
            {"response_delay_min",
             {{"distribution", p.response_delay.kind == DelayKind::Fixed ? "fixed" : "exponential"},
              {"mean", p.response_delay.mean_min}}},
            {"label_noise_prob", p.label_noise_prob},
            {"dropouts", drops},
            {"high_volume", p.high_volume},
            {"duration_days", p.duration_days}};
}

inline SubjectProfile profile_from_json(const json& j) {
    SubjectProfile p;
    try {
        p.subject_id = j.at("subject_id").get<std::string>();
        p.baseline_hr_bpm = j.value("baseline_hr_bpm", p.baseline_hr_bpm);
        p.baseline_rmssd_ms = j.value("baseline_rmssd_ms", p.baseline_rmssd_ms);
        p.hr_window_sd_bpm = j.value("hr_window_sd_bpm", p.hr_window_sd_bpm);
        p.noise_rms = j.value("noise_rms", p.noise_rms);
        p.drift_amp = j.value("drift_amp", p.drift_amp);
        if (j.contains("stress_schedule")) {
            p.stress_schedule.clear();
            for (const auto& s : j.at("stress_schedule")) {
                const auto level = stress_level_from_int(s.at("level").get<int>());
                if (!level) fail(ErrorKind::Validation, "profile", "schedule level outside 0-4");
                p.stress_schedule.push_back({s.at("start_min").get<double>(), *level});
            }
        }
        if (j.contains("stress_effect")) {
            const auto& e = j.at("stress_effect");
            if (e.contains("hr_delta_bpm")) p.stress_effect.hr_delta_bpm = e.at("hr_delta_bpm").get<std::array<double, 5>>();
            if (e.contains("rmssd_multiplier"))
                p.stress_effect.rmssd_multiplier = e.at("rmssd_multiplier").get<std::array<double, 5>>();
        }
        p.adherence_prob = j.value("adherence_prob", p.adherence_prob);
        if (j.contains("response_delay_min")) {
            const auto& d = j.at("response_delay_min");
            const auto kind = d.value("distribution", std::string("exponential"));
            if (kind != "fixed" && kind != "exponential")
                fail(ErrorKind::Validation, "profile", "response delay distribution must be fixed or exponential");
            p.response_delay.kind = kind == "fixed" ? DelayKind::Fixed : DelayKind::Exponential;
            p.response_delay.mean_min = d.value("mean", p.response_delay.mean_min);
        }
        p.label_noise_prob = j.value("label_noise_prob", p.label_noise_prob);
        if (j.contains("dropouts"))
            for (const auto& d : j.at("dropouts"))
                p.dropouts.push_back({d.at("start_min").get<double>(), d.at("end_min").get<double>()});
        p.high_volume = j.value("high_volume", p.high_volume);
        p.duration_days = j.value("duration_days", p.duration_days);
    } catch (const json::exception& e) {
        fail(ErrorKind::Validation, "profile", std::string("malformed profile: ") + e.what());
    }
    p.validate();
    return p;
}

inline SubjectProfile load_profile(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "profile_open", "cannot open profile " + path);
    try {
        return profile_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Validation, "profile", path + ": " + e.what());
    }
}

/// Random piecewise-constant schedule: segments of 1-6 h, mostly calm.
inline std::vector<ScheduleSegment> random_schedule(std::mt19937_64& rng, double duration_min) {
    std::uniform_real_distribution<double> len(60.0, 360.0);
    std::discrete_distribution<int> level({45, 20, 15, 12, 8});
    std::vector<ScheduleSegment> out;
    for (double t = 0.0; t < duration_min; t += len(rng)) {
        auto l = static_cast<StressLevel>(level(rng));
        if (!out.empty() && out.back().level == l) continue;
        out.push_back({t, l});
    }
    return out;
}

/// Baseline heart rates are spread evenly over 58-88 bpm before shuffling,
/// so any cohort of two or more spans at least 20 bpm. Profile 0 is the
/// high-volume subject: 90 days, no dropouts, high adherence.
inline std::vector<SubjectProfile> make_cohort(std::size_t n, std::uint64_t seed, double days = 30.0) {
    if (n < 1) fail(ErrorKind::InvalidArgument, "cohort_size", "cohort needs at least one subject");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> hr(n);
    for (std::size_t i = 0; i < n; ++i)
        hr[i] = n == 1 ? 70.0 : 58.0 + 30.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    std::shuffle(hr.begin(), hr.end(), rng);

    std::vector<SubjectProfile> out;
    for (std::size_t i = 0; i < n; ++i) {
        SubjectProfile p;
        char id[32];
        std::snprintf(id, sizeof id, "S%02zu", i + 1);
        p.subject_id = id;
        p.baseline_hr_bpm = hr[i];
        p.baseline_rmssd_ms = 25.0 + 35.0 * u(rng);
        p.adherence_prob = 0.6 + 0.35 * u(rng);
        p.response_delay.mean_min = 2.0 + 6.0 * u(rng);
        p.label_noise_prob = 0.1 * u(rng);
        p.high_volume = i == 0;
        p.duration_days = p.high_volume ? std::max(days, 90.0) : days;
        const double total_min = p.duration_days * 24.0 * 60.0;
        p.stress_schedule = random_schedule(rng, total_min);
        if (!p.high_volume) {
            const int drops = 1 + static_cast<int>(u(rng) * 3.0);
            for (int k = 0; k < drops; ++k) {
                const double start = u(rng) * (total_min - 300.0);
                p.dropouts.push_back({start, start + 60.0 + 180.0 * u(rng)});
            }
            std::sort(p.dropouts.begin(), p.dropouts.end(),
                      [](const Dropout& a, const Dropout& b) { return a.start_min < b.start_min; });
        } else {
            p.adherence_prob = 0.95;
        }
        p.validate();
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace stressmon::sim
