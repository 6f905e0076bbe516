#pragma once

// Discrete-event device simulator. One SubjectSimulator plays a watch that
// captures a window every 15 minutes and a participant who answers prompts.
// Simulated time drives everything; SimClock optionally paces it against
// the wall clock.

#include <chrono>
#include <climits>
#include <cmath>
#include <cstdint>
#include <deque>
#include <exception>
#include <optional>
#include <ostream>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "stressmon/signal/synth.hpp"
#include "stressmon/sim/endpoint.hpp"
#include "stressmon/sim/profile.hpp"

namespace stressmon::sim {

inline constexpr std::int64_t kWindowCadenceMs = 15 * 60 * 1000;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
    return h;
}

/// Maps simulated time to wall time. accel <= 0 runs unpaced.
class SimClock {
public:
    SimClock(std::int64_t sim_start_ms, double accel)
        : sim_start_(sim_start_ms), accel_(accel), wall_start_(std::chrono::steady_clock::now()) {}

    void wait_until(std::int64_t sim_ms) const {
        if (accel_ <= 0.0) return;
        const auto wall = std::chrono::duration<double, std::milli>(static_cast<double>(sim_ms - sim_start_) / accel_);
        std::this_thread::sleep_until(wall_start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(wall));
    }

    double accel() const noexcept { return accel_; }

private:
    std::int64_t sim_start_;
    double accel_;
    std::chrono::steady_clock::time_point wall_start_;
};

struct SimOptions {
    std::int64_t start_ms = 1767225600000; // 2026-01-01T00:00:00Z
    double days = 0.0;                     // <= 0: the profile's duration
    std::uint64_t seed = 1;
    std::int64_t capture_ms = 120000;
    int max_attempts = 5;
    std::int64_t retry_interval_ms = 5 * 60 * 1000;
    bool respond = true;
    double accel = 0.0;
};

/// One planned capture.
struct PlannedWindow {
    std::int64_t start_ms = 0;
    StressLevel truth = StressLevel::NotAtAll;
    double bpm = 0.0, jitter_ms = 0.0;
    std::uint64_t seed = 0;
    std::int64_t emitted_at_ms = 0;
    std::int64_t deliver_at_ms = 0; // later than emission inside a dropout
};

struct WindowReport {
    PlannedWindow plan;
    std::optional<std::int64_t> delivered_at_ms;
    int attempts = 0;
    bool failed = false;
    std::optional<DeliveryAck> ack;
};

struct PromptReport {
    std::string prompt_id;
    std::int64_t sample_id = 0;
    StressLevel truth = StressLevel::NotAtAll;
    bool answered = false; // the participant chose to answer
    std::optional<std::int64_t> answer_at_ms;
    StressLevel reported = StressLevel::NotAtAll;
    Activity activity = Activity::Sitting;
    bool accepted = false;
    std::string outcome; // accepted, skipped, expired, or an error code
};

struct SimReport {
    std::string subject_id;
    std::vector<WindowReport> windows;
    std::vector<PromptReport> prompts;

    std::size_t delivered() const {
        std::size_t n = 0;
        for (const auto& w : windows) n += w.delivered_at_ms.has_value();
        return n;
    }
    std::size_t failed() const {
        std::size_t n = 0;
        for (const auto& w : windows) n += w.failed;
        return n;
    }
    std::size_t accepted_responses() const {
        std::size_t n = 0;
        for (const auto& p : prompts) n += p.accepted;
        return n;
    }
};

inline void write_report_csv(std::ostream& out, const SimReport& r) {
    out << "window_start_ms,truth_level,emitted_at_ms,delivered_at_ms\n";
    for (const auto& w : r.windows) {
        out << w.plan.start_ms << ',' << static_cast<int>(w.plan.truth) << ',' << w.plan.emitted_at_ms << ',';
        if (w.delivered_at_ms) out << *w.delivered_at_ms;
        out << '\n';
    }
}

/// Captures every 15 minutes from the start; a window whose capture ends
/// inside a dropout waits for the dropout to end.
inline std::vector<PlannedWindow> plan_windows(const SubjectProfile& p, const SimOptions& o) {
    const double days = o.days > 0.0 ? o.days : p.duration_days;
    const auto duration_ms = static_cast<std::int64_t>(std::llround(days * 86400000.0));
    const auto base = splitmix64(o.seed ^ fnv1a(p.subject_id));
    std::vector<PlannedWindow> out;
    for (std::int64_t k = 0; k * kWindowCadenceMs < duration_ms; ++k) {
        PlannedWindow w;
        const auto offset = k * kWindowCadenceMs;
        w.start_ms = o.start_ms + offset;
        const double minute = static_cast<double>(offset) / 60000.0;
        w.truth = p.level_at(minute);
        w.seed = splitmix64(base + static_cast<std::uint64_t>(k));
        std::mt19937_64 rng(w.seed);
        std::normal_distribution<double> wobble(0.0, 1.0);
        w.bpm = p.hr_for(w.truth) + p.hr_window_sd_bpm * std::clamp(wobble(rng), -3.0, 3.0);
        w.jitter_ms = p.rmssd_for(w.truth) / std::sqrt(2.0);
        w.emitted_at_ms = w.start_ms + o.capture_ms;
        w.deliver_at_ms = w.emitted_at_ms;
        const double emit_min = static_cast<double>(offset + o.capture_ms) / 60000.0;
        if (const auto* d = p.dropout_at(emit_min))
            w.deliver_at_ms = o.start_ms + static_cast<std::int64_t>(std::llround(d->end_min * 60000.0));
        out.push_back(w);
    }
    return out;
}

inline signal::RawWindow render_window(const SubjectProfile& p, const PlannedWindow& w, const SimOptions& o) {
    signal::SynthParams s;
    s.hr = signal::HrProfile::constant(w.bpm);
    s.hrv_jitter_ms = w.jitter_ms;
    s.noise_rms = p.noise_rms;
    s.drift_amp = p.drift_amp;
    s.duration_s = static_cast<double>(o.capture_ms) / 1000.0;
    s.seed = w.seed;
    s.subject_id = p.subject_id;
    s.start_time_ms = w.start_ms;
    return signal::synthesize_ppg(s).window;
}

class SubjectSimulator {
public:
    SubjectSimulator(SubjectProfile profile, SimOptions opts, Endpoint& endpoint)
        : profile_(std::move(profile)), opts_(opts), endpoint_(&endpoint), clock_(opts.start_ms, opts.accel),
          rng_(splitmix64(opts.seed ^ fnv1a(profile_.subject_id) ^ 0x5bd1e995ull)) {
        profile_.validate();
        report_.subject_id = profile_.subject_id;
        for (const auto& w : plan_windows(profile_, opts_)) report_.windows.push_back({w});
        for (std::size_t k = 0; k < report_.windows.size(); ++k)
            push(report_.windows[k].plan.deliver_at_ms, Kind::Deliver, k);
    }

    void set_endpoint(Endpoint& e) { endpoint_ = &e; }

    bool done() const { return queue_.empty(); }
    std::int64_t next_time() const { return queue_.empty() ? INT64_MAX : queue_.top().time; }

    /// Processes every event up to and including `t_ms`.
    void run_until(std::int64_t t_ms) {
        while (!queue_.empty() && queue_.top().time <= t_ms) step();
    }

    void run() {
        while (!queue_.empty()) step();
    }

    const SimReport& report() const noexcept { return report_; }
    const SubjectProfile& profile() const noexcept { return profile_; }

private:
    enum class Kind { Deliver, Retry, Answer };
    struct Event {
        std::int64_t time;
        std::uint64_t order;
        Kind kind;
        std::size_t index;
        bool operator>(const Event& o) const { return std::tie(time, order) > std::tie(o.time, o.order); }
    };

    void push(std::int64_t t, Kind k, std::size_t i) { queue_.push({t, order_++, k, i}); }

    void step() {
        const auto ev = queue_.top();
        queue_.pop();
        clock_.wait_until(ev.time);
        switch (ev.kind) {
        case Kind::Deliver:
            buffer_.push_back(ev.index);
            flush(ev.time);
            break;
        case Kind::Retry:
            retry_scheduled_ = false;
            flush(ev.time);
            break;
        case Kind::Answer: answer(ev.index, ev.time); break;
        }
    }

    // Sends buffered windows in order. On an unreachable service the head
    // window is retried later, up to max_attempts, then dropped.
    void flush(std::int64_t now) {
        bool any = false;
        while (!buffer_.empty()) {
            auto& w = report_.windows[buffer_.front()];
            ++w.attempts;
            try {
                w.ack = endpoint_->send(render_window(profile_, w.plan, opts_), now);
                w.delivered_at_ms = now;
                any = true;
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::Unavailable) {
                    w.failed = true;
                } else if (w.attempts < opts_.max_attempts) {
                    if (!retry_scheduled_) {
                        push(now + opts_.retry_interval_ms, Kind::Retry, 0);
                        retry_scheduled_ = true;
                    }
                    break;
                } else {
                    w.failed = true;
                }
            }
            buffer_.pop_front();
        }
        if (any && opts_.respond) poll(now);
    }

    void poll(std::int64_t now) {
        std::vector<PromptInfo> open;
        try {
            open = endpoint_->pending(profile_.subject_id, now);
        } catch (const Error&) {
            return;
        }
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (const auto& p : open) {
            if (!seen_.insert(p.prompt_id).second) continue;
            PromptReport r;
            r.prompt_id = p.prompt_id;
            r.sample_id = p.sample_id;
            r.truth = profile_.level_at(static_cast<double>(p.sample_id - opts_.start_ms) / 60000.0);
            r.answered = u(rng_) < profile_.adherence_prob;
            if (!r.answered) {
                r.outcome = "skipped";
                report_.prompts.push_back(r);
                continue;
            }
            const double delay_min = profile_.response_delay.sample(rng_);
            // Delays count from simulated now: a wall-clock server stamps
            // created_at in its own time base.
            r.answer_at_ms = now + static_cast<std::int64_t>(std::llround(delay_min * 60000.0));
            r.reported = r.truth;
            if (u(rng_) < profile_.label_noise_prob) {
                // Uniformly random other level.
                auto other = std::uniform_int_distribution<int>(0, 3)(rng_);
                if (other >= static_cast<int>(r.truth)) ++other;
                r.reported = static_cast<StressLevel>(other);
            }
            r.activity = static_cast<Activity>(activity_(rng_));
            report_.prompts.push_back(r);
            push(*r.answer_at_ms, Kind::Answer, report_.prompts.size() - 1);
        }
    }

    void answer(std::size_t i, std::int64_t now) {
        auto& r = report_.prompts[i];
        try {
            endpoint_->respond({r.prompt_id, r.reported, r.activity, now});
            r.accepted = true;
            r.outcome = "accepted";
        } catch (const Error& e) {
            r.outcome = e.kind() == ErrorKind::Expired ? "expired" : e.code();
        }
    }

    SubjectProfile profile_;
    SimOptions opts_;
    Endpoint* endpoint_;
    SimClock clock_;
    std::mt19937_64 rng_;
    std::discrete_distribution<int> activity_{50, 20, 15, 3, 10, 2};
    SimReport report_;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
    std::uint64_t order_ = 0;
    std::deque<std::size_t> buffer_;
    bool retry_scheduled_ = false;
    std::set<std::string> seen_;
};

/// Runs each subject on its own thread against a per-subject endpoint.
template <class MakeEndpoint>
std::vector<SimReport> run_cohort(const std::vector<SubjectProfile>& cohort, const SimOptions& opts,
                                  MakeEndpoint make_endpoint) {
    std::vector<SimReport> reports(cohort.size());
    std::vector<std::exception_ptr> errors(cohort.size());
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        threads.emplace_back([&, i] {
            try {
                auto ep = make_endpoint(cohort[i]);
                SubjectSimulator sim(cohort[i], opts, *ep);
                sim.run();
                reports[i] = sim.report();
            } catch (...) {
                errors[i] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return reports;
}

} // namespace stressmon::sim
