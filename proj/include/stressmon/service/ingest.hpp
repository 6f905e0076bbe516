#pragma once

// In-process ingest service: windows in, query decisions and EMA prompts out,
// everything journaled per subject. The HTTP adapter in http.hpp is a thin
// layer over this class.

#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stressmon/labels.hpp"
#include "stressmon/model/dataset.hpp"
#include "stressmon/pipeline.hpp"
#include "stressmon/query/engine.hpp"
#include "stressmon/service/config.hpp"
#include "stressmon/service/store.hpp"

namespace stressmon::service {

using json = nlohmann::json;

inline std::int64_t wall_clock_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

enum class PromptState { Open, Answered, Expired };

inline const char* to_string(PromptState s) {
    switch (s) {
    case PromptState::Open: return "open";
    case PromptState::Answered: return "answered";
    case PromptState::Expired: return "expired";
    }
    return "unknown";
}

struct LabelResponse {
    std::string prompt_id;
    StressLevel stress_level = StressLevel::NotAtAll;
    Activity activity = Activity::Other;
    std::int64_t responded_at_ms = 0;
};

struct PendingPrompt {
    std::string prompt_id;
    std::string subject_id;
    std::int64_t sample_id = 0;
    std::int64_t created_at_ms = 0;
    std::int64_t expires_at_ms = 0;
    PromptState state = PromptState::Open;
    std::optional<LabelResponse> response;
};

enum class Phase { None, Initial, Query };

inline const char* to_string(Phase p) {
    switch (p) {
    case Phase::None: return "none";
    case Phase::Initial: return "initial";
    case Phase::Query: return "query";
    }
    return "none";
}

struct WindowEntry {
    std::int64_t start_time_ms = 0;
    std::int64_t received_at_ms = 0;
    double sample_rate_hz = 0.0;
    std::size_t n_samples = 0;
    std::string reject_reason;
    std::optional<hrv::FeatureVector> features;
    Phase phase = Phase::None;
    std::optional<query::QueryDecision> decision;
    std::optional<std::string> prompt_id;

    bool usable() const noexcept { return features.has_value(); }
};

struct IngestResult {
    bool accepted = false;
    bool duplicate = false;
    WindowEntry window;
    std::optional<PendingPrompt> prompt;
};

struct SubjectStats {
    std::string subject_id;
    std::size_t windows = 0, usable = 0, unusable = 0;
    std::map<std::string, std::size_t> unusable_reasons;
    bool initial_phase = true;
    std::size_t decisions = 0, triggers = 0;
    std::size_t prompts = 0, answered = 0, expired = 0, pending = 0;
    std::size_t regions = 0, saturated_regions = 0;
    std::vector<std::string> saturated_region_ids;
};

/// Subject ids double as directory names.
inline void validate_subject_id(const std::string& s) {
    if (s.empty() || s.size() > 64)
        fail(ErrorKind::Validation, "subject_id", "subject id must have 1-64 characters");
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
            fail(ErrorKind::Validation, "subject_id", "subject id may only contain letters, digits, '_', '-', '.'");
    if (s == "." || s == "..") fail(ErrorKind::Validation, "subject_id", "invalid subject id");
}

class IngestService {
public:
    explicit IngestService(ServiceConfig cfg, PipelineConfig pipeline = {})
        : cfg_(std::move(cfg)), pipeline_(std::move(pipeline)) {
        cfg_.validate();
        fs::create_directories(cfg_.data_dir);
        recover();
    }

    IngestService(const IngestService&) = delete;
    IngestService& operator=(const IngestService&) = delete;

    const ServiceConfig& config() const noexcept { return cfg_; }
    const std::vector<std::string>& recovery_warnings() const noexcept { return warnings_; }

    std::int64_t now() const { return wall_clock_ms(); }

    void validate_window(const signal::RawWindow& w) const {
        validate_subject_id(w.subject_id);
        if (!(w.sample_rate_hz > 0.0) || !std::isfinite(w.sample_rate_hz))
            fail(ErrorKind::Validation, "sample_rate", "sample rate must be positive");
        const auto expected = signal::expected_samples(cfg_.window_seconds, w.sample_rate_hz);
        if (w.ppg.size() != expected)
            fail(ErrorKind::Validation, "window_length",
                 "expected " + std::to_string(expected) + " samples, got " + std::to_string(w.ppg.size()));
        for (double v : w.ppg)
            if (!std::isfinite(v)) fail(ErrorKind::Validation, "ppg_value", "non-finite PPG sample");
        if (w.motion && w.motion->size() != w.ppg.size())
            fail(ErrorKind::Validation, "motion_length", "motion and PPG lengths differ");
    }

    /// Late windows take the same path; they are ordered by start time in
    /// exports. Resending a stored (subject, start_time) is a no-op.
    IngestResult ingest(const signal::RawWindow& w, std::int64_t now_ms) {
        validate_window(w);
        auto& s = subject(w.subject_id, true);
        {
            std::lock_guard lock(s.mu);
            if (auto dup = duplicate_of(s, w.start_time_ms)) return *dup;
        }
        const auto result = Pipeline(pipeline_).run(w);

        std::lock_guard lock(s.mu);
        if (auto dup = duplicate_of(s, w.start_time_ms)) return *dup;
        WindowEntry e;
        e.start_time_ms = w.start_time_ms;
        e.received_at_ms = now_ms;
        e.sample_rate_hz = w.sample_rate_hz;
        e.n_samples = w.ppg.size();
        e.features = result.features;
        e.reject_reason = result.reject_reason;
        std::optional<PendingPrompt> prompt;
        if (e.usable()) {
            const auto sub = s.engine.submit(make_record(w.subject_id, e));
            if (sub.duplicate) {
                e.phase = Phase::None; // engine already holds it (snapshot ahead of log)
            } else if (sub.decision) {
                e.phase = Phase::Query;
                e.decision = sub.decision;
                if (sub.decision->trigger) {
                    prompt = PendingPrompt{prompt_id_for(w.subject_id, w.start_time_ms), w.subject_id,
                                           w.start_time_ms, now_ms, now_ms + cfg_.prompt_expiry_ms};
                    e.prompt_id = prompt->prompt_id;
                }
            } else {
                e.phase = Phase::Initial;
            }
        }
        auto ev = ingest_event(e, prompt);
        if (cfg_.store_raw_windows) ev["ppg"] = w.ppg;
        append(s, std::move(ev));
        apply_window(s, e, prompt);
        if (++s.since_snapshot >= cfg_.snapshot_every) snapshot_locked(s);
        return {true, false, e, prompt};
    }

    /// Unexpired open prompts, oldest first. Prompts past their expiry are
    /// marked expired on the way.
    std::vector<PendingPrompt> pending(const std::string& subject_id, std::int64_t now_ms) {
        auto& s = subject(subject_id, false);
        std::lock_guard lock(s.mu);
        std::vector<PendingPrompt> out;
        for (auto& [id, p] : s.prompts) {
            refresh(p, now_ms);
            if (p.state == PromptState::Open) out.push_back(p);
        }
        std::sort(out.begin(), out.end(), [](const PendingPrompt& a, const PendingPrompt& b) {
            return std::tie(a.created_at_ms, a.sample_id) < std::tie(b.created_at_ms, b.sample_id);
        });
        return out;
    }

    PendingPrompt respond(const LabelResponse& r) {
        std::string subject_id;
        {
            std::shared_lock lock(map_mu_);
            const auto it = prompt_subject_.find(r.prompt_id);
            if (it == prompt_subject_.end())
                fail(ErrorKind::NotFound, "unknown_prompt", "no prompt '" + r.prompt_id + "'");
            subject_id = it->second;
        }
        if (!stress_level_from_int(static_cast<int>(r.stress_level)))
            fail(ErrorKind::Validation, "invalid_label", "stress level outside the five EMA levels");
        if (!activity_from_int(static_cast<int>(r.activity)))
            fail(ErrorKind::Validation, "invalid_activity", "unknown activity");
        auto& s = subject(subject_id, false);
        std::lock_guard lock(s.mu);
        auto& p = s.prompts.at(r.prompt_id);
        if (p.state == PromptState::Answered)
            fail(ErrorKind::Conflict, "duplicate_response", "prompt '" + r.prompt_id + "' was already answered");
        if (r.responded_at_ms > p.expires_at_ms) {
            p.state = PromptState::Expired;
            fail(ErrorKind::Expired, "prompt_expired", "prompt '" + r.prompt_id + "' expired");
        }
        s.engine.record_label(p.sample_id, r.stress_level, r.activity);
        append(s, response_event(p, r));
        p.state = PromptState::Answered;
        p.response = r;
        return p;
    }

    /// (subject, start_time) order. Labeled = answered prompts; unlabeled =
    /// every other usable window.
    std::vector<model::FeatureRow> export_rows(const std::optional<std::string>& subject_id, bool labeled) {
        std::vector<model::FeatureRow> rows;
        for (auto* s : subjects_matching(subject_id)) {
            std::lock_guard lock(s->mu);
            for (const auto& [t, e] : s->windows) {
                if (!e.usable()) continue;
                const PendingPrompt* p = e.prompt_id ? &s->prompts.at(*e.prompt_id) : nullptr;
                const bool has_label = p && p->state == PromptState::Answered;
                if (has_label != labeled) continue;
                model::FeatureRow row;
                row.subject_id = s->id;
                row.start_time_ms = t;
                row.features = *e.features;
                if (has_label) {
                    row.stress_level = p->response->stress_level;
                    row.activity = p->response->activity;
                }
                rows.push_back(std::move(row));
            }
        }
        return rows;
    }

    std::string export_csv(const std::optional<std::string>& subject_id, bool labeled) {
        std::ostringstream os;
        model::write_csv(os, export_rows(subject_id, labeled), labeled);
        return os.str();
    }

    SubjectStats stats(const std::string& subject_id, std::int64_t now_ms) {
        auto& s = subject(subject_id, false);
        std::lock_guard lock(s.mu);
        SubjectStats st;
        st.subject_id = s.id;
        st.windows = s.windows.size();
        for (const auto& [t, e] : s.windows) {
            if (e.usable()) {
                ++st.usable;
            } else {
                ++st.unusable;
                ++st.unusable_reasons[e.reject_reason];
            }
            if (e.decision) {
                ++st.decisions;
                st.triggers += e.decision->trigger ? 1 : 0;
            }
        }
        st.initial_phase = s.engine.in_initial_phase();
        for (auto& [id, p] : s.prompts) {
            refresh(p, now_ms);
            ++st.prompts;
            if (p.state == PromptState::Answered) ++st.answered;
            else if (p.state == PromptState::Expired) ++st.expired;
            else ++st.pending;
        }
        for (const auto& [id, reg] : s.engine.regions()) {
            ++st.regions;
            if (reg.saturated) {
                ++st.saturated_regions;
                st.saturated_region_ids.push_back(query::region_to_string(id));
            }
        }
        return st;
    }

    std::vector<std::string> subjects() const {
        std::shared_lock lock(map_mu_);
        std::vector<std::string> out;
        for (const auto& [id, s] : subjects_) out.push_back(id);
        return out;
    }

    bool has_subject(const std::string& id) const {
        std::shared_lock lock(map_mu_);
        return subjects_.contains(id);
    }

    /// Query-phase decisions in arrival order.
    std::vector<std::pair<std::int64_t, query::QueryDecision>> decisions(const std::string& subject_id) {
        auto& s = subject(subject_id, false);
        std::lock_guard lock(s.mu);
        std::vector<std::pair<std::int64_t, query::QueryDecision>> out;
        for (auto t : s.arrival) {
            const auto& e = s.windows.at(t);
            if (e.decision) out.emplace_back(t, *e.decision);
        }
        return out;
    }

    /// Copy of a subject's engine, for inspection.
    query::QueryEngine engine(const std::string& subject_id) {
        auto& s = subject(subject_id, false);
        std::lock_guard lock(s.mu);
        return s.engine;
    }

    std::optional<WindowEntry> window(const std::string& subject_id, std::int64_t start_time_ms) {
        auto& s = subject(subject_id, false);
        std::lock_guard lock(s.mu);
        const auto it = s.windows.find(start_time_ms);
        if (it == s.windows.end()) return std::nullopt;
        return it->second;
    }

    /// Writes a fresh engine snapshot for every subject.
    void snapshot_all() {
        for (auto* s : subjects_matching(std::nullopt)) {
            std::lock_guard lock(s->mu);
            snapshot_locked(*s);
        }
    }

private:
    struct Subject {
        std::string id;
        std::mutex mu;
        query::QueryEngine engine;
        std::map<std::int64_t, WindowEntry> windows;
        std::vector<std::int64_t> arrival;
        std::map<std::string, PendingPrompt> prompts;
        std::unique_ptr<EventLog> log;
        std::int64_t seq = -1;
        std::size_t since_snapshot = 0;

        explicit Subject(std::string i, query::QueryConfig qc) : id(std::move(i)), engine(qc) {}
    };

    static std::string prompt_id_for(const std::string& subject_id, std::int64_t start) {
        return subject_id + "-" + std::to_string(start);
    }

    // Each subject's generator is derived from the configured seed and its id.
    query::QueryConfig engine_config(const std::string& subject_id) const {
        auto qc = cfg_.query;
        std::uint64_t h = 1469598103934665603ull;
        for (unsigned char c : subject_id) h = (h ^ c) * 1099511628211ull;
        qc.rng_seed ^= h;
        return qc;
    }

    fs::path subject_dir(const std::string& id) const { return fs::path(cfg_.data_dir) / id; }

    Subject& subject(const std::string& id, bool create) {
        {
            std::shared_lock lock(map_mu_);
            if (const auto it = subjects_.find(id); it != subjects_.end()) return *it->second;
        }
        if (!create) fail(ErrorKind::NotFound, "unknown_subject", "no subject '" + id + "'");
        std::unique_lock lock(map_mu_);
        auto& slot = subjects_[id];
        if (!slot) {
            slot = std::make_unique<Subject>(id, engine_config(id));
            slot->log = std::make_unique<EventLog>(subject_dir(id) / "events.jsonl", cfg_.fsync);
        }
        return *slot;
    }

    std::vector<Subject*> subjects_matching(const std::optional<std::string>& id) {
        std::shared_lock lock(map_mu_);
        std::vector<Subject*> out;
        for (auto& [sid, s] : subjects_)
            if (!id || sid == *id) out.push_back(s.get());
        if (id && out.empty()) fail(ErrorKind::NotFound, "unknown_subject", "no subject '" + *id + "'");
        return out;
    }

    std::optional<IngestResult> duplicate_of(Subject& s, std::int64_t start) {
        const auto it = s.windows.find(start);
        if (it == s.windows.end()) return std::nullopt;
        IngestResult r{true, true, it->second, std::nullopt};
        if (it->second.prompt_id) r.prompt = s.prompts.at(*it->second.prompt_id);
        return r;
    }

    static query::SampleRecord make_record(const std::string& subject_id, const WindowEntry& e) {
        query::SampleRecord rec;
        rec.sample_id = e.start_time_ms;
        rec.subject_id = subject_id;
        rec.timestamp_ms = e.start_time_ms;
        rec.raw_features = *e.features;
        return rec;
    }

    void refresh(PendingPrompt& p, std::int64_t now_ms) const {
        if (p.state == PromptState::Open && now_ms > p.expires_at_ms) p.state = PromptState::Expired;
    }

    void append(Subject& s, json ev) {
        ev["seq"] = s.seq + 1;
        s.log->append(ev);
        ++s.seq;
    }

    void apply_window(Subject& s, const WindowEntry& e, const std::optional<PendingPrompt>& prompt) {
        s.windows[e.start_time_ms] = e;
        s.arrival.push_back(e.start_time_ms);
        if (prompt) {
            s.prompts[prompt->prompt_id] = *prompt;
            std::unique_lock lock(map_mu_);
            prompt_subject_[prompt->prompt_id] = s.id;
        }
    }

    void snapshot_locked(Subject& s) {
        write_engine_snapshot(subject_dir(s.id) / "engine.snap", {s.seq, s.engine.snapshot()}, cfg_.fsync);
        s.since_snapshot = 0;
    }

    // -- journal encoding ------------------------------------------------------

    static json decision_json(const query::QueryDecision& d) {
        return {{"probability", d.probability},
                {"neighbor_count", d.neighbor_count},
                {"trigger", d.trigger},
                {"region_id", d.region_id}};
    }

    static query::QueryDecision decision_from_json(const json& j) {
        query::QueryDecision d;
        d.probability = j.at("probability").get<double>();
        d.neighbor_count = j.at("neighbor_count").get<std::size_t>();
        d.trigger = j.at("trigger").get<bool>();
        d.region_id = j.at("region_id").get<query::RegionId>();
        return d;
    }

    static json ingest_event(const WindowEntry& e, const std::optional<PendingPrompt>& prompt) {
        json ev = {{"type", "ingest"},
                   {"start_time_ms", e.start_time_ms},
                   {"received_at_ms", e.received_at_ms},
                   {"sample_rate_hz", e.sample_rate_hz},
                   {"n_samples", e.n_samples},
                   {"usable", e.usable()},
                   {"phase", to_string(e.phase)}};
        if (e.usable()) {
            ev["features"] = e.features->to_array();
            ev["flags"] = e.features->flags;
        } else {
            ev["reject_reason"] = e.reject_reason;
        }
        if (e.decision) ev["decision"] = decision_json(*e.decision);
        if (prompt)
            ev["prompt"] = {{"prompt_id", prompt->prompt_id},
                            {"created_at_ms", prompt->created_at_ms},
                            {"expires_at_ms", prompt->expires_at_ms}};
        return ev;
    }

    static json response_event(const PendingPrompt& p, const LabelResponse& r) {
        return {{"type", "response"},
                {"prompt_id", r.prompt_id},
                {"sample_id", p.sample_id},
                {"stress_level", static_cast<int>(r.stress_level)},
                {"activity", std::string(to_string(r.activity))},
                {"responded_at_ms", r.responded_at_ms}};
    }

    // -- recovery -------------------------------------------------------------

    void recover() {
        for (const auto& entry : fs::directory_iterator(cfg_.data_dir)) {
            if (!entry.is_directory()) continue;
            const auto id = entry.path().filename().string();
            try {
                validate_subject_id(id);
            } catch (const Error&) {
                warnings_.push_back("ignoring directory " + entry.path().string());
                continue;
            }
            recover_subject(id);
        }
    }

    // Service tables come from the whole log. The engine comes from the
    // snapshot plus any later events; a snapshot ahead of the log is kept as is.
    void recover_subject(const std::string& id) {
        const auto dir = subject_dir(id);
        auto loaded = EventLog::load(dir / "events.jsonl");
        for (auto& w : loaded.warnings) warnings_.push_back(id + ": " + w);

        auto s = std::make_unique<Subject>(id, engine_config(id));
        std::int64_t engine_seq = -1;
        try {
            if (auto snap = read_engine_snapshot(dir / "engine.snap")) {
                s->engine = query::QueryEngine::restore(snap->engine_bytes);
                engine_seq = snap->seq;
            }
        } catch (const Error& e) {
            warnings_.push_back(id + ": engine snapshot unusable (" + e.code() + "), rebuilding from the log");
            s->engine = query::QueryEngine(engine_config(id));
            engine_seq = -1;
        }

        for (const auto& ev : loaded.events) {
            const auto seq = ev.at("seq").get<std::int64_t>();
            const bool replay = seq > engine_seq;
            const auto type = ev.at("type").get<std::string>();
            if (type == "ingest") {
                WindowEntry e;
                e.start_time_ms = ev.at("start_time_ms").get<std::int64_t>();
                e.received_at_ms = ev.at("received_at_ms").get<std::int64_t>();
                e.sample_rate_hz = ev.at("sample_rate_hz").get<double>();
                e.n_samples = ev.at("n_samples").get<std::size_t>();
                if (ev.at("usable").get<bool>()) {
                    e.features = hrv::FeatureVector::from_array(ev.at("features").get<hrv::FeatureArray>(),
                                                                ev.at("flags").get<unsigned>());
                } else {
                    e.reject_reason = ev.value("reject_reason", std::string{});
                }
                const auto phase = ev.value("phase", std::string("none"));
                e.phase = phase == "query" ? Phase::Query : phase == "initial" ? Phase::Initial : Phase::None;
                if (ev.contains("decision")) e.decision = decision_from_json(ev.at("decision"));
                std::optional<PendingPrompt> prompt;
                if (ev.contains("prompt")) {
                    const auto& pj = ev.at("prompt");
                    prompt = PendingPrompt{pj.at("prompt_id").get<std::string>(), id, e.start_time_ms,
                                           pj.at("created_at_ms").get<std::int64_t>(),
                                           pj.at("expires_at_ms").get<std::int64_t>()};
                    e.prompt_id = prompt->prompt_id;
                }
                if (replay && e.usable()) {
                    const auto sub = s->engine.submit(make_record(id, e));
                    if (sub.decision != e.decision)
                        warnings_.push_back(id + ": replayed decision for " + std::to_string(e.start_time_ms) +
                                            " differs from the journal");
                }
                apply_window(*s, e, prompt);
            } else if (type == "response") {
                LabelResponse r;
                r.prompt_id = ev.at("prompt_id").get<std::string>();
                r.stress_level = stress_level_from_int(ev.at("stress_level").get<int>()).value();
                r.activity = activity_from_name(ev.at("activity").get<std::string>()).value();
                r.responded_at_ms = ev.at("responded_at_ms").get<std::int64_t>();
                auto& p = s->prompts.at(r.prompt_id);
                if (replay) s->engine.record_label(p.sample_id, r.stress_level, r.activity);
                p.state = PromptState::Answered;
                p.response = r;
            } else {
                warnings_.push_back(id + ": unknown event type '" + type + "' skipped");
            }
            s->seq = seq;
        }
        s->seq = std::max(s->seq, engine_seq);
        s->log = std::make_unique<EventLog>(dir / "events.jsonl", cfg_.fsync);
        std::unique_lock lock(map_mu_);
        subjects_[id] = std::move(s);
    }

    ServiceConfig cfg_;
    PipelineConfig pipeline_;
    mutable std::shared_mutex map_mu_;
    std::map<std::string, std::unique_ptr<Subject>> subjects_;
    std::map<std::string, std::string> prompt_subject_;
    std::vector<std::string> warnings_;
};

inline json to_json(const PendingPrompt& p, std::int64_t now_ms) {
    json j = {{"prompt_id", p.prompt_id},
              {"subject_id", p.subject_id},
              {"sample_id", p.sample_id},
              {"created_at_ms", p.created_at_ms},
              {"expires_at_ms", p.expires_at_ms},
              {"remaining_ms", std::max<std::int64_t>(0, p.expires_at_ms - now_ms)},
              {"state", to_string(p.state)}};
    return j;
}

inline json to_json(const hrv::FeatureVector& f) {
    json j = json::object();
    const auto a = f.to_array();
    for (std::size_t k = 0; k < hrv::kFeatureCount; ++k) j[std::string(hrv::kFeatureNames[k])] = a[k];
    j["flags"] = hrv::flags_to_string(f.flags);
    return j;
}

inline json to_json(const IngestResult& r, std::int64_t now_ms) {
    json j = {{"accepted", r.accepted},
              {"duplicate", r.duplicate},
              {"usable", r.window.usable()},
              {"phase", to_string(r.window.phase)}};
    if (r.window.usable()) j["features"] = to_json(*r.window.features);
    else j["reject_reason"] = r.window.reject_reason;
    if (r.window.decision) {
        const auto& d = *r.window.decision;
        j["decision"] = {{"trigger", d.trigger},
                         {"probability", d.probability},
                         {"neighbor_count", d.neighbor_count},
                         {"region_id", query::region_to_string(d.region_id)}};
    }
    j["prompt"] = r.prompt ? to_json(*r.prompt, now_ms) : json(nullptr);
    return j;
}

inline json to_json(const SubjectStats& s) {
    return {{"subject_id", s.subject_id},
            {"windows", s.windows},
            {"usable", s.usable},
            {"unusable", s.unusable},
            {"unusable_reasons", s.unusable_reasons},
            {"initial_phase", s.initial_phase},
            {"decisions", s.decisions},
            {"triggers", s.triggers},
            {"prompts", s.prompts},
            {"answered", s.answered},
            {"expired", s.expired},
            {"pending", s.pending},
            {"regions", s.regions},
            {"saturated_regions", s.saturated_regions},
            {"saturated_region_ids", s.saturated_region_ids}};
}

} // namespace stressmon::service
