#pragma once

// HTTP + JSON front end for IngestService.
//
//   POST /api/v1/samples            window JSON -> ingest result
//   GET  /api/v1/ema/pending        ?subject=[&now=]
//   POST /api/v1/ema/response       {prompt_id, stress_level, activity[, responded_at_ms]}
//   GET  /api/v1/dataset/export     ?kind=labeled|unlabeled[&subject=] -> CSV
//   GET  /api/v1/stats              [?subject=][&now=]
//   GET  /healthz
//
// With the "client" clock, now / now_ms / responded_at_ms from the request
// replace the server clock.

#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "stressmon/service/ingest.hpp"

#ifndef STRESSMON_VERSION
#define STRESSMON_VERSION "dev"
#endif

namespace stressmon::service {

inline int http_status(ErrorKind k) {
    switch (k) {
    case ErrorKind::InvalidArgument:
    case ErrorKind::Validation: return 400;
    case ErrorKind::NotFound: return 404;
    case ErrorKind::Conflict:
    case ErrorKind::Protocol: return 409;
    case ErrorKind::Expired: return 410;
    case ErrorKind::InsufficientData: return 422;
    case ErrorKind::Unavailable: return 503;
    default: return 500;
    }
}

inline json error_body(ErrorKind kind, const std::string& code, const std::string& message) {
    return {{"error", {{"kind", to_string(kind)}, {"code", code}, {"message", message}}}};
}

inline signal::RawWindow window_from_json(const json& j) {
    try {
        signal::RawWindow w;
        w.subject_id = j.at("subject_id").get<std::string>();
        w.start_time_ms = j.at("start_time_ms").get<std::int64_t>();
        w.sample_rate_hz = j.value("sample_rate_hz", signal::kDefaultSampleRateHz);
        w.ppg = j.at("ppg").get<std::vector<double>>();
        if (j.contains("motion") && !j.at("motion").is_null())
            w.motion = j.at("motion").get<std::vector<std::array<double, 3>>>();
        return w;
    } catch (const json::exception& e) {
        fail(ErrorKind::Validation, "window_json", std::string("malformed window: ") + e.what());
    }
}

inline json window_to_json(const signal::RawWindow& w) {
    json j = {{"subject_id", w.subject_id},
              {"start_time_ms", w.start_time_ms},
              {"sample_rate_hz", w.sample_rate_hz},
              {"ppg", w.ppg}};
    if (w.motion) j["motion"] = *w.motion;
    return j;
}

inline StressLevel stress_level_from_json(const json& j) {
    std::optional<StressLevel> s;
    if (j.is_number_integer()) s = stress_level_from_int(j.get<long long>());
    else if (j.is_string()) s = stress_level_from_name(j.get<std::string>());
    if (!s) fail(ErrorKind::Validation, "invalid_label", "stress_level must be 0-4 or one of the five level names");
    return *s;
}

inline Activity activity_from_json(const json& j) {
    std::optional<Activity> a;
    if (j.is_number_integer()) a = activity_from_int(j.get<long long>());
    else if (j.is_string()) a = activity_from_name(j.get<std::string>());
    if (!a) fail(ErrorKind::Validation, "invalid_activity", "unknown activity");
    return *a;
}

class HttpServer {
public:
    explicit HttpServer(IngestService& svc) : svc_(svc) { routes(); }

    ~HttpServer() { stop(); }

    /// Binds (port 0 picks a free one) and serves on a background thread.
    int start(const std::string& host, int port) {
        port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
        if (port_ < 0) fail(ErrorKind::Io, "bind_failed", "cannot bind " + host + ":" + std::to_string(port));
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port_;
    }

    /// Blocks until stop() is called from elsewhere.
    void run(const std::string& host, int port) {
        if (!server_.listen(host, port))
            fail(ErrorKind::Io, "bind_failed", "cannot listen on " + host + ":" + std::to_string(port));
    }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    int port() const noexcept { return port_; }

private:
    std::int64_t now_from(const httplib::Request& req, const json* body = nullptr, const char* key = "now_ms") const {
        if (svc_.config().clock == ClockMode::Client) {
            if (body && body->contains(key)) return body->at(key).get<std::int64_t>();
            if (req.has_param("now")) return std::stoll(req.get_param_value("now"));
        }
        return svc_.now();
    }

    static void send_json(httplib::Response& res, int status, const json& j) {
        res.status = status;
        res.set_content(j.dump(), "application/json");
    }

    template <class F>
    auto guarded(F f) {
        return [f](const httplib::Request& req, httplib::Response& res) {
            try {
                f(req, res);
            } catch (const Error& e) {
                send_json(res, http_status(e.kind()), error_body(e.kind(), e.code(), e.what()));
            } catch (const json::exception& e) {
                send_json(res, 400, error_body(ErrorKind::Validation, "bad_json", e.what()));
            } catch (const std::invalid_argument& e) {
                send_json(res, 400, error_body(ErrorKind::Validation, "bad_parameter", e.what()));
            } catch (const std::out_of_range& e) {
                send_json(res, 400, error_body(ErrorKind::Validation, "bad_parameter", e.what()));
            }
        };
    }

    static json parse_body(const httplib::Request& req) {
        try {
            return json::parse(req.body);
        } catch (const json::exception& e) {
            fail(ErrorKind::Validation, "bad_json", std::string("request body is not JSON: ") + e.what());
        }
    }

    static std::string required_param(const httplib::Request& req, const char* name) {
        if (!req.has_param(name))
            fail(ErrorKind::Validation, "missing_parameter", std::string("query parameter '") + name + "' is required");
        return req.get_param_value(name);
    }

    void routes() {
        server_.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Origin", "*");
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type, Authorization");
        });
        server_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"status", "ok"}, {"version", STRESSMON_VERSION}});
        });

        server_.Post("/api/v1/samples", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req);
            const auto now = now_from(req, &body);
            const auto r = svc_.ingest(window_from_json(body), now);
            send_json(res, r.duplicate ? 200 : 201, to_json(r, now));
        }));

        server_.Get("/api/v1/ema/pending", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto subject = required_param(req, "subject");
            const auto now = now_from(req);
            json prompts = json::array();
            for (const auto& p : svc_.pending(subject, now)) prompts.push_back(to_json(p, now));
            json levels = json::array(), acts = json::array();
            for (auto n : kStressLevelNames) levels.push_back(n);
            for (auto n : kActivityNames) acts.push_back(n);
            send_json(res, 200,
                      {{"subject_id", subject},
                       {"now_ms", now},
                       {"prompts", prompts},
                       {"stress_levels", levels},
                       {"activities", acts}});
        }));

        server_.Post("/api/v1/ema/response", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req);
            LabelResponse r;
            r.prompt_id = body.at("prompt_id").get<std::string>();
            r.stress_level = stress_level_from_json(body.at("stress_level"));
            r.activity = activity_from_json(body.at("activity"));
            r.responded_at_ms = now_from(req, &body, "responded_at_ms");
            const auto p = svc_.respond(r);
            send_json(res, 200,
                      {{"accepted", true},
                       {"prompt_id", p.prompt_id},
                       {"subject_id", p.subject_id},
                       {"sample_id", p.sample_id},
                       {"stress_level", std::string(to_string(r.stress_level))},
                       {"activity", std::string(to_string(r.activity))},
                       {"responded_at_ms", r.responded_at_ms}});
        }));

        server_.Get("/api/v1/dataset/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto kind = req.has_param("kind") ? req.get_param_value("kind") : std::string("labeled");
            if (kind != "labeled" && kind != "unlabeled")
                fail(ErrorKind::Validation, "export_kind", "kind must be 'labeled' or 'unlabeled'");
            std::optional<std::string> subject;
            if (req.has_param("subject")) subject = req.get_param_value("subject");
            res.status = 200;
            res.set_content(svc_.export_csv(subject, kind == "labeled"), "text/csv");
        }));

        server_.Get("/api/v1/stats", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto now = now_from(req);
            if (req.has_param("subject")) {
                send_json(res, 200, to_json(svc_.stats(req.get_param_value("subject"), now)));
                return;
            }
            json all = json::array();
            for (const auto& id : svc_.subjects()) all.push_back(to_json(svc_.stats(id, now)));
            send_json(res, 200, {{"subjects", all}, {"subject_count", all.size()}});
        }));
    }

    IngestService& svc_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = -1;
};

} // namespace stressmon::service
