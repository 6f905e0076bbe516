#pragma once

// Where the simulated watch sends windows and the simulated participant
// reads and answers prompts. Unreachable services surface as
// ErrorKind::Unavailable so the caller can buffer and retry.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "stressmon/service/http.hpp"
#include "stressmon/service/ingest.hpp"

namespace stressmon::sim {

using json = nlohmann::json;

struct DeliveryAck {
    bool duplicate = false;
    bool usable = false;
    std::string reject_reason;
    std::optional<double> bpm, rmssd_ms;
    std::optional<std::string> prompt_id;
};

struct PromptInfo {
    std::string prompt_id;
    std::int64_t sample_id = 0;
    std::int64_t created_at_ms = 0;
    std::int64_t expires_at_ms = 0;
};

class Endpoint {
public:
    virtual ~Endpoint() = default;
    virtual DeliveryAck send(const signal::RawWindow& w, std::int64_t now_ms) = 0;
    virtual std::vector<PromptInfo> pending(const std::string& subject_id, std::int64_t now_ms) = 0;
    virtual void respond(const service::LabelResponse& r) = 0;
};

namespace detail {

inline DeliveryAck ack_from(const service::IngestResult& r) {
    DeliveryAck a;
    a.duplicate = r.duplicate;
    a.usable = r.window.usable();
    a.reject_reason = r.window.reject_reason;
    if (r.window.features) {
        a.bpm = r.window.features->bpm;
        a.rmssd_ms = r.window.features->rmssd_ms;
    }
    if (r.prompt) a.prompt_id = r.prompt->prompt_id;
    return a;
}

} // namespace detail

/// Calls an IngestService in the same process. The service can be swapped
/// to model a server restart.
class InProcessEndpoint : public Endpoint {
public:
    explicit InProcessEndpoint(service::IngestService& svc) : svc_(&svc) {}

    void rebind(service::IngestService& svc) { svc_ = &svc; }

    DeliveryAck send(const signal::RawWindow& w, std::int64_t now_ms) override {
        return detail::ack_from(svc_->ingest(w, now_ms));
    }

    std::vector<PromptInfo> pending(const std::string& subject_id, std::int64_t now_ms) override {
        std::vector<PromptInfo> out;
        for (const auto& p : svc_->pending(subject_id, now_ms))
            out.push_back({p.prompt_id, p.sample_id, p.created_at_ms, p.expires_at_ms});
        return out;
    }

    void respond(const service::LabelResponse& r) override { svc_->respond(r); }

private:
    service::IngestService* svc_;
};

/// Talks to a running server. Times are passed as client-clock parameters;
/// a wall-clock server ignores them.
class HttpEndpoint : public Endpoint {
public:
    HttpEndpoint(const std::string& host, int port, int timeout_s = 10) : client_(host, port) {
        client_.set_connection_timeout(timeout_s, 0);
        client_.set_read_timeout(timeout_s, 0);
        client_.set_write_timeout(timeout_s, 0);
    }

    /// Accepts "host:port" or "http://host:port".
    static HttpEndpoint from_url(const std::string& url, int timeout_s = 10) {
        auto s = url;
        if (s.rfind("http://", 0) == 0) s = s.substr(7);
        while (!s.empty() && s.back() == '/') s.pop_back();
        const auto colon = s.rfind(':');
        if (colon == std::string::npos || colon == 0)
            fail(ErrorKind::InvalidArgument, "server_url", "server must look like host:port, got '" + url + "'");
        int port = 0;
        try {
            port = std::stoi(s.substr(colon + 1));
        } catch (const std::exception&) {
            fail(ErrorKind::InvalidArgument, "server_url", "bad port in '" + url + "'");
        }
        return HttpEndpoint(s.substr(0, colon), port, timeout_s);
    }

    DeliveryAck send(const signal::RawWindow& w, std::int64_t now_ms) override {
        auto body = service::window_to_json(w);
        body["now_ms"] = now_ms;
        const auto j = checked(client_.Post("/api/v1/samples", body.dump(), "application/json"));
        DeliveryAck a;
        a.duplicate = j.value("duplicate", false);
        a.usable = j.value("usable", false);
        a.reject_reason = j.value("reject_reason", std::string());
        if (j.contains("features")) {
            a.bpm = j["features"].value("bpm", 0.0);
            a.rmssd_ms = j["features"].value("rmssd_ms", 0.0);
        }
        if (j.contains("prompt") && j["prompt"].is_object()) a.prompt_id = j["prompt"]["prompt_id"].get<std::string>();
        return a;
    }

    std::vector<PromptInfo> pending(const std::string& subject_id, std::int64_t now_ms) override {
        httplib::Params params{{"subject", subject_id}, {"now", std::to_string(now_ms)}};
        const auto j = checked(client_.Get("/api/v1/ema/pending", params, httplib::Headers{}));
        std::vector<PromptInfo> out;
        for (const auto& p : j.at("prompts"))
            out.push_back({p.at("prompt_id").get<std::string>(), p.at("sample_id").get<std::int64_t>(),
                           p.at("created_at_ms").get<std::int64_t>(), p.at("expires_at_ms").get<std::int64_t>()});
        return out;
    }

    void respond(const service::LabelResponse& r) override {
        const json body = {{"prompt_id", r.prompt_id},
                           {"stress_level", static_cast<int>(r.stress_level)},
                           {"activity", std::string(to_string(r.activity))},
                           {"responded_at_ms", r.responded_at_ms}};
        checked(client_.Post("/api/v1/ema/response", body.dump(), "application/json"));
    }

private:
    static ErrorKind kind_from_status(int status) {
        switch (status) {
        case 400: return ErrorKind::Validation;
        case 404: return ErrorKind::NotFound;
        case 409: return ErrorKind::Conflict;
        case 410: return ErrorKind::Expired;
        case 422: return ErrorKind::InsufficientData;
        default: return status >= 500 ? ErrorKind::Unavailable : ErrorKind::Protocol;
        }
    }

    static json checked(const httplib::Result& res) {
        if (!res) fail(ErrorKind::Unavailable, "unreachable", "server unreachable: " + httplib::to_string(res.error()));
        if (res->status >= 200 && res->status < 300) return json::parse(res->body);
        std::string code = "http_" + std::to_string(res->status), message = res->body;
        try {
            const auto j = json::parse(res->body);
            code = j.at("error").at("code").get<std::string>();
            message = j.at("error").at("message").get<std::string>();
        } catch (const json::exception&) {
        }
        fail(kind_from_status(res->status), code, message);
    }

    httplib::Client client_;
};

} // namespace stressmon::sim
