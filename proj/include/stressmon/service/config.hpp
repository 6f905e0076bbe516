#pragma once

// Service configuration: JSON file, then STRESSMON_* environment overrides.
//
//   {
//     "listen_host": "127.0.0.1", "port": 8080, "data_dir": "data",
//     "prompt_expiry_ms": 900000, "window_seconds": 120,
//     "snapshot_every": 100, "fsync": true, "store_raw_windows": false,
//     "clock": "wall",
//     "query": { "initial_count": 100, "p_min": 0.1, "density_divisor": 50,
//                "neighborhood_radius": 1, "region_cell_size": 1,
//                "saturation_threshold": 10, "rng_seed": 0 }
//   }
//
// Every key maps to an upper-case variable, nested query keys without the
// prefix: STRESSMON_PORT, STRESSMON_DATA_DIR, STRESSMON_P_MIN, ...

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <string>

#include <json.hpp>

#include "stressmon/error.hpp"
#include "stressmon/query/engine.hpp"

namespace stressmon::service {

enum class ClockMode {
    Wall,   // server time stamps every request
    Client, // requests carry their own now_ms (simulation)
};

struct ServiceConfig {
    std::string listen_host = "127.0.0.1";
    int port = 8080;
    std::string data_dir = "data";
    std::int64_t prompt_expiry_ms = 15 * 60 * 1000;
    double window_seconds = 120.0;
    std::size_t snapshot_every = 100;
    bool fsync = true;
    bool store_raw_windows = false;
    ClockMode clock = ClockMode::Wall;
    query::QueryConfig query{};

    void validate() const {
        if (port < 0 || port > 65535) fail(ErrorKind::InvalidArgument, "config_port", "port out of range");
        if (prompt_expiry_ms <= 0) fail(ErrorKind::InvalidArgument, "config_expiry", "prompt expiry must be positive");
        if (!(window_seconds > 0.0)) fail(ErrorKind::InvalidArgument, "config_window", "window length must be positive");
        if (snapshot_every < 1) fail(ErrorKind::InvalidArgument, "config_snapshot", "snapshot_every must be at least 1");
        query.validate();
    }
};

namespace detail {

template <class T>
void take(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline ClockMode clock_from_string(const std::string& s) {
    if (s == "wall") return ClockMode::Wall;
    if (s == "client") return ClockMode::Client;
    fail(ErrorKind::Validation, "config_clock", "clock must be 'wall' or 'client', got '" + s + "'");
}

} // namespace detail

inline std::string to_string(ClockMode c) { return c == ClockMode::Wall ? "wall" : "client"; }

inline void apply_json(ServiceConfig& c, const nlohmann::json& j) {
    try {
        detail::take(j, "listen_host", c.listen_host);
        detail::take(j, "port", c.port);
        detail::take(j, "data_dir", c.data_dir);
        detail::take(j, "prompt_expiry_ms", c.prompt_expiry_ms);
        detail::take(j, "window_seconds", c.window_seconds);
        detail::take(j, "snapshot_every", c.snapshot_every);
        detail::take(j, "fsync", c.fsync);
        detail::take(j, "store_raw_windows", c.store_raw_windows);
        if (j.contains("clock")) c.clock = detail::clock_from_string(j.at("clock").get<std::string>());
        if (j.contains("query")) {
            const auto& q = j.at("query");
            detail::take(q, "initial_count", c.query.initial_count);
            detail::take(q, "p_min", c.query.p_min);
            detail::take(q, "density_divisor", c.query.density_divisor);
            detail::take(q, "neighborhood_radius", c.query.neighborhood_radius);
            detail::take(q, "region_cell_size", c.query.region_cell_size);
            detail::take(q, "saturation_threshold", c.query.saturation_threshold);
            detail::take(q, "rng_seed", c.query.rng_seed);
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Validation, "config_type", std::string("bad config value: ") + e.what());
    }
}

/// `getenv` is injectable so tests need not touch the process environment.
inline void apply_env(ServiceConfig& c, const std::function<const char*(const char*)>& getenv = std::getenv) {
    auto str = [&](const char* name, std::string& out) {
        if (const char* v = getenv(name)) out = v;
    };
    auto num = [&](const char* name, auto& out) {
        const char* v = getenv(name);
        if (!v) return;
        try {
            std::size_t pos = 0;
            using T = std::remove_reference_t<decltype(out)>;
            if constexpr (std::is_floating_point_v<T>) {
                out = static_cast<T>(std::stod(v, &pos));
            } else {
                const long long parsed = std::stoll(v, &pos);
                if (parsed < 0 && std::is_unsigned_v<T>) throw std::invalid_argument("negative");
                out = static_cast<T>(parsed);
            }
            if (v[pos] != '\0') throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            fail(ErrorKind::Validation, "config_env", std::string(name) + " is not a valid number: " + v);
        }
    };
    auto flag = [&](const char* name, bool& out) {
        const char* v = getenv(name);
        if (!v) return;
        const std::string s = v;
        if (s == "1" || s == "true") out = true;
        else if (s == "0" || s == "false") out = false;
        else fail(ErrorKind::Validation, "config_env", std::string(name) + " must be true/false");
    };
    str("STRESSMON_LISTEN_HOST", c.listen_host);
    num("STRESSMON_PORT", c.port);
    str("STRESSMON_DATA_DIR", c.data_dir);
    num("STRESSMON_PROMPT_EXPIRY_MS", c.prompt_expiry_ms);
    num("STRESSMON_WINDOW_SECONDS", c.window_seconds);
    num("STRESSMON_SNAPSHOT_EVERY", c.snapshot_every);
    flag("STRESSMON_FSYNC", c.fsync);
    flag("STRESSMON_STORE_RAW_WINDOWS", c.store_raw_windows);
    if (const char* v = getenv("STRESSMON_CLOCK")) c.clock = detail::clock_from_string(v);
    num("STRESSMON_INITIAL_COUNT", c.query.initial_count);
    num("STRESSMON_P_MIN", c.query.p_min);
    num("STRESSMON_DENSITY_DIVISOR", c.query.density_divisor);
    num("STRESSMON_NEIGHBORHOOD_RADIUS", c.query.neighborhood_radius);
    num("STRESSMON_REGION_CELL_SIZE", c.query.region_cell_size);
    num("STRESSMON_SATURATION_THRESHOLD", c.query.saturation_threshold);
    num("STRESSMON_RNG_SEED", c.query.rng_seed);
}

/// Defaults, then the file (if given), then the environment.
inline ServiceConfig load_config(const std::string& path = {},
                                 const std::function<const char*(const char*)>& getenv = std::getenv) {
    ServiceConfig c;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) fail(ErrorKind::Io, "config_open", "cannot open config file " + path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Validation, "config_parse", path + ": " + e.what());
        }
        apply_json(c, j);
    }
    apply_env(c, getenv);
    c.validate();
    return c;
}

inline nlohmann::json to_json(const ServiceConfig& c) {
    return {{"listen_host", c.listen_host},
            {"port", c.port},
            {"data_dir", c.data_dir},
            {"prompt_expiry_ms", c.prompt_expiry_ms},
            {"window_seconds", c.window_seconds},
            {"snapshot_every", c.snapshot_every},
            {"fsync", c.fsync},
            {"store_raw_windows", c.store_raw_windows},
            {"clock", to_string(c.clock)},
            {"query",
             {{"initial_count", c.query.initial_count},
              {"p_min", c.query.p_min},
              {"density_divisor", c.query.density_divisor},
              {"neighborhood_radius", c.query.neighborhood_radius},
              {"region_cell_size", c.query.region_cell_size},
              {"saturation_threshold", c.query.saturation_threshold},
              {"rng_seed", c.query.rng_seed}}}};
}

} // namespace stressmon::service
