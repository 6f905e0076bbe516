#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "stressmon/error.hpp"

namespace stressmon::signal {

inline constexpr double kDefaultSampleRateHz = 20.0;
inline constexpr double kDefaultWindowSeconds = 120.0;

/// One PPG capture from one subject. Motion is carried through but never
/// processed.
struct RawWindow {
    std::string subject_id;
    std::int64_t start_time_ms = 0;
    double sample_rate_hz = kDefaultSampleRateHz;
    std::vector<double> ppg;
    std::optional<std::vector<std::array<double, 3>>> motion;

    double duration_s() const { return static_cast<double>(ppg.size()) / sample_rate_hz; }
};

inline std::size_t expected_samples(double duration_s, double sample_rate_hz) {
    return static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
}

// ---------------------------------------------------------------------------
// CSV window files
//
//   #meta subject=S01 start_time_ms=1767225600000 sample_rate_hz=20
//   t_ms,ppg[,ax,ay,az]
//   0,0.1234
//   50,0.1302
//   ...
//
// t_ms is the offset from start_time_ms. Several windows may follow each other
// in one file, each introduced by its own #meta line and header.
// ---------------------------------------------------------------------------

inline void write_window_csv(std::ostream& os, const RawWindow& w) {
    os << "#meta subject=" << w.subject_id << " start_time_ms=" << w.start_time_ms
       << " sample_rate_hz=" << w.sample_rate_hz << '\n';
    const bool has_motion = w.motion.has_value();
    os << (has_motion ? "t_ms,ppg,ax,ay,az\n" : "t_ms,ppg\n");
    std::ostringstream line;
    line.precision(17);
    for (std::size_t i = 0; i < w.ppg.size(); ++i) {
        line.str({});
        line << std::llround(static_cast<double>(i) * 1000.0 / w.sample_rate_hz) << ',' << w.ppg[i];
        if (has_motion) {
            const auto& m = (*w.motion)[i];
            line << ',' << m[0] << ',' << m[1] << ',' << m[2];
        }
        os << line.str() << '\n';
    }
}

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

inline double parse_double(const std::string& s, std::size_t line_no) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        fail(ErrorKind::Validation, "csv_number", "line " + std::to_string(line_no) + ": bad number '" + s + "'");
    }
}

} // namespace detail

inline std::vector<RawWindow> read_window_csv(std::istream& is) {
    std::vector<RawWindow> out;
    std::string line;
    std::size_t line_no = 0;
    bool expect_header = false;
    bool has_motion = false;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("#meta ", 0) == 0) {
            RawWindow w;
            bool have_subject = false, have_start = false;
            std::istringstream fields(line.substr(6));
            std::string kv;
            while (fields >> kv) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos)
                    fail(ErrorKind::Validation, "csv_meta", "line " + std::to_string(line_no) + ": bad meta field");
                const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
                if (key == "subject") {
                    w.subject_id = val;
                    have_subject = true;
                } else if (key == "start_time_ms") {
                    w.start_time_ms = static_cast<std::int64_t>(detail::parse_double(val, line_no));
                    have_start = true;
                } else if (key == "sample_rate_hz") {
                    w.sample_rate_hz = detail::parse_double(val, line_no);
                }
            }
            if (!have_subject || !have_start)
                fail(ErrorKind::Validation, "csv_meta", "line " + std::to_string(line_no) + ": meta needs subject and start_time_ms");
            out.push_back(std::move(w));
            expect_header = true;
            continue;
        }
        if (line[0] == '#') continue;
        if (out.empty())
            fail(ErrorKind::Validation, "csv_meta", "line " + std::to_string(line_no) + ": data before #meta line");
        if (expect_header) {
            if (line == "t_ms,ppg") has_motion = false;
            else if (line == "t_ms,ppg,ax,ay,az") has_motion = true;
            else fail(ErrorKind::Validation, "csv_header", "line " + std::to_string(line_no) + ": unexpected header '" + line + "'");
            if (has_motion) out.back().motion.emplace();
            expect_header = false;
            continue;
        }
        const auto cols = detail::split(line, ',');
        if (cols.size() != (has_motion ? 5u : 2u))
            fail(ErrorKind::Validation, "csv_columns", "line " + std::to_string(line_no) + ": wrong column count");
        auto& w = out.back();
        w.ppg.push_back(detail::parse_double(cols[1], line_no));
        if (has_motion)
            w.motion->push_back({detail::parse_double(cols[2], line_no), detail::parse_double(cols[3], line_no),
                                 detail::parse_double(cols[4], line_no)});
    }
    return out;
}

} // namespace stressmon::signal
