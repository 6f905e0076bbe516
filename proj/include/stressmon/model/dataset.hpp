#pragma once

// Labeled feature rows, binary task mapping and the feature CSV format shared
// by the offline processor, the service export and the experiment runners.

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "stressmon/error.hpp"
#include "stressmon/hrv/features.hpp"
#include "stressmon/labels.hpp"
#include "stressmon/util/numeric.hpp"

namespace stressmon::model {

using hrv::FeatureArray;
using hrv::kFeatureCount;

struct FeatureRow {
    std::string subject_id;
    std::int64_t start_time_ms = 0;
    hrv::FeatureVector features;
    std::optional<StressLevel> stress_level;
    std::optional<Activity> activity;

    bool labeled() const noexcept { return stress_level.has_value(); }
    bool operator==(const FeatureRow&) const = default;
};

using LabeledDataset = std::vector<FeatureRow>;

enum class TaskId { T1, T2, T3, T4 };

struct BinaryTask {
    TaskId id = TaskId::T4;
    std::vector<int> positive;
    std::vector<int> negative;

    /// 1, 0, or nullopt for levels the task leaves out.
    std::optional<int> map(StressLevel level) const {
        const int v = static_cast<int>(level);
        if (std::find(positive.begin(), positive.end(), v) != positive.end()) return 1;
        if (std::find(negative.begin(), negative.end(), v) != negative.end()) return 0;
        return std::nullopt;
    }
};

inline BinaryTask task(TaskId id) {
    switch (id) {
    case TaskId::T1: return {id, {1}, {0}};
    case TaskId::T2: return {id, {2}, {0}};
    case TaskId::T3: return {id, {3, 4}, {0}};
    case TaskId::T4: return {id, {2, 3, 4}, {0, 1}};
    }
    fail(ErrorKind::InvalidArgument, "task_id", "unknown task");
}

inline std::string to_string(TaskId id) {
    return "T" + std::to_string(static_cast<int>(id) + 1);
}

inline TaskId task_from_string(const std::string& s) {
    for (TaskId id : {TaskId::T1, TaskId::T2, TaskId::T3, TaskId::T4})
        if (to_string(id) == s) return id;
    fail(ErrorKind::InvalidArgument, "task_id", "unknown task '" + s + "' (expected T1..T4)");
}

struct BinaryDataset {
    std::vector<FeatureArray> x;
    std::vector<int> y;
    std::vector<std::string> subject;

    std::size_t size() const noexcept { return y.size(); }
    std::size_t count(int cls) const { return static_cast<std::size_t>(std::count(y.begin(), y.end(), cls)); }

    void push(const FeatureArray& row, int label, std::string subj = {}) {
        x.push_back(row);
        y.push_back(label);
        subject.push_back(std::move(subj));
    }

    BinaryDataset subset(const std::vector<std::size_t>& idx) const {
        BinaryDataset out;
        out.x.reserve(idx.size());
        out.y.reserve(idx.size());
        for (std::size_t i : idx) out.push(x[i], y[i], subject[i]);
        return out;
    }

    void append(const BinaryDataset& o) {
        x.insert(x.end(), o.x.begin(), o.x.end());
        y.insert(y.end(), o.y.begin(), o.y.end());
        subject.insert(subject.end(), o.subject.begin(), o.subject.end());
    }
};

/// Unlabeled rows and levels outside the task are dropped. Both classes must
/// survive.
inline BinaryDataset map_labels(const LabeledDataset& rows, const BinaryTask& t) {
    BinaryDataset out;
    for (const auto& r : rows) {
        if (!r.stress_level) continue;
        if (const auto cls = t.map(*r.stress_level)) out.push(r.features.to_array(), *cls, r.subject_id);
    }
    if (out.count(0) == 0 || out.count(1) == 0)
        fail(ErrorKind::InsufficientData, "degenerate_task",
             to_string(t.id) + " leaves " + std::to_string(out.count(1)) + " positive and " +
                 std::to_string(out.count(0)) + " negative rows");
    return out;
}

// -- CSV ---------------------------------------------------------------------

inline std::string csv_header(bool labeled) {
    std::string h = "subject_id,start_time_ms";
    for (auto name : hrv::kFeatureNames) {
        h += ',';
        h += name;
    }
    h += ",flags";
    if (labeled) h += ",stress_level,activity";
    return h;
}

inline void write_row(std::ostream& os, const FeatureRow& r, bool labeled) {
    os << r.subject_id << ',' << r.start_time_ms;
    for (double v : r.features.to_array()) os << ',' << util::format_double(v);
    os << ',' << hrv::flags_to_string(r.features.flags);
    if (labeled) {
        os << ',' << (r.stress_level ? std::to_string(static_cast<int>(*r.stress_level)) : std::string{});
        os << ',' << (r.activity ? std::string(to_string(*r.activity)) : std::string{});
    }
    os << '\n';
}

inline void write_csv(std::ostream& os, const std::vector<FeatureRow>& rows, bool labeled) {
    os << csv_header(labeled) << '\n';
    for (const auto& r : rows) write_row(os, r, labeled);
}

namespace detail {
inline std::vector<std::string> split(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

inline double to_double(const std::string& s, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
    fail(ErrorKind::Validation, "csv_number", "line " + std::to_string(line_no) + ": not a number: '" + s + "'");
}
} // namespace detail

/// Reads either layout; the header decides whether labels are present.
/// Labeled files may leave stress_level empty for unlabeled rows.
inline std::vector<FeatureRow> read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) fail(ErrorKind::Validation, "csv_header", "empty feature file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool labeled = false;
    if (line == csv_header(true))
        labeled = true;
    else if (line != csv_header(false))
        fail(ErrorKind::Validation, "csv_header", "unexpected feature header: " + line);
    const std::size_t ncols = labeled ? kFeatureCount + 5 : kFeatureCount + 3;

    std::vector<FeatureRow> rows;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = detail::split(line);
        if (cells.size() != ncols)
            fail(ErrorKind::Validation, "csv_columns",
                 "line " + std::to_string(line_no) + ": expected " + std::to_string(ncols) + " columns");
        FeatureRow r;
        r.subject_id = cells[0];
        r.start_time_ms = static_cast<std::int64_t>(detail::to_double(cells[1], line_no));
        FeatureArray a{};
        for (std::size_t k = 0; k < kFeatureCount; ++k) a[k] = detail::to_double(cells[2 + k], line_no);
        r.features = hrv::FeatureVector::from_array(a, hrv::flags_from_string(cells[2 + kFeatureCount]));
        if (labeled && !cells[3 + kFeatureCount].empty()) {
            const double lv = detail::to_double(cells[3 + kFeatureCount], line_no);
            r.stress_level = stress_level_from_int(static_cast<long long>(lv));
            if (!r.stress_level || lv != static_cast<double>(static_cast<long long>(lv)))
                fail(ErrorKind::Validation, "csv_label", "line " + std::to_string(line_no) + ": stress level out of range");
            if (!cells[4 + kFeatureCount].empty()) {
                r.activity = activity_from_name(cells[4 + kFeatureCount]);
                if (!r.activity)
                    fail(ErrorKind::Validation, "csv_label", "line " + std::to_string(line_no) + ": unknown activity");
            }
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace stressmon::model
