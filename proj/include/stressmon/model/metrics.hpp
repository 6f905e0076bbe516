#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "stressmon/error.hpp"

namespace stressmon::model {

/// counts[truth][pred] for the two classes.
struct Confusion {
    std::array<std::array<std::size_t, 2>, 2> counts{};

    std::size_t tp(int cls) const { return counts[cls][cls]; }
    std::size_t predicted(int cls) const { return counts[0][cls] + counts[1][cls]; }
    std::size_t support(int cls) const { return counts[cls][0] + counts[cls][1]; }

    /// 0 when the class was never predicted or never occurs.
    double f1(int cls) const {
        const auto p = predicted(cls), s = support(cls);
        if (p == 0 || s == 0) return 0.0;
        // Harmonic mean of precision and recall, as one rational.
        const auto t = tp(cls);
        return static_cast<double>(2 * t) / static_cast<double>(p + s);
    }

    double macro_f1() const { return 0.5 * (f1(0) + f1(1)); }

    bool operator==(const Confusion&) const = default;
};

inline Confusion confusion(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size())
        fail(ErrorKind::InvalidArgument, "length_mismatch",
             std::to_string(pred.size()) + " predictions for " + std::to_string(truth.size()) + " labels");
    if (pred.empty()) fail(ErrorKind::InvalidArgument, "empty_predictions", "nothing to score");
    Confusion c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if ((pred[i] != 0 && pred[i] != 1) || (truth[i] != 0 && truth[i] != 1))
            fail(ErrorKind::InvalidArgument, "binary_labels", "labels must be 0 or 1");
        ++c.counts[truth[i]][pred[i]];
    }
    return c;
}

inline double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth) {
    return confusion(pred, truth).macro_f1();
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0; // population, over the given values
};

inline MeanStd mean_std(const std::vector<double>& v) {
    MeanStd m;
    if (v.empty()) return m;
    for (double x : v) m.mean += x;
    m.mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(v.size()));
    return m;
}

/// "0.76 ± 0.05"
inline std::string format_pm(const MeanStd& m) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f ± %.2f", m.mean, m.std);
    return buf;
}

/// Average ranks for ties.
inline std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        fail(ErrorKind::InvalidArgument, "spearman_size", "need two equal-length series of at least 2 values");
    const auto ra = ranks(a), rb = ranks(b);
    const auto ma = mean_std(ra), mb = mean_std(rb);
    if (ma.std == 0.0 || mb.std == 0.0) return 0.0;
    double cov = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) cov += (ra[i] - ma.mean) * (rb[i] - mb.mean);
    cov /= static_cast<double>(ra.size());
    return cov / (ma.std * mb.std);
}

} // namespace stressmon::model
