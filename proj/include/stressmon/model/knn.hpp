#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "stressmon/model/dataset.hpp"

namespace stressmon::model {

/// Per-feature z-score fitted on training rows. Constant features keep a
/// divisor of 1.
struct ZScore {
    FeatureArray mean{}, scale{};

    static ZScore fit(const std::vector<FeatureArray>& x) {
        ZScore z;
        const double n = static_cast<double>(x.size());
        for (std::size_t k = 0; k < kFeatureCount; ++k) {
            double m = 0.0;
            for (const auto& r : x) m += r[k];
            m /= n;
            double ss = 0.0;
            for (const auto& r : x) ss += (r[k] - m) * (r[k] - m);
            const double sd = std::sqrt(ss / n);
            z.mean[k] = m;
            z.scale[k] = sd > 0.0 ? sd : 1.0;
        }
        return z;
    }

    FeatureArray apply(const FeatureArray& x) const {
        FeatureArray out{};
        for (std::size_t k = 0; k < kFeatureCount; ++k) out[k] = (x[k] - mean[k]) / scale[k];
        return out;
    }
};

class KnnModel {
public:
    /// k larger than the training set is clamped; `warning()` says so.
    KnnModel(const BinaryDataset& train, std::size_t k) {
        if (k < 1) fail(ErrorKind::InvalidArgument, "knn_k", "k must be at least 1");
        if (train.count(0) == 0 || train.count(1) == 0)
            fail(ErrorKind::InsufficientData, "single_class", "training rows contain a single class");
        z_ = ZScore::fit(train.x);
        x_.reserve(train.size());
        for (const auto& r : train.x) x_.push_back(z_.apply(r));
        y_ = train.y;
        k_ = k;
        if (k_ > x_.size()) {
            warning_ = "k=" + std::to_string(k) + " exceeds " + std::to_string(x_.size()) + " training rows; clamped";
            k_ = x_.size();
        }
    }

    std::size_t k() const noexcept { return k_; }
    const std::string& warning() const noexcept { return warning_; }

    /// Majority of the k nearest (equal distances broken by training order);
    /// a split vote goes to the class with the smaller summed distance, then 0.
    int predict(const FeatureArray& raw) const {
        const auto q = z_.apply(raw);
        std::vector<std::pair<double, std::size_t>> d(x_.size());
        for (std::size_t i = 0; i < x_.size(); ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < kFeatureCount; ++k) s += (x_[i][k] - q[k]) * (x_[i][k] - q[k]);
            d[i] = {s, i};
        }
        std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k_), d.end());
        std::size_t votes[2] = {0, 0};
        double dist[2] = {0.0, 0.0};
        for (std::size_t j = 0; j < k_; ++j) {
            const int c = y_[d[j].second];
            ++votes[c];
            dist[c] += std::sqrt(d[j].first);
        }
        if (votes[0] != votes[1]) return votes[1] > votes[0] ? 1 : 0;
        return dist[1] < dist[0] ? 1 : 0;
    }

private:
    ZScore z_;
    std::vector<FeatureArray> x_;
    std::vector<int> y_;
    std::size_t k_ = 0;
    std::string warning_;
};

} // namespace stressmon::model
