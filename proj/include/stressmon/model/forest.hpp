#pragma once

// CART trees with Gini splits, bagged into a random forest.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "stressmon/model/dataset.hpp"

namespace stressmon::model {

struct ForestParams {
    std::size_t n_trees = 100;
    std::size_t max_features = 3; // floor(sqrt(13))
    std::size_t min_leaf = 1;
    bool bootstrap = true;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_trees < 1 || min_leaf < 1 || max_features < 1 || max_features > kFeatureCount)
            fail(ErrorKind::InvalidArgument, "forest_params", "n_trees, min_leaf >= 1 and 1 <= max_features <= 13");
    }
};

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    std::uint32_t left = 0, right = 0;
    int cls = 0;
};

class DecisionTree {
public:
    /// Grows on rows `idx` of `data` (repeats allowed) until nodes are pure
    /// or no split leaves min_leaf rows on both sides.
    DecisionTree(const BinaryDataset& data, std::vector<std::size_t> idx, const ForestParams& p, std::mt19937_64& rng)
        : data_(&data), p_(&p), rng_(&rng) {
        grow(std::move(idx));
        data_ = nullptr;
        p_ = nullptr;
        rng_ = nullptr;
    }

    int predict(const FeatureArray& x) const {
        std::uint32_t n = 0;
        while (nodes_[n].feature >= 0)
            n = x[static_cast<std::size_t>(nodes_[n].feature)] <= nodes_[n].threshold ? nodes_[n].left : nodes_[n].right;
        return nodes_[n].cls;
    }

    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

private:
    struct Split {
        int feature = -1;
        double threshold = 0.0;
        // Maximised Gini purity term, kept as an exact fraction num/den.
        __int128 num = 0, den = 1;
    };

    std::uint32_t grow(std::vector<std::size_t> idx) {
        const auto me = static_cast<std::uint32_t>(nodes_.size());
        nodes_.emplace_back();
        std::size_t c1 = 0;
        for (std::size_t i : idx) c1 += static_cast<std::size_t>(data_->y[i]);
        const std::size_t c0 = idx.size() - c1;
        nodes_[me].cls = c1 > c0 ? 1 : 0;
        if (c0 == 0 || c1 == 0 || idx.size() < 2 * p_->min_leaf) return me;

        const Split s = best_split(idx, c0, c1);
        if (s.feature < 0) return me;
        std::vector<std::size_t> l, r;
        for (std::size_t i : idx)
            (data_->x[i][static_cast<std::size_t>(s.feature)] <= s.threshold ? l : r).push_back(i);
        idx.clear();
        idx.shrink_to_fit();
        nodes_[me].feature = s.feature;
        nodes_[me].threshold = s.threshold;
        const auto li = grow(std::move(l));
        nodes_[me].left = li;
        const auto ri = grow(std::move(r));
        nodes_[me].right = ri;
        return me;
    }

    // Features are drawn without replacement; drawing continues past
    // max_features while none of the drawn ones can be split. Among the
    // evaluated features the lowest index wins ties, then the lowest threshold.
    Split best_split(const std::vector<std::size_t>& idx, std::size_t c0, std::size_t c1) {
        std::array<int, kFeatureCount> perm{};
        std::iota(perm.begin(), perm.end(), 0);
        std::vector<int> chosen;
        std::size_t drawn = 0, splittable = 0;
        std::vector<Split> per_feature(kFeatureCount);
        while (drawn < kFeatureCount && (splittable < p_->max_features)) {
            std::uniform_int_distribution<std::size_t> pick(drawn, kFeatureCount - 1);
            std::swap(perm[drawn], perm[pick(*rng_)]);
            const int f = perm[drawn++];
            per_feature[static_cast<std::size_t>(f)] = scan(idx, f, c0, c1);
            if (per_feature[static_cast<std::size_t>(f)].feature >= 0) {
                ++splittable;
                chosen.push_back(f);
            }
        }
        std::sort(chosen.begin(), chosen.end());
        Split best;
        for (int f : chosen) {
            const auto& s = per_feature[static_cast<std::size_t>(f)];
            if (best.feature < 0 || s.num * best.den > best.num * s.den) best = s;
        }
        return best;
    }

    Split scan(const std::vector<std::size_t>& idx, int f, std::size_t c0, std::size_t c1) {
        buf_.clear();
        for (std::size_t i : idx) buf_.emplace_back(data_->x[i][static_cast<std::size_t>(f)], data_->y[i]);
        std::sort(buf_.begin(), buf_.end());
        Split best;
        const std::size_t n = buf_.size();
        std::size_t l0 = 0, l1 = 0;
        for (std::size_t p = 1; p < n; ++p) {
            (buf_[p - 1].second ? l1 : l0)++;
            if (!(buf_[p - 1].first < buf_[p].first)) continue;
            if (p < p_->min_leaf || n - p < p_->min_leaf) continue;
            const auto nl = static_cast<__int128>(p), nr = static_cast<__int128>(n - p);
            const auto r0 = static_cast<__int128>(c0 - l0), r1 = static_cast<__int128>(c1 - l1);
            const __int128 num = (static_cast<__int128>(l0) * l0 + static_cast<__int128>(l1) * l1) * nr + (r0 * r0 + r1 * r1) * nl;
            const __int128 den = nl * nr;
            if (best.feature < 0 || num * best.den > best.num * den) {
                double thr = 0.5 * (buf_[p - 1].first + buf_[p].first);
                if (!(thr < buf_[p].first)) thr = buf_[p - 1].first;
                best = {f, thr, num, den};
            }
        }
        return best;
    }

    std::vector<TreeNode> nodes_;
    std::vector<std::pair<double, int>> buf_;
    const BinaryDataset* data_;
    const ForestParams* p_;
    std::mt19937_64* rng_;
};

class RandomForest {
public:
    RandomForest(const BinaryDataset& train, ForestParams p) : p_(p) {
        p_.validate();
        if (train.count(0) == 0 || train.count(1) == 0)
            fail(ErrorKind::InsufficientData, "single_class", "training rows contain a single class");
        trees_.reserve(p_.n_trees);
        const std::size_t n = train.size();
        for (std::size_t t = 0; t < p_.n_trees; ++t) {
            // Each tree owns its generator so trees could be grown in any order.
            std::seed_seq seq{static_cast<std::uint32_t>(p_.seed), static_cast<std::uint32_t>(p_.seed >> 32),
                              static_cast<std::uint32_t>(t)};
            std::mt19937_64 rng(seq);
            std::vector<std::size_t> idx(n);
            if (p_.bootstrap) {
                std::uniform_int_distribution<std::size_t> pick(0, n - 1);
                for (auto& i : idx) i = pick(rng);
            } else {
                std::iota(idx.begin(), idx.end(), std::size_t{0});
            }
            trees_.emplace_back(train, std::move(idx), p_, rng);
        }
    }

    /// Majority vote; a tied vote goes to 0.
    int predict(const FeatureArray& x) const {
        std::size_t ones = 0;
        for (const auto& t : trees_) ones += static_cast<std::size_t>(t.predict(x));
        return 2 * ones > trees_.size() ? 1 : 0;
    }

    const std::vector<DecisionTree>& trees() const noexcept { return trees_; }

private:
    ForestParams p_;
    std::vector<DecisionTree> trees_;
};

} // namespace stressmon::model
