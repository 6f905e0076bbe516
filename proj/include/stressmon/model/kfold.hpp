#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "stressmon/error.hpp"

namespace stressmon::model {

/// fold[i] is the fold of row i. Each class is shuffled on its own and dealt
/// round-robin; the dealing position carries over from one class to the next
/// so fold sizes stay balanced as well.
inline std::vector<std::size_t> stratified_kfold(const std::vector<int>& y, std::size_t k, std::uint64_t seed) {
    if (k < 2) fail(ErrorKind::InvalidArgument, "kfold_k", "need at least 2 folds");
    std::vector<std::size_t> fold(y.size());
    std::mt19937_64 rng(seed);
    std::size_t pos = 0;
    for (int cls : {0, 1}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < y.size(); ++i)
            if (y[i] == cls) members.push_back(i);
        if (members.size() < k)
            fail(ErrorKind::InsufficientData, "kfold_class_size",
                 "class " + std::to_string(cls) + " has " + std::to_string(members.size()) + " rows for " +
                     std::to_string(k) + " folds");
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t i : members) fold[i] = pos++ % k;
    }
    return fold;
}

/// Row indices in / out of fold f.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_fold(const std::vector<std::size_t>& fold,
                                                                                std::size_t f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? test : train).push_back(i);
    return {train, test};
}

} // namespace stressmon::model
