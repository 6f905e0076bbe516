#pragma once

// Cross-validation, personalization and learning-curve runners.

#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stressmon/model/classifier.hpp"
#include "stressmon/model/kfold.hpp"
#include "stressmon/model/metrics.hpp"

namespace stressmon::model {

struct EvalConfig {
    std::size_t k = 5;
    std::uint64_t seed = 0;
};

struct EvalReport {
    std::string task;
    std::string model;
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::size_t positives = 0, negatives = 0;
    std::vector<double> fold_f1;
    std::vector<Confusion> confusions;
    MeanStd summary;
    std::vector<std::string> warnings;

    std::string formatted() const { return format_pm(summary); }

    std::string table() const {
        std::ostringstream os;
        os << "task   model  samples(+/-)  macro-F1\n";
        char line[128];
        std::snprintf(line, sizeof line, "%-6s %-6s %5zu/%-7zu %s\n", task.c_str(), model.c_str(), positives, negatives,
                      formatted().c_str());
        os << line;
        return os.str();
    }

    std::string csv() const {
        std::ostringstream os;
        os << "task,model,k,seed,fold,macro_f1,tn,fp,fn,tp\n";
        for (std::size_t f = 0; f < fold_f1.size(); ++f) {
            const auto& c = confusions[f].counts;
            os << task << ',' << model << ',' << k << ',' << seed << ',' << f << ',' << util::format_double(fold_f1[f])
               << ',' << c[0][0] << ',' << c[0][1] << ',' << c[1][0] << ',' << c[1][1] << '\n';
        }
        os << task << ',' << model << ',' << k << ',' << seed << ",mean," << util::format_double(summary.mean)
           << ",,,,\n";
        os << task << ',' << model << ',' << k << ',' << seed << ",std," << util::format_double(summary.std) << ",,,,\n";
        return os.str();
    }
};

/// Train on K-1 folds, score the held-out fold, summarise over folds.
inline EvalReport run_crossval(const BinaryDataset& data, const ClassifierSpec& spec, const EvalConfig& cfg,
                               std::string task_name = {}) {
    EvalReport rep;
    rep.task = std::move(task_name);
    rep.model = to_string(spec.kind);
    rep.k = cfg.k;
    rep.seed = cfg.seed;
    rep.positives = data.count(1);
    rep.negatives = data.count(0);
    const auto fold = stratified_kfold(data.y, cfg.k, cfg.seed);
    for (std::size_t f = 0; f < cfg.k; ++f) {
        const auto [tr, te] = split_fold(fold, f);
        const auto test = data.subset(te);
        const auto model = train(spec, data.subset(tr));
        if (auto w = model.warning(); !w.empty()) rep.warnings.push_back(std::move(w));
        const auto c = confusion(model.predict(test.x), test.y);
        rep.confusions.push_back(c);
        rep.fold_f1.push_back(c.macro_f1());
    }
    rep.summary = mean_std(rep.fold_f1);
    return rep;
}

inline EvalReport run_crossval(const LabeledDataset& rows, TaskId t, const ClassifierSpec& spec, const EvalConfig& cfg) {
    return run_crossval(map_labels(rows, task(t)), spec, cfg, to_string(t));
}

struct PersonalizationResult {
    double before = 0.0;
    double after = 0.0;
    std::size_t test_rows = 0;
    std::size_t own_train_rows = 0;
};

inline constexpr std::size_t kMinPersonalRows = 20;

/// The held subject's rows are split in half at random. Both models are
/// scored on half A; the "after" model also trains on half B.
inline PersonalizationResult run_personalization(const BinaryDataset& data, const std::string& held_subject,
                                                 const ClassifierSpec& spec, std::uint64_t seed) {
    std::vector<std::size_t> own, others;
    for (std::size_t i = 0; i < data.size(); ++i) (data.subject[i] == held_subject ? own : others).push_back(i);
    if (own.size() < kMinPersonalRows)
        fail(ErrorKind::InsufficientData, "personal_rows",
             "subject '" + held_subject + "' has " + std::to_string(own.size()) + " labeled rows, need " +
                 std::to_string(kMinPersonalRows));
    std::mt19937_64 rng(seed);
    std::shuffle(own.begin(), own.end(), rng);
    const auto half = static_cast<std::ptrdiff_t>(own.size() / 2);
    const std::vector<std::size_t> a(own.begin(), own.begin() + half), b(own.begin() + half, own.end());

    const auto test = data.subset(a);
    auto cohort = data.subset(others);
    PersonalizationResult r;
    r.test_rows = a.size();
    r.own_train_rows = b.size();
    r.before = macro_f1(train(spec, cohort).predict(test.x), test.y);
    cohort.append(data.subset(b));
    r.after = macro_f1(train(spec, cohort).predict(test.x), test.y);
    return r;
}

inline PersonalizationResult run_personalization(const LabeledDataset& rows, const std::string& held_subject, TaskId t,
                                                 const ClassifierSpec& spec, std::uint64_t seed) {
    return run_personalization(map_labels(rows, task(t)), held_subject, spec, seed);
}

struct LearningCurveConfig {
    std::size_t test_size = 100;
    std::vector<std::size_t> train_sizes = {100, 150, 200, 250, 300, 350, 400, 450, 500};
    std::size_t repeats = 100;
    std::uint64_t seed = 0;
};

struct CurvePoint {
    std::size_t train_size = 0;
    double mean = 0.0;
    double std = 0.0;
};

/// Each repeat draws a fresh test split; training sets are nested prefixes
/// of one shuffled remainder.
inline std::vector<CurvePoint> run_learning_curve(const BinaryDataset& rows, const LearningCurveConfig& cfg,
                                                  const ClassifierSpec& spec) {
    if (cfg.train_sizes.empty() || cfg.repeats < 1 || cfg.test_size < 1)
        fail(ErrorKind::InvalidArgument, "curve_config", "need train sizes, repeats >= 1 and a test set");
    if (!std::is_sorted(cfg.train_sizes.begin(), cfg.train_sizes.end()) || cfg.train_sizes.front() < 1)
        fail(ErrorKind::InvalidArgument, "curve_config", "train sizes must ascend from at least 1");
    const std::size_t max_feasible = rows.size() > cfg.test_size ? rows.size() - cfg.test_size : 0;
    if (cfg.train_sizes.back() > max_feasible)
        fail(ErrorKind::InsufficientData, "curve_rows",
             std::to_string(rows.size()) + " rows allow at most train size " + std::to_string(max_feasible) +
                 " with test size " + std::to_string(cfg.test_size));

    std::vector<std::vector<double>> scores(cfg.train_sizes.size());
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
        std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                          static_cast<std::uint32_t>(r)};
        std::mt19937_64 rng(seq);
        std::vector<std::size_t> order(rows.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        const std::vector<std::size_t> te(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.test_size));
        const auto test = rows.subset(te);
        auto s = spec;
        s.seed = spec.seed + r;
        for (std::size_t j = 0; j < cfg.train_sizes.size(); ++j) {
            const auto first = order.begin() + static_cast<std::ptrdiff_t>(cfg.test_size);
            const std::vector<std::size_t> tr(first, first + static_cast<std::ptrdiff_t>(cfg.train_sizes[j]));
            scores[j].push_back(macro_f1(train(s, rows.subset(tr)).predict(test.x), test.y));
        }
    }
    std::vector<CurvePoint> curve;
    for (std::size_t j = 0; j < cfg.train_sizes.size(); ++j) {
        const auto m = mean_std(scores[j]);
        curve.push_back({cfg.train_sizes[j], m.mean, m.std});
    }
    return curve;
}

} // namespace stressmon::model
