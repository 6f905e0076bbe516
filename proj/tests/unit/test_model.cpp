#include <catch2/catch_amalgamated.hpp>

#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "model_benchmarks.hpp"
#include "model_oracle.hpp"
#include "stressmon/model/experiments.hpp"

using namespace stressmon;
using namespace stressmon::model;

namespace {

FeatureRow row_with_level(int level, std::string subject = "S01") {
    FeatureRow r;
    r.subject_id = std::move(subject);
    r.stress_level = stress_level_from_int(level);
    r.activity = Activity::Sitting;
    return r;
}

BinaryDataset random_dataset(std::mt19937_64& rng, std::size_t n, bool discrete) {
    std::normal_distribution<double> g;
    std::uniform_int_distribution<int> small(0, 3);
    BinaryDataset d;
    for (std::size_t i = 0; i < n; ++i) {
        FeatureArray x{};
        for (double& v : x) v = discrete ? small(rng) : g(rng);
        const int cls = (x[0] + 0.5 * x[3] + g(rng) > 0.8) ? 1 : 0;
        d.push(x, cls);
    }
    d.y[0] = 0;
    d.y[1] = 1;
    return d;
}

std::string code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

} // namespace

TEST_CASE("map_labels follows the task definitions", "[model][tasks]") {
    for (TaskId t : {TaskId::T1, TaskId::T2, TaskId::T3, TaskId::T4}) CHECK(task(t).map(StressLevel::NotAtAll) == 0);
    CHECK(task(TaskId::T2).map(StressLevel::Some) == 1);
    CHECK_FALSE(task(TaskId::T1).map(StressLevel::Some).has_value());
    CHECK(task(TaskId::T3).map(StressLevel::Extremely) == 1);
    CHECK_FALSE(task(TaskId::T3).map(StressLevel::ALittleBit).has_value());
    CHECK(task(TaskId::T4).map(StressLevel::ALittleBit) == 0);

    LabeledDataset rows;
    for (int level : {0, 0, 1, 2, 3, 4, 4}) rows.push_back(row_with_level(level));
    rows.push_back(FeatureRow{}); // unlabeled
    const auto t3 = map_labels(rows, task(TaskId::T3));
    CHECK(t3.count(1) == 3);
    CHECK(t3.count(0) == 2);
    const auto t4 = map_labels(rows, task(TaskId::T4));
    CHECK(t4.size() == 7);

    LabeledDataset only_zero{row_with_level(0), row_with_level(0)};
    CHECK(code_of([&] { map_labels(only_zero, task(TaskId::T1)); }) == "degenerate_task");
    CHECK(task_from_string("T3") == TaskId::T3);
    CHECK_THROWS_AS(task_from_string("T9"), Error);
}

TEST_CASE("macro_f1 examples", "[model][metrics]") {
    CHECK(macro_f1({1, 0, 1, 0}, {1, 0, 1, 0}) == 1.0);
    const auto c = confusion({1, 0, 0, 0}, {1, 1, 0, 0});
    CHECK(c.f1(1) == Catch::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(c.f1(0) == Catch::Approx(0.8).epsilon(1e-15));
    CHECK(c.macro_f1() == Catch::Approx(11.0 / 15.0).epsilon(1e-15));
    CHECK(macro_f1({1, 1, 1}, {0, 0, 0}) == 0.0);
    CHECK(code_of([] { macro_f1({1}, {1, 0}); }) == "length_mismatch");
}

TEST_CASE("macro_f1 is symmetric under relabeling", "[model][metrics][property]") {
    std::mt19937_64 rng(5);
    std::bernoulli_distribution b(0.4);
    for (int t = 0; t < 300; ++t) {
        std::vector<int> p(25), y(25), pf, yf;
        for (auto& v : p) v = b(rng);
        for (auto& v : y) v = b(rng);
        for (int v : p) pf.push_back(1 - v);
        for (int v : y) yf.push_back(1 - v);
        CHECK(macro_f1(p, y) == macro_f1(pf, yf));
    }
}

TEST_CASE("format and summary statistics", "[model][metrics]") {
    CHECK(format_pm({0.7649, 0.0512}) == "0.76 ± 0.05");
    const auto m = mean_std({0.5, 0.5});
    CHECK(m.std == 0.0);
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == Catch::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == Catch::Approx(-1.0));
}

TEST_CASE("stratified_kfold examples", "[model][kfold]") {
    std::vector<int> y{1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
    const auto f = stratified_kfold(y, 5, 1);
    for (std::size_t k = 0; k < 5; ++k) {
        int pos = 0, neg = 0;
        for (std::size_t i = 0; i < y.size(); ++i)
            if (f[i] == k) (y[i] ? pos : neg)++;
        CHECK(pos == 1);
        CHECK(neg == 1);
    }

    std::vector<int> skew(150, 0);
    for (int i = 0; i < 7; ++i) skew[static_cast<std::size_t>(i * 20)] = 1;
    const auto g = stratified_kfold(skew, 5, 9);
    for (std::size_t k = 0; k < 5; ++k) {
        int pos = 0, neg = 0;
        for (std::size_t i = 0; i < skew.size(); ++i)
            if (g[i] == k) (skew[i] ? pos : neg)++;
        CHECK((pos == 1 || pos == 2));
        CHECK((neg == 28 || neg == 29));
    }
    CHECK(stratified_kfold(skew, 5, 9) == g);
    CHECK(code_of([&] { stratified_kfold(skew, 8, 1); }) == "kfold_class_size");
}

TEST_CASE("stratified_kfold partitions with balanced classes for any seed", "[model][kfold][property]") {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 200; ++t) {
        const std::size_t k = 2 + rng() % 9;
        const std::size_t n0 = k + rng() % 60, n1 = k + rng() % 60;
        std::vector<int> y(n0, 0);
        y.insert(y.end(), n1, 1);
        std::shuffle(y.begin(), y.end(), rng);
        const auto seed = rng();
        const auto f = stratified_kfold(y, k, seed);
        CHECK(f == stratified_kfold(y, k, seed));
        std::vector<std::array<std::size_t, 2>> counts(k, {0, 0});
        for (std::size_t i = 0; i < y.size(); ++i) {
            REQUIRE(f[i] < k);
            ++counts[f[i]][static_cast<std::size_t>(y[i])];
        }
        for (int c : {0, 1}) {
            std::size_t lo = SIZE_MAX, hi = 0;
            for (const auto& cc : counts) {
                lo = std::min(lo, cc[static_cast<std::size_t>(c)]);
                hi = std::max(hi, cc[static_cast<std::size_t>(c)]);
            }
            CHECK(hi - lo <= 1);
        }
    }
}

TEST_CASE("kNN basics", "[model][knn]") {
    std::mt19937_64 rng(2);
    const auto d = random_dataset(rng, 60, false);
    const KnnModel m(d, 1);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(m.predict(d.x[i]) == d.y[i]);

    const KnnModel big(d, 500);
    CHECK(big.k() == 60);
    CHECK_FALSE(big.warning().empty());

    BinaryDataset one;
    one.push(FeatureArray{}, 1);
    one.push(FeatureArray{}, 1);
    CHECK(code_of([&] { KnnModel(one, 1); }) == "single_class");
}

TEST_CASE("kNN split vote goes to the nearer class, then 0", "[model][knn]") {
    BinaryDataset d;
    FeatureArray a{}, b{}, c{}, e{};
    a[0] = -1.0;
    b[0] = 2.0;
    c[0] = -3.0;
    e[0] = 4.0;
    d.push(a, 1);
    d.push(b, 0);
    d.push(c, 1);
    d.push(e, 0);
    const KnnModel m(d, 2);
    CHECK(m.predict(FeatureArray{}) == 1); // the 1 at -1 is closer than the 0 at +2

    BinaryDataset sym;
    FeatureArray l{}, r{};
    l[0] = -1.0;
    r[0] = 1.0;
    sym.push(l, 1);
    sym.push(r, 0);
    CHECK(KnnModel(sym, 2).predict(FeatureArray{}) == 0);
}

TEST_CASE("kNN matches the all-pairs oracle", "[model][knn][oracle]") {
    std::mt19937_64 rng(31);
    for (int t = 0; t < 40; ++t) {
        const bool discrete = t % 2 == 0; // discrete data exercises distance ties
        const auto d = random_dataset(rng, 30 + rng() % 80, discrete);
        const std::size_t k = 1 + rng() % 9;
        const KnnModel m(d, k);
        const auto probes = random_dataset(rng, 50, discrete);
        for (const auto& q : probes.x) CHECK(m.predict(q) == oracle::knn_predict(d, k, q));
    }
}

TEST_CASE("single tree equals the exhaustive-split oracle", "[model][forest][oracle]") {
    std::mt19937_64 rng(41);
    ForestParams p;
    p.n_trees = 1;
    p.bootstrap = false;
    p.max_features = 13;
    for (int t = 0; t < 40; ++t) {
        const bool discrete = t % 3 == 0;
        const auto d = random_dataset(rng, 10 + rng() % 41, discrete);
        p.min_leaf = 1 + static_cast<std::size_t>(t % 3);
        p.seed = rng();
        const RandomForest f(d, p);
        const oracle::BruteTree ref(d, p.min_leaf);
        CHECK(f.trees().front().nodes().size() == ref.node_count());
        const auto probes = random_dataset(rng, 200, discrete);
        for (const auto& q : probes.x) CHECK(f.predict(q) == ref.predict(q));
        for (const auto& q : d.x) CHECK(f.predict(q) == ref.predict(q));
    }
}

TEST_CASE("random forest determinism and separable accuracy", "[model][forest]") {
    const auto train_set = bench::two_gaussian(3, 200);
    const auto test_set = bench::two_gaussian(4, 400);
    ForestParams p;
    p.seed = 11;
    const RandomForest a(train_set, p), b(train_set, p);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_set.size(); ++i) correct += a.predict(test_set.x[i]) == test_set.y[i];
    CHECK(static_cast<double>(correct) / static_cast<double>(test_set.size()) >= 0.95);

    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0.0, 3.0);
    for (int i = 0; i < 1000; ++i) {
        FeatureArray q{};
        for (double& v : q) v = g(rng);
        CHECK(a.predict(q) == b.predict(q));
    }
}

TEST_CASE("predictions are invariant to positive feature scaling", "[model][property]") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> cdist(0.01, 100.0);
    for (int t = 0; t < 10; ++t) {
        const auto d = random_dataset(rng, 120, false);
        const auto probes = random_dataset(rng, 100, false);
        const double c = cdist(rng);
        auto scale = [c](BinaryDataset s) {
            for (auto& x : s.x)
                for (double& v : x) v *= c;
            return s;
        };
        const auto ds = scale(d), ps = scale(probes);
        ClassifierSpec knn{.kind = ModelKind::Knn};
        ClassifierSpec rf{.kind = ModelKind::RandomForest, .n_trees = 25, .seed = 5};
        const auto k1 = train(knn, d), k2 = train(knn, ds);
        const auto r1 = train(rf, d), r2 = train(rf, ds);
        CHECK(k1.predict(probes.x) == k2.predict(ps.x));
        CHECK(r1.predict(probes.x) == r2.predict(ps.x));
    }
}

TEST_CASE("crossval on the benchmarks", "[model][crossval]") {
    const auto sep = bench::two_gaussian(1, 200);
    ClassifierSpec rf{.seed = 7};
    const auto rep = run_crossval(sep, rf, {5, 7}, "T3");
    CHECK(rep.fold_f1.size() == 5);
    CHECK(rep.summary.mean >= 0.90);
    const auto again = run_crossval(sep, rf, {5, 7}, "T3");
    CHECK(again.fold_f1 == rep.fold_f1);
    CHECK(again.csv() == rep.csv());
    CHECK(rep.table().find(rep.formatted()) != std::string::npos);

    const auto shuffled = bench::shuffled_labels(bench::two_gaussian(1, 1000), 1);
    const auto chance = run_crossval(shuffled, rf, {5, 7});
    CHECK(std::abs(chance.summary.mean - 0.5) <= 0.1);
}

TEST_CASE("personalization runner", "[model][personalization]") {
    const bench::ShiftCohort cohort;
    const auto d = cohort.make(5);
    ClassifierSpec rf{.n_trees = 30, .seed = 3};
    const auto r = run_personalization(d, "H", rf, 3);
    CHECK(r.test_rows == 40);
    CHECK(r.own_train_rows == 40);
    const auto r2 = run_personalization(d, "H", rf, 3);
    CHECK(r.before == r2.before);
    CHECK(r.after == r2.after);
    CHECK(code_of([&] { run_personalization(d, "nobody", rf, 3); }) == "personal_rows");
}

TEST_CASE("learning curve runner", "[model][curve]") {
    const auto subject = bench::curved_subject(2, 300);
    ClassifierSpec knn{.kind = ModelKind::Knn};
    LearningCurveConfig cfg{.test_size = 100, .train_sizes = {50, 100, 200}, .repeats = 1, .seed = 4};
    const auto curve = run_learning_curve(subject, cfg, knn);
    REQUIRE(curve.size() == 3);
    for (const auto& p : curve) CHECK(p.std == 0.0);

    // The largest size uses every remaining row: a plain holdout evaluation.
    std::seed_seq seq{4u, 0u, 0u};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> order(subject.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto test = subject.subset({order.begin(), order.begin() + 100});
    const auto rest = subject.subset({order.begin() + 100, order.end()});
    CHECK(curve.back().mean == macro_f1(train(knn, rest).predict(test.x), test.y));

    cfg.train_sizes = {100, 250};
    const auto msg = [&] {
        try {
            run_learning_curve(subject, cfg, knn);
        } catch (const Error& e) {
            return std::string(e.what());
        }
        return std::string();
    }();
    CHECK(msg.find("at most train size 200") != std::string::npos);
}

TEST_CASE("feature CSV round trip", "[model][csv]") {
    std::vector<FeatureRow> rows;
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g(800, 50);
    for (int i = 0; i < 20; ++i) {
        FeatureRow r;
        r.subject_id = "S0" + std::to_string(i % 3);
        r.start_time_ms = 1700000000000 + i * 900000;
        FeatureArray a{};
        for (double& v : a) v = g(rng);
        r.features = hrv::FeatureVector::from_array(a, i % 4 == 0 ? hrv::kBrDegenerate : 0u);
        if (i % 2) {
            r.stress_level = stress_level_from_int(i % 5);
            r.activity = activity_from_int(i % 6);
        }
        rows.push_back(r);
    }
    std::stringstream labeled;
    write_csv(labeled, rows, true);
    CHECK(read_csv(labeled) == rows);

    std::stringstream unlabeled;
    write_csv(unlabeled, rows, false);
    const auto back = read_csv(unlabeled);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].features == rows[i].features);
        CHECK_FALSE(back[i].labeled());
    }

    std::stringstream bad(csv_header(true) + "\nS01,0,1,2\n");
    CHECK(code_of([&] { read_csv(bad); }) == "csv_columns");
}
