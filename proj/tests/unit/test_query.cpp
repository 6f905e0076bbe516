#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <random>

#include "query_streams.hpp"
#include "stressmon/query/engine.hpp"

using namespace stressmon;
using namespace stressmon::query;
using streams::make_sample;

namespace {

QueryEngine past_initial(QueryConfig cfg, std::mt19937_64& rng, std::size_t n_initial) {
    cfg.initial_count = n_initial;
    QueryEngine e(cfg);
    for (std::size_t i = 0; i < n_initial; ++i)
        e.observe(make_sample(static_cast<std::int64_t>(i), streams::gaussian_point(rng)));
    return e;
}

std::string error_code(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

} // namespace

TEST_CASE("region_of uses floor semantics", "[query][region]") {
    CHECK(region_of(FeatureArray{}, 1.0) == RegionId{});
    FeatureArray x{};
    x[0] = 1.2;
    x[1] = -0.3;
    const auto id = region_of(x, 1.0);
    CHECK(id[0] == 1);
    CHECK(id[1] == -1);
    CHECK(id[2] == 0);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-5, 5), in_cell(0.0, 1.0);
    for (int t = 0; t < 500; ++t) {
        const double g = 0.25 + in_cell(rng);
        FeatureArray base{};
        for (double& v : base) v = std::floor(u(rng)) * g;
        FeatureArray a = base, b = base;
        for (std::size_t k = 0; k < a.size(); ++k) {
            a[k] += in_cell(rng) * g * 0.999;
            b[k] += in_cell(rng) * g * 0.999;
        }
        CHECK(region_of(a, g) == region_of(b, g));
        FeatureArray far = a;
        far[t % 13] += 2 * g;
        CHECK(region_of(far, g) != region_of(a, g));
    }
}

TEST_CASE("initial phase never triggers", "[query][observe]") {
    QueryEngine e;
    std::mt19937_64 rng(3);
    for (std::int64_t i = 0; i < 99; ++i) {
        const auto r = e.submit(make_sample(i, streams::gaussian_point(rng)));
        CHECK_FALSE(r.decision.has_value());
        CHECK(e.in_initial_phase());
    }
    e.submit(make_sample(99, streams::gaussian_point(rng)));
    CHECK_FALSE(e.in_initial_phase());
    for (const auto& rec : e.records()) {
        CHECK(rec.normalized_features.has_value());
        CHECK_FALSE(rec.queried);
    }
    CHECK(error_code([&] { e.observe(make_sample(100, streams::gaussian_point(rng))); }) == "initial_phase_over");
}

TEST_CASE("observe rejects duplicates idempotently", "[query][observe]") {
    QueryEngine e;
    const auto first = e.observe(make_sample(7, FeatureArray{}));
    CHECK(first.accepted);
    const auto again = e.observe(make_sample(7, FeatureArray{}));
    CHECK(again.duplicate);
    CHECK_FALSE(again.accepted);
    CHECK(e.sample_count() == 1);
}

TEST_CASE("N = 0 sends the first sample straight to a decision", "[query][observe]") {
    QueryConfig cfg;
    cfg.initial_count = 0;
    QueryEngine e(cfg);
    CHECK_FALSE(e.in_initial_phase());
    const auto r = e.submit(make_sample(1, FeatureArray{}));
    REQUIRE(r.decision.has_value());
    CHECK(r.decision->probability == 0.1);
}

TEST_CASE("decide_query before the normaliser exists is a protocol error", "[query][decide]") {
    QueryEngine e;
    CHECK(error_code([&] { e.decide_query(make_sample(1, FeatureArray{})); }) == "normalizer_unavailable");
}

TEST_CASE("decide_query probability rule", "[query][decide]") {
    std::mt19937_64 rng(4);
    SECTION("no neighbours -> p_min") {
        auto e = past_initial({}, rng, 100);
        FeatureArray far{};
        far.fill(50.0);
        const auto r = e.decide_query(make_sample(1000, far));
        CHECK(r.decision.neighbor_count == 0);
        CHECK(r.decision.probability == 0.1);
    }
    SECTION("n >= C -> certain trigger") {
        QueryConfig cfg;
        cfg.initial_count = 60;
        QueryEngine e(cfg);
        for (std::int64_t i = 0; i < 60; ++i) {
            FeatureArray x{};
            x[0] = i % 2 ? 1.0 : -1.0; // std 1 on dim 0, zero elsewhere
            e.observe(make_sample(i, x));
        }
        const auto r = e.decide_query(make_sample(100, FeatureArray{}));
        CHECK(r.decision.neighbor_count == 60);
        CHECK(r.decision.probability == 1.0);
        CHECK(r.decision.trigger);
    }
    SECTION("saturated region -> silent") {
        QueryConfig cfg;
        cfg.initial_count = 0;
        cfg.p_min = 1.0;
        QueryEngine e(cfg);
        for (std::int64_t i = 0; i < 10; ++i) {
            const auto r = e.decide_query(make_sample(i, FeatureArray{}));
            REQUIRE(r.decision.trigger);
            e.record_label(i, StressLevel::Some, Activity::Sitting);
        }
        CHECK(e.regions().at(RegionId{}).saturated);
        for (std::int64_t i = 10; i < 200; ++i) {
            const auto r = e.decide_query(make_sample(i, FeatureArray{}));
            CHECK(r.decision.probability == 0.0);
            CHECK_FALSE(r.decision.trigger);
        }
    }
}

TEST_CASE("record_label bookkeeping and errors", "[query][label]") {
    QueryConfig cfg;
    cfg.initial_count = 0;
    cfg.p_min = 1.0;
    QueryEngine e(cfg);
    for (std::int64_t i = 0; i < 12; ++i) e.decide_query(make_sample(i, FeatureArray{}));

    const auto before = e.neighbor_count(FeatureArray{});
    e.record_label(0, StressLevel::ALot, Activity::Walking);
    CHECK(e.neighbor_count(FeatureArray{}) == before - 1);
    CHECK(e.find(0)->label == StressLevel::ALot);

    for (std::int64_t i = 1; i < 9; ++i) e.record_label(i, StressLevel::NotAtAll, Activity::Sitting);
    CHECK_FALSE(e.regions().at(RegionId{}).saturated);
    e.record_label(9, StressLevel::NotAtAll, Activity::Sitting);
    CHECK(e.regions().at(RegionId{}).saturated);
    CHECK(e.regions().at(RegionId{}).labeled_count == 10);

    CHECK(error_code([&] { e.record_label(999, StressLevel::Some, Activity::Other); }) == "unknown_sample");
    CHECK(error_code([&] { e.record_label(0, StressLevel::Some, Activity::Other); }) == "already_labeled");
    CHECK(error_code([&] { e.record_label(10, static_cast<StressLevel>(7), Activity::Other); }) == "invalid_label");

    QueryEngine quiet(QueryConfig{.initial_count = 1});
    quiet.observe(make_sample(1, FeatureArray{}));
    CHECK(error_code([&] { quiet.record_label(1, StressLevel::Some, Activity::Other); }) == "not_queried");
}

TEST_CASE("probability is bounded and monotone in neighbour count", "[query][property]") {
    QueryEngine e;
    double prev = 0.0;
    for (std::size_t n = 0; n < 200; ++n) {
        const double p = e.probability_for(n, false);
        CHECK(p >= 0.1);
        CHECK(p <= 1.0);
        CHECK(p >= prev);
        prev = p;
        CHECK(e.probability_for(n, true) == 0.0);
    }
}

TEST_CASE("saturated regions stay silent over long streams", "[query][property]") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        QueryConfig cfg;
        cfg.rng_seed = seed;
        cfg.saturation_threshold = 3;
        QueryEngine e(cfg);
        std::mt19937_64 rng(seed);
        for (std::int64_t i = 0; i < 1500; ++i) {
            const auto x = streams::gaussian_point(rng, 0.5);
            const auto region_was_saturated = [&] {
                if (e.in_initial_phase()) return false;
                const auto it = e.regions().find(region_of(e.normalizer().normalize(x), 1.0));
                return it != e.regions().end() && it->second.saturated;
            }();
            const auto r = e.submit(make_sample(i, x));
            if (r.decision && region_was_saturated) CHECK_FALSE(r.decision->trigger);
            if (r.decision && r.decision->trigger) e.record_label(i, StressLevel::Some, Activity::Sitting);
        }
    }
}

TEST_CASE("seeded determinism of the decision sequence", "[query][property]") {
    auto run = [](std::uint64_t seed) {
        QueryConfig cfg;
        cfg.rng_seed = seed;
        QueryEngine e(cfg);
        std::mt19937_64 rng(77);
        std::vector<QueryDecision> out;
        for (std::int64_t i = 0; i < 600; ++i) {
            const auto r = e.submit(make_sample(i, streams::gaussian_point(rng)));
            if (r.decision) out.push_back(*r.decision);
            if (r.decision && r.decision->trigger) e.record_label(i, StressLevel::Some, Activity::Sitting);
        }
        return out;
    };
    CHECK(run(5) == run(5));
    CHECK_FALSE(run(5) == run(6));
}

TEST_CASE("Bernoulli frequency matches the stated probability", "[query][property]") {
    for (double p : {0.1, 0.37, 0.8}) {
        QueryConfig cfg;
        cfg.initial_count = 0;
        cfg.p_min = p;
        cfg.density_divisor = 1e12;
        cfg.neighborhood_radius = 1e-9;
        cfg.rng_seed = static_cast<std::uint64_t>(p * 1000);
        QueryEngine e(cfg);
        std::size_t hits = 0;
        const std::size_t n = 10000;
        for (std::size_t i = 0; i < n; ++i) {
            FeatureArray x{};
            x[0] = static_cast<double>(i) * 10.0; // every sample in its own cell
            const auto r = e.decide_query(make_sample(static_cast<std::int64_t>(i), x));
            REQUIRE(r.decision.probability == p);
            hits += r.decision.trigger;
        }
        const double freq = static_cast<double>(hits) / n;
        CHECK(std::abs(freq - p) <= 3.0 * std::sqrt(p * (1 - p) / n));
    }
}

TEST_CASE("density targeting on a two-cluster stream", "[query][property]") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto o = streams::run_density_targeting(seed);
        INFO("seed " << seed << " early " << o.early_dense_queries << "/" << o.early_sparse_queries << " late rates "
                     << o.late_dense_rate() << "/" << o.late_sparse_rate());
        CHECK(o.holds());
    }
}

TEST_CASE("snapshot round trip", "[query][snapshot]") {
    SECTION("empty engine") {
        QueryEngine e;
        const auto back = QueryEngine::restore(e.snapshot());
        CHECK(back == e);
        CHECK(back.sample_count() == 0);
        CHECK(back.in_initial_phase());
    }
    SECTION("1000 records, identical decisions afterwards") {
        QueryConfig cfg;
        cfg.rng_seed = 21;
        QueryEngine e(cfg);
        std::mt19937_64 rng(8);
        for (std::int64_t i = 0; i < 1000; ++i) {
            const auto r = e.submit(make_sample(i, streams::gaussian_point(rng, 0.7)));
            if (r.decision && r.decision->trigger && i % 3 == 0) e.record_label(i, StressLevel::ALittleBit, Activity::Lying);
        }
        auto copy = QueryEngine::restore(e.snapshot());
        CHECK(copy == e);
        CHECK(copy.snapshot() == e.snapshot());
        for (std::int64_t i = 1000; i < 1200; ++i) {
            const auto x = streams::gaussian_point(rng, 0.7);
            CHECK(copy.decide_query(make_sample(i, x)).decision == e.decide_query(make_sample(i, x)).decision);
        }
    }
}

TEST_CASE("snapshot rejects newer versions and corruption", "[query][snapshot]") {
    QueryEngine e;
    std::mt19937_64 rng(2);
    for (std::int64_t i = 0; i < 150; ++i) e.submit(make_sample(i, streams::gaussian_point(rng)));
    const auto snap = e.snapshot();

    auto newer = snap;
    newer[4] = static_cast<char>(kSnapshotVersion + 1);
    CHECK(error_code([&] { QueryEngine::restore(newer); }) == "snapshot_version");
    try {
        QueryEngine::restore(newer);
    } catch (const Error& err) {
        CHECK(err.kind() == ErrorKind::Incompatible);
    }

    auto flipped = snap;
    flipped[snap.size() / 2] ^= 0x40;
    CHECK_THROWS_AS(QueryEngine::restore(flipped), Error);
    CHECK(error_code([&] { QueryEngine::restore(snap.substr(0, snap.size() - 5)); }) != "");
    CHECK(error_code([&] { QueryEngine::restore("garbage!"); }) == "snapshot_magic");
}

TEST_CASE("audit line format", "[query]") {
    QueryDecision d;
    d.neighbor_count = 3;
    d.probability = 0.1;
    d.trigger = true;
    d.region_id[0] = -1;
    CHECK(audit_csv_line(42, d) == "42,3,0.1,1,-1:0:0:0:0:0:0:0:0:0:0:0:0");
}
