#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <sstream>

#include "service_fixtures.hpp"
#include "stressmon/pipeline.hpp"
#include "stressmon/service/http.hpp"
#include "stressmon/sim/simulator.hpp"

using namespace stressmon;
using namespace stressmon::sim;
using fixtures::kT0;

namespace {

constexpr std::int64_t kHourMs = 3600 * 1000;

SubjectProfile calm_profile(double days = 1.0) {
    SubjectProfile p;
    p.subject_id = "S01";
    p.baseline_hr_bpm = 68.0;
    p.baseline_rmssd_ms = 40.0;
    p.duration_days = days;
    p.adherence_prob = 1.0;
    p.response_delay = {DelayKind::Fixed, 1.0};
    return p;
}

SimOptions opts(std::uint64_t seed = 3) {
    SimOptions o;
    o.start_ms = kT0;
    o.seed = seed;
    return o;
}

/// Prompts on every window; can refuse a number of sends first.
class FakeEndpoint : public Endpoint {
public:
    int refuse_next = 0;
    std::int64_t expiry_ms = 15 * 60 * 1000;
    std::vector<std::pair<std::int64_t, std::int64_t>> sent; // (start, now)
    std::vector<service::LabelResponse> responses;

    DeliveryAck send(const signal::RawWindow& w, std::int64_t now_ms) override {
        if (refuse_next > 0) {
            --refuse_next;
            fail(ErrorKind::Unavailable, "down", "fake outage");
        }
        sent.emplace_back(w.start_time_ms, now_ms);
        const auto id = w.subject_id + "-" + std::to_string(w.start_time_ms);
        open_[id] = {id, w.start_time_ms, now_ms, now_ms + expiry_ms};
        DeliveryAck a;
        a.usable = true;
        a.prompt_id = id;
        return a;
    }

    std::vector<PromptInfo> pending(const std::string&, std::int64_t now_ms) override {
        std::vector<PromptInfo> out;
        for (const auto& [id, p] : open_)
            if (p.expires_at_ms >= now_ms) out.push_back(p);
        return out;
    }

    void respond(const service::LabelResponse& r) override {
        const auto& p = open_.at(r.prompt_id);
        if (r.responded_at_ms > p.expires_at_ms) fail(ErrorKind::Expired, "prompt_expired", "late");
        responses.push_back(r);
        open_.erase(r.prompt_id);
    }

private:
    std::map<std::string, PromptInfo> open_;
};

std::string csv_of(const SimReport& r) {
    std::ostringstream os;
    write_report_csv(os, r);
    return os.str();
}

} // namespace

TEST_CASE("one window every 15 minutes", "[sim]") {
    const auto plan = plan_windows(calm_profile(1.0), opts());
    REQUIRE(plan.size() == 96);
    for (std::size_t k = 0; k < plan.size(); ++k) {
        CHECK(plan[k].start_ms == kT0 + static_cast<std::int64_t>(k) * kWindowCadenceMs);
        CHECK(plan[k].emitted_at_ms == plan[k].start_ms + 120000);
        CHECK(plan[k].deliver_at_ms == plan[k].emitted_at_ms);
    }
    FakeEndpoint ep;
    SubjectSimulator sim(calm_profile(1.0), opts(), ep);
    sim.run();
    CHECK(ep.sent.size() == 96);
    CHECK(sim.report().delivered() == 96);
}

TEST_CASE("dropout windows arrive late with their original start times", "[sim]") {
    auto p = calm_profile(1.0);
    p.dropouts = {{600.0, 720.0}}; // 10:00 to 12:00
    p.adherence_prob = 0.0;
    fixtures::TempDir dir;
    service::IngestService svc(fixtures::test_config(dir.str()));
    InProcessEndpoint ep(svc);
    SubjectSimulator sim(p, opts(), ep);
    sim.run();

    const auto noon = kT0 + 12 * kHourMs;
    std::vector<std::int64_t> late;
    for (const auto& w : sim.report().windows) {
        REQUIRE(w.delivered_at_ms);
        if (*w.delivered_at_ms == noon && w.plan.start_ms < noon) late.push_back(w.plan.start_ms);
        else CHECK(*w.delivered_at_ms == w.plan.emitted_at_ms);
    }
    REQUIRE(late.size() == 8);
    for (std::size_t i = 0; i < late.size(); ++i)
        CHECK(late[i] == kT0 + 10 * kHourMs + static_cast<std::int64_t>(i) * kWindowCadenceMs);
    for (auto t : late) {
        const auto e = svc.window("S01", t);
        REQUIRE(e);
        CHECK(e->received_at_ms == noon);
    }
    const auto csv = csv_of(sim.report());
    CHECK(csv.find(std::to_string(kT0 + 10 * kHourMs) + ",0," + std::to_string(kT0 + 10 * kHourMs + 120000) + "," +
                   std::to_string(noon)) != std::string::npos);
}

TEST_CASE("'a lot' segment raises heart rate by the configured effect", "[sim][physiology]") {
    auto p = calm_profile(1.0);
    p.stress_schedule = {{0.0, StressLevel::NotAtAll}, {360.0, StressLevel::ALot}, {720.0, StressLevel::NotAtAll}};
    const Pipeline pipe;
    std::size_t checked = 0;
    for (const auto& w : plan_windows(p, opts())) {
        if (w.truth != StressLevel::ALot) continue;
        const auto r = pipe.run(render_window(p, w, opts()));
        REQUIRE(r.usable());
        CHECK(r.features->bpm == Catch::Approx(p.baseline_hr_bpm + 20.0).margin(3.0));
        ++checked;
    }
    CHECK(checked == 24);
}

TEST_CASE("stress moves heart rate up and RMSSD down", "[sim][physiology]") {
    const Pipeline pipe;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto cohort = make_cohort(3, seed, 1.0);
        for (auto& p : cohort) {
            std::map<int, std::pair<double, double>> sums; // level -> (bpm, rmssd)
            std::map<int, int> counts;
            for (int level : {0, 4}) {
                p.stress_schedule = {{0.0, static_cast<StressLevel>(level)}};
                auto o = opts(seed);
                o.days = 0.25;
                for (const auto& w : plan_windows(p, o)) {
                    const auto r = pipe.run(render_window(p, w, o));
                    if (!r.usable()) continue;
                    sums[level].first += r.features->bpm;
                    sums[level].second += r.features->rmssd_ms;
                    ++counts[level];
                }
            }
            REQUIRE(counts[0] > 20);
            REQUIRE(counts[4] > 20);
            CHECK(sums[4].first / counts[4] > sums[0].first / counts[0] + 15.0);
            CHECK(sums[4].second / counts[4] < sums[0].second / counts[0]);
        }
    }
}

TEST_CASE("adherence probability is honoured", "[sim][responder]") {
    auto p = calm_profile(5.0);
    p.adherence_prob = 0.5;
    p.response_delay = {DelayKind::Fixed, 0.0};
    FakeEndpoint ep;
    auto o = opts(11);
    o.days = 400.0 / 96.0 + 1e-6;
    SubjectSimulator sim(p, o, ep);
    sim.run();
    const auto& prompts = sim.report().prompts;
    REQUIRE(prompts.size() == 401);
    const auto answered = std::count_if(prompts.begin(), prompts.end(), [](const PromptReport& r) { return r.answered; });
    CHECK(static_cast<double>(answered) / prompts.size() == Catch::Approx(0.5).margin(0.08));
    CHECK(ep.responses.size() == static_cast<std::size_t>(answered));
}

TEST_CASE("label noise flips to a different level", "[sim][responder]") {
    auto p = calm_profile(3.0);
    p.label_noise_prob = 1.0;
    p.response_delay = {DelayKind::Fixed, 0.0};
    FakeEndpoint ep;
    SubjectSimulator sim(p, opts(), ep);
    sim.run();
    std::map<int, int> seen;
    for (const auto& r : sim.report().prompts) {
        CHECK(r.reported != r.truth);
        ++seen[static_cast<int>(r.reported)];
    }
    CHECK(seen.size() == 4);
}

TEST_CASE("answers later than the expiry never become labels", "[sim][responder]") {
    auto p = calm_profile(1.0);
    p.response_delay = {DelayKind::Fixed, 20.0};
    fixtures::TempDir dir;
    auto cfg = fixtures::test_config(dir.str(), 5);
    cfg.query.p_min = 1.0;
    service::IngestService svc(cfg);
    InProcessEndpoint ep(svc);
    SubjectSimulator sim(p, opts(), ep);
    sim.run();
    REQUIRE(sim.report().prompts.size() > 50);
    for (const auto& r : sim.report().prompts) CHECK(r.outcome == "expired");
    CHECK(svc.export_rows("S01", true).empty());
    CHECK(svc.stats("S01", kT0 + 2 * 86400000).answered == 0);
}

TEST_CASE("prompt responses reach the labeled export", "[sim][responder]") {
    auto p = calm_profile(1.0);
    fixtures::TempDir dir;
    auto cfg = fixtures::test_config(dir.str(), 5);
    cfg.query.p_min = 1.0;
    service::IngestService svc(cfg);
    InProcessEndpoint ep(svc);
    SubjectSimulator sim(p, opts(), ep);
    sim.run();
    const auto rows = svc.export_rows("S01", true);
    REQUIRE(rows.size() == sim.report().accepted_responses());
    REQUIRE_FALSE(rows.empty());
    std::map<std::int64_t, StressLevel> reported;
    for (const auto& r : sim.report().prompts)
        if (r.accepted) reported[r.sample_id] = r.reported;
    for (const auto& row : rows) CHECK(row.stress_level == reported.at(row.start_time_ms));
}

TEST_CASE("outages are retried, then given up", "[sim][delivery]") {
    SECTION("short outage") {
        FakeEndpoint ep;
        ep.refuse_next = 2;
        SubjectSimulator sim(calm_profile(0.25), opts(), ep);
        sim.run();
        CHECK(sim.report().delivered() == 24);
        CHECK(sim.report().failed() == 0);
        CHECK(sim.report().windows[0].attempts == 3);
        CHECK(*sim.report().windows[0].delivered_at_ms == kT0 + 120000 + 2 * 5 * 60000);
    }
    SECTION("service never comes back") {
        FakeEndpoint ep;
        ep.refuse_next = 1 << 30;
        SubjectSimulator sim(calm_profile(0.25), opts(), ep);
        sim.run();
        CHECK(sim.report().delivered() == 0);
        CHECK(sim.report().failed() == 24);
    }
    SECTION("unreachable HTTP server reports unavailable") {
        HttpEndpoint ep("127.0.0.1", 1, 1);
        try {
            ep.send(fixtures::make_window("S01", kT0, 1), kT0);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Unavailable);
        }
    }
}

TEST_CASE("cohorts are deterministic and spread out", "[sim][cohort]") {
    const auto a = make_cohort(5, 42), b = make_cohort(5, 42), c = make_cohort(5, 43);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    const auto [lo, hi] = std::minmax_element(a.begin(), a.end(), [](const auto& x, const auto& y) {
        return x.baseline_hr_bpm < y.baseline_hr_bpm;
    });
    CHECK(hi->baseline_hr_bpm - lo->baseline_hr_bpm >= 20.0);
    CHECK(std::count_if(a.begin(), a.end(), [](const auto& p) { return p.high_volume; }) == 1);
    for (const auto& p : a) CHECK(p.duration_days >= (p.high_volume ? 90.0 : 30.0));

    auto o = opts(9);
    o.days = 1.0;
    FakeEndpoint e1, e2;
    SubjectSimulator s1(a[1], o, e1), s2(a[1], o, e2);
    s1.run();
    s2.run();
    CHECK(csv_of(s1.report()) == csv_of(s2.report()));
    REQUIRE(e1.responses.size() == e2.responses.size());
    for (std::size_t i = 0; i < e1.responses.size(); ++i) {
        CHECK(e1.responses[i].prompt_id == e2.responses[i].prompt_id);
        CHECK(e1.responses[i].stress_level == e2.responses[i].stress_level);
        CHECK(e1.responses[i].responded_at_ms == e2.responses[i].responded_at_ms);
    }
}

TEST_CASE("profile JSON round trip and validation", "[sim][profile]") {
    const auto cohort = make_cohort(2, 5);
    for (const auto& p : cohort) CHECK(profile_from_json(json::parse(to_json(p).dump())) == p);

    const auto minimal = profile_from_json(json::parse(R"({"subject_id": "X1"})"));
    CHECK(minimal.stress_effect.hr_delta_bpm[3] == 20.0);
    CHECK(minimal.stress_effect.rmssd_multiplier[4] == 0.55);

    auto bad = to_json(calm_profile());
    bad["baseline_hr_bpm"] = 195.0;
    CHECK_THROWS_AS(profile_from_json(bad), Error);
    bad = to_json(calm_profile());
    bad["adherence_prob"] = 1.5;
    CHECK_THROWS_AS(profile_from_json(bad), Error);
    bad = to_json(calm_profile());
    bad["stress_schedule"] = json::array({{{"start_min", 0}, {"level", 7}}});
    CHECK_THROWS_AS(profile_from_json(bad), Error);
}

TEST_CASE("simulation over HTTP matches the in-process run", "[sim][http]") {
    auto p = calm_profile(0.5);
    p.adherence_prob = 0.7;
    auto make_cfg = [](const std::string& d) {
        auto c = fixtures::test_config(d, 5);
        c.query.p_min = 0.5;
        return c;
    };

    fixtures::TempDir d1, d2;
    service::IngestService local(make_cfg(d1.str()));
    InProcessEndpoint in_proc(local);
    SubjectSimulator a(p, opts(), in_proc);
    a.run();

    service::IngestService remote(make_cfg(d2.str()));
    service::HttpServer server(remote);
    const int port = server.start("127.0.0.1", 0);
    HttpEndpoint http("127.0.0.1", port);
    SubjectSimulator b(p, opts(), http);
    b.run();
    server.stop();

    CHECK(csv_of(a.report()) == csv_of(b.report()));
    CHECK(a.report().accepted_responses() == b.report().accepted_responses());
    CHECK(local.export_csv(std::nullopt, true) == remote.export_csv(std::nullopt, true));
    CHECK(local.export_csv(std::nullopt, false) == remote.export_csv(std::nullopt, false));
}
