#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "model_benchmarks.hpp"
#include "service_fixtures.hpp"
#include "stressmon/cli/app.hpp"

using namespace stressmon;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Labeled feature CSV from the two-Gaussian benchmark: class 1 -> "a lot",
/// class 0 -> "not at all".
void write_labeled(const fs::path& path, std::uint64_t seed, std::size_t n = 200) {
    const auto d = bench::two_gaussian(seed, n);
    std::vector<model::FeatureRow> rows;
    for (std::size_t i = 0; i < d.size(); ++i) {
        model::FeatureRow r;
        r.subject_id = (i / 2) % 2 ? "S01" : "S02";
        r.start_time_ms = fixtures::kT0 + static_cast<std::int64_t>(i) * fixtures::kCadenceMs;
        r.features = hrv::FeatureVector::from_array(d.x[i]);
        r.stress_level = d.y[i] ? StressLevel::ALot : StressLevel::NotAtAll;
        r.activity = Activity::Sitting;
        rows.push_back(r);
    }
    std::ofstream os(path);
    model::write_csv(os, rows, true);
}

} // namespace

TEST_CASE("usage errors exit with 2", "[cli]") {
    CHECK(run({"--help"}).code == 0);
    CHECK(run({"experiment", "crossval", "--help"}).code == 0);
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"process", "--in"}).code == 2);
    CHECK(run({"export", "--kind", "everything"}).code == 2);

    const auto r = run({"simulate", "--days", "1"});
    CHECK(r.code == 2);
    CHECK(r.err.find("seed_required") != std::string::npos);
}

TEST_CASE("simulate then process: one feature row per usable window", "[cli]") {
    fixtures::TempDir dir;
    const auto data = (dir.path() / "data").string(), rep = (dir.path() / "rep").string();
    const auto windows = (dir.path() / "w.csv").string(), feats = (dir.path() / "f.csv").string();
    const auto s = run({"--seed", "4", "--data-dir", data, "simulate", "--days", "0.5", "--subjects", "2",
                        "--report-dir", rep, "--windows-out", windows});
    INFO(s.err);
    REQUIRE(s.code == 0);
    CHECK(fs::exists(fs::path(rep) / "report_S01.csv"));
    CHECK(fs::exists(fs::path(rep) / "report_S02.csv"));
    const auto manifest = json::parse(slurp(fs::path(rep) / "simulate.manifest.json"));
    CHECK(manifest["seed"] == 4);
    CHECK(manifest["command"] == "simulate");

    const auto p = run({"process", "--in", windows, "--out", feats});
    REQUIRE(p.code == 0);
    std::ifstream fin(feats);
    const auto rows = model::read_csv(fin);
    std::ifstream win(windows);
    const auto ws = signal::read_window_csv(win);
    REQUIRE(ws.size() == 96);
    const Pipeline pipe;
    std::size_t usable = 0;
    for (const auto& w : ws) usable += pipe.run(w).usable();
    CHECK(rows.size() == usable);
    CHECK(fs::exists(feats + ".manifest.json"));

    // The in-process service stored the same windows.
    const auto u = run({"--data-dir", data, "export", "--kind", "unlabeled"});
    REQUIRE(u.code == 0);
    std::istringstream uin(u.out);
    CHECK(model::read_csv(uin).size() == usable);
    CHECK(run({"--data-dir", data, "export", "--subject", "S99"}).code == 3);
}

TEST_CASE("experiments are deterministic given flags and seed", "[cli]") {
    fixtures::TempDir dir;
    const auto data = (dir.path() / "lab.csv").string();
    write_labeled(data, 5);
    const std::vector<std::string> args = {"--seed", "7",     "experiment", "crossval", "--task", "T3",
                                           "--model", "rf",   "--k",        "5",        "--data", data};
    const auto a = run(args), b = run(args);
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(a.out.find("T3") != std::string::npos);
    CHECK(a.out.find("task,model,k,seed,fold,macro_f1") != std::string::npos);

    auto with_out = args;
    with_out.insert(with_out.end(), {"--out", (dir.path() / "cv.csv").string()});
    REQUIRE(run(with_out).code == 0);
    CHECK(slurp(dir.path() / "cv.csv") == a.out.substr(a.out.find("task,model,k,seed")));
    CHECK(fs::exists(dir.path() / "cv.csv.manifest.json"));

    const auto knn = run({"--seed", "7", "experiment", "crossval", "--model", "knn", "--knn-k", "3", "--data", data});
    CHECK(knn.code == 0);
    const auto pers = run({"--seed", "7", "experiment", "personalization", "--task", "T3", "--data", data});
    CHECK(pers.code == 0);
    CHECK(pers.out.find("S01") != std::string::npos);
    const auto curve = run({"--seed", "7", "experiment", "learning-curve", "--task", "T3", "--data", data,
                            "--sizes", "20,50,90", "--repeats", "3", "--test-size", "50"});
    CHECK(curve.code == 0);
    CHECK(curve.out.find("train_size,mean_f1") != std::string::npos);
}

TEST_CASE("data problems exit with 3", "[cli]") {
    fixtures::TempDir dir;
    const auto data = (dir.path() / "lab.csv").string();
    write_labeled(data, 5, 60);
    const auto r = run({"--seed", "1", "experiment", "learning-curve", "--task", "T3", "--data", data});
    CHECK(r.code == 3);
    CHECK(json::parse(r.err)["error"]["code"] == "curve_rows");

    std::ofstream(dir.path() / "junk.csv") << "not,a,feature,file\n1,2,3,4\n";
    CHECK(run({"--seed", "1", "experiment", "crossval", "--data", (dir.path() / "junk.csv").string()}).code == 3);
}

TEST_CASE("unreachable server exits with 4", "[cli]") {
    const auto r = run({"--seed", "1", "simulate", "--server", "127.0.0.1:1", "--days", "0.05", "--subjects", "1"});
    CHECK(r.code == 4);
    CHECK(run({"export", "--server", "127.0.0.1:1"}).code == 4);
}

TEST_CASE("simulate against a running server fills its stats", "[cli][http]") {
    fixtures::TempDir dir;
    auto cfg = fixtures::test_config(dir.str(), 20);
    service::IngestService svc(cfg);
    service::HttpServer server(svc);
    const int port = server.start("127.0.0.1", 0);
    const auto r = run({"--seed", "1", "simulate", "--server", "127.0.0.1:" + std::to_string(port), "--days", "1",
                        "--subjects", "3", "--accel", "0"});
    INFO(r.err);
    REQUIRE(r.code == 0);
    httplib::Client client("127.0.0.1", port);
    const auto res = client.Get("/api/v1/stats");
    REQUIRE(res);
    const auto stats = json::parse(res->body);
    CHECK(stats["subject_count"] == 3);
    for (const auto& s : stats["subjects"]) CHECK(s["windows"] == 96);

    const auto e = run({"export", "--server", "127.0.0.1:" + std::to_string(port), "--kind", "labeled"});
    CHECK(e.code == 0);
    CHECK(e.out == svc.export_csv(std::nullopt, true));
    server.stop();
}
