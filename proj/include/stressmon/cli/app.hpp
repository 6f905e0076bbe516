#pragma once

// Command-line front end: serve, simulate, process, experiment, export.
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage, 3 bad or insufficient data,
// 4 service unavailable. Errors go to stderr as one JSON object.

#include <atomic>
#include <chrono>
#include <csignal>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stressmon/model/experiments.hpp"
#include "stressmon/pipeline.hpp"
#include "stressmon/service/http.hpp"
#include "stressmon/sim/simulator.hpp"

namespace stressmon::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum ExitCode : int { kOk = 0, kRuntime = 1, kUsage = 2, kData = 3, kUnavailable = 4 };

inline int exit_code_for(ErrorKind k) {
    switch (k) {
    case ErrorKind::InvalidArgument: return kUsage;
    case ErrorKind::Validation:
    case ErrorKind::InsufficientData:
    case ErrorKind::Corrupt:
    case ErrorKind::Incompatible:
    case ErrorKind::NotFound: return kData;
    case ErrorKind::Unavailable: return kUnavailable;
    default: return kRuntime;
    }
}

enum class LogLevel { Error, Warn, Info, Debug };

struct Context {
    std::ostream& out;
    std::ostream& err;
    std::vector<std::string> argv;
    LogLevel level = LogLevel::Info;

    void log(LogLevel l, const std::string& msg) const {
        static constexpr const char* names[] = {"error", "warn", "info", "debug"};
        if (l <= level) err << "[" << names[static_cast<int>(l)] << "] " << msg << '\n';
    }
};

inline std::string iso_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// `<output>.manifest.json`: argv, resolved flags, seed and version.
inline void write_manifest(const Context& ctx, const fs::path& output, const std::string& command, json flags,
                           std::optional<std::uint64_t> seed, std::vector<std::string> outputs = {}) {
    if (outputs.empty()) outputs.push_back(output.filename().string());
    json m = {{"command", command},
              {"argv", ctx.argv},
              {"flags", std::move(flags)},
              {"seed", seed ? json(*seed) : json(nullptr)},
              {"version", STRESSMON_VERSION},
              {"outputs", outputs},
              {"written_at", iso_now()}};
    const auto path = fs::path(output.string() + ".manifest.json");
    std::ofstream os(path);
    if (!os) fail(ErrorKind::Io, "manifest_write", "cannot write " + path.string());
    os << m.dump(2) << '\n';
}

inline std::ofstream open_out(const std::string& path) {
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream os(path);
    if (!os) fail(ErrorKind::Io, "output_open", "cannot write " + path);
    return os;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail(ErrorKind::Io, "input_open", "cannot read " + path);
    return is;
}

// ---------------------------------------------------------------------------

struct Global {
    std::string config_path;
    std::string data_dir;
    std::optional<std::uint64_t> seed;
    std::string log_level = "info";
};

inline service::ServiceConfig service_config(const Global& g) {
    auto c = service::load_config(g.config_path);
    if (!g.data_dir.empty()) c.data_dir = g.data_dir;
    return c;
}

inline std::uint64_t require_seed(const Global& g, const std::string& cmd) {
    if (!g.seed) fail(ErrorKind::InvalidArgument, "seed_required", "'" + cmd + "' is stochastic and needs --seed");
    return *g.seed;
}

// --- serve -----------------------------------------------------------------

struct ServeOpts {
    std::string host;
    int port = -1;
    std::string clock;
};

namespace detail {
inline std::atomic<bool> g_stop{false};
inline void on_signal(int) { g_stop = true; }
} // namespace detail

inline int cmd_serve(Context& ctx, const Global& g, const ServeOpts& o) {
    auto cfg = service_config(g);
    if (!o.host.empty()) cfg.listen_host = o.host;
    if (o.port >= 0) cfg.port = o.port;
    if (!o.clock.empty()) cfg.clock = service::detail::clock_from_string(o.clock);
    cfg.validate();
    service::IngestService svc(cfg);
    for (const auto& w : svc.recovery_warnings()) ctx.log(LogLevel::Warn, w);
    service::HttpServer server(svc);
    const int port = server.start(cfg.listen_host, cfg.port);
    write_manifest(ctx, fs::path(cfg.data_dir) / "serve", "serve", service::to_json(cfg), std::nullopt, {});
    ctx.out << "listening on " << cfg.listen_host << ':' << port << '\n' << std::flush;
    ctx.log(LogLevel::Info, "data dir " + cfg.data_dir + ", clock " + service::to_string(cfg.clock));
    detail::g_stop = false;
    std::signal(SIGINT, detail::on_signal);
    std::signal(SIGTERM, detail::on_signal);
    while (!detail::g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    svc.snapshot_all();
    ctx.log(LogLevel::Info, "stopped");
    return kOk;
}

// --- simulate --------------------------------------------------------------

struct SimulateOpts {
    std::string server;
    double days = 0.0;
    std::size_t subjects = 3;
    double accel = 0.0;
    std::int64_t start_ms = 1767225600000;
    std::vector<std::string> profiles;
    std::string report_dir;
    std::string windows_out;
};

inline int cmd_simulate(Context& ctx, const Global& g, const SimulateOpts& o) {
    const auto seed = require_seed(g, "simulate");
    std::vector<sim::SubjectProfile> cohort;
    if (!o.profiles.empty()) {
        for (const auto& p : o.profiles) cohort.push_back(sim::load_profile(p));
    } else {
        if (o.subjects < 1) fail(ErrorKind::InvalidArgument, "subjects", "--subjects must be at least 1");
        cohort = sim::make_cohort(o.subjects, seed, o.days > 0.0 ? o.days : 30.0);
    }
    sim::SimOptions so;
    so.start_ms = o.start_ms;
    so.days = o.days;
    so.seed = seed;
    so.accel = o.accel;

    std::unique_ptr<service::IngestService> local;
    std::vector<sim::SimReport> reports;
    if (!o.server.empty()) {
        sim::HttpEndpoint::from_url(o.server); // validates the URL up front
        ctx.log(LogLevel::Info, "simulating " + std::to_string(cohort.size()) + " subjects against " + o.server);
        reports = sim::run_cohort(cohort, so, [&](const sim::SubjectProfile&) {
            return std::make_unique<sim::HttpEndpoint>(sim::HttpEndpoint::from_url(o.server));
        });
    } else {
        if (g.data_dir.empty())
            fail(ErrorKind::InvalidArgument, "simulate_target", "simulate needs --server or --data-dir");
        auto cfg = service_config(g);
        cfg.clock = service::ClockMode::Client;
        local = std::make_unique<service::IngestService>(cfg);
        ctx.log(LogLevel::Info, "simulating " + std::to_string(cohort.size()) + " subjects in process, data dir " +
                                    cfg.data_dir);
        reports = sim::run_cohort(cohort, so, [&](const sim::SubjectProfile&) {
            return std::make_unique<sim::InProcessEndpoint>(*local);
        });
        local->snapshot_all();
    }

    json flags = {{"server", o.server},     {"days", o.days},         {"subjects", cohort.size()},
                  {"accel", o.accel},       {"start_ms", o.start_ms}, {"profiles", o.profiles},
                  {"data_dir", g.data_dir}, {"report_dir", o.report_dir}};
    std::size_t failed = 0;
    json summary = json::array();
    for (const auto& r : reports) {
        failed += r.failed();
        summary.push_back({{"subject_id", r.subject_id},
                           {"windows", r.windows.size()},
                           {"delivered", r.delivered()},
                           {"failed", r.failed()},
                           {"prompts", r.prompts.size()},
                           {"responses_accepted", r.accepted_responses()}});
        ctx.out << r.subject_id << ": windows " << r.windows.size() << ", delivered " << r.delivered() << ", failed "
                << r.failed() << ", prompts " << r.prompts.size() << ", labels " << r.accepted_responses() << '\n';
    }
    if (!o.report_dir.empty()) {
        fs::create_directories(o.report_dir);
        std::vector<std::string> outputs;
        for (std::size_t i = 0; i < reports.size(); ++i) {
            const auto name = "report_" + reports[i].subject_id + ".csv";
            auto os = open_out((fs::path(o.report_dir) / name).string());
            sim::write_report_csv(os, reports[i]);
            outputs.push_back(name);
            auto ps = open_out((fs::path(o.report_dir) / ("profile_" + reports[i].subject_id + ".json")).string());
            ps << sim::to_json(cohort[i]).dump(2) << '\n';
            outputs.push_back("profile_" + reports[i].subject_id + ".json");
        }
        auto ss = open_out((fs::path(o.report_dir) / "summary.json").string());
        ss << summary.dump(2) << '\n';
        outputs.push_back("summary.json");
        write_manifest(ctx, fs::path(o.report_dir) / "simulate", "simulate", flags, seed, outputs);
    }
    if (!o.windows_out.empty()) {
        auto os = open_out(o.windows_out);
        for (const auto& p : cohort)
            for (const auto& w : sim::plan_windows(p, so)) signal::write_window_csv(os, sim::render_window(p, w, so));
        write_manifest(ctx, o.windows_out, "simulate", flags, seed);
    }
    if (failed > 0) {
        ctx.log(LogLevel::Error, std::to_string(failed) + " windows could not be delivered");
        return kUnavailable;
    }
    return kOk;
}

// --- process ---------------------------------------------------------------

struct ProcessOpts {
    std::string in, out;
};

inline int cmd_process(Context& ctx, const ProcessOpts& o) {
    auto is = open_in(o.in);
    const auto windows = signal::read_window_csv(is);
    const Pipeline pipe;
    std::vector<model::FeatureRow> rows;
    std::map<std::string, std::size_t> rejects;
    for (const auto& w : windows) {
        const auto r = pipe.run(w);
        if (!r.usable()) {
            ++rejects[r.reject_reason];
            continue;
        }
        model::FeatureRow row;
        row.subject_id = w.subject_id;
        row.start_time_ms = w.start_time_ms;
        row.features = *r.features;
        rows.push_back(std::move(row));
    }
    auto os = open_out(o.out);
    model::write_csv(os, rows, false);
    os.close();
    write_manifest(ctx, o.out, "process", {{"in", o.in}, {"out", o.out}}, std::nullopt);
    ctx.out << windows.size() << " windows, " << rows.size() << " usable\n";
    for (const auto& [reason, n] : rejects) ctx.log(LogLevel::Info, "rejected " + std::to_string(n) + ": " + reason);
    return kOk;
}

// --- experiment ------------------------------------------------------------

struct ExperimentOpts {
    std::string data;
    std::string task;
    std::string model = "rf";
    std::size_t k = 5;
    std::size_t knn_k = 5;
    std::size_t trees = 100;
    std::size_t max_features = 3;
    std::string subject;
    std::size_t test_size = 100;
    std::size_t repeats = 100;
    std::vector<std::size_t> sizes;
    std::string out;
};

inline model::ClassifierSpec classifier_spec(const ExperimentOpts& o, std::uint64_t seed) {
    model::ClassifierSpec s;
    s.kind = model::model_kind_from_string(o.model);
    s.knn_k = o.knn_k;
    s.n_trees = o.trees;
    s.max_features = o.max_features;
    s.seed = seed;
    return s;
}

inline model::LabeledDataset load_labeled(const std::string& path) {
    auto is = open_in(path);
    auto rows = model::read_csv(is);
    model::LabeledDataset out;
    for (auto& r : rows)
        if (r.labeled()) out.push_back(std::move(r));
    if (out.empty()) fail(ErrorKind::InsufficientData, "no_labels", path + " has no labeled rows");
    return out;
}

inline json experiment_flags(const ExperimentOpts& o, const std::string& which) {
    return {{"experiment", which}, {"data", o.data},       {"task", o.task},         {"model", o.model},
            {"k", o.k},            {"knn_k", o.knn_k},     {"trees", o.trees},       {"max_features", o.max_features},
            {"subject", o.subject}, {"test_size", o.test_size}, {"repeats", o.repeats}, {"sizes", o.sizes}};
}

inline void emit_csv(Context& ctx, const ExperimentOpts& o, const std::string& which, std::uint64_t seed,
                     const std::string& csv) {
    if (o.out.empty()) {
        ctx.out << '\n' << csv;
        return;
    }
    auto os = open_out(o.out);
    os << csv;
    os.close();
    write_manifest(ctx, o.out, "experiment " + which, experiment_flags(o, which), seed);
}

inline int cmd_crossval(Context& ctx, const Global& g, const ExperimentOpts& o) {
    const auto seed = require_seed(g, "experiment crossval");
    const auto rows = load_labeled(o.data);
    const auto t = model::task_from_string(o.task.empty() ? "T3" : o.task);
    const auto rep = model::run_crossval(rows, t, classifier_spec(o, seed), {o.k, seed});
    for (const auto& w : rep.warnings) ctx.log(LogLevel::Warn, w);
    ctx.out << rep.table();
    emit_csv(ctx, o, "crossval", seed, rep.csv());
    return kOk;
}

inline int cmd_personalization(Context& ctx, const Global& g, const ExperimentOpts& o) {
    const auto seed = require_seed(g, "experiment personalization");
    const auto rows = load_labeled(o.data);
    const auto t = model::task_from_string(o.task.empty() ? "T4" : o.task);
    const auto data = model::map_labels(rows, model::task(t));
    std::vector<std::string> held;
    if (!o.subject.empty()) {
        held.push_back(o.subject);
    } else {
        std::map<std::string, std::size_t> per;
        for (const auto& s : data.subject) ++per[s];
        for (const auto& [s, n] : per)
            if (n >= model::kMinPersonalRows) held.push_back(s);
        if (held.empty())
            fail(ErrorKind::InsufficientData, "personal_rows", "no subject has enough labeled rows to hold out");
    }
    const auto spec = classifier_spec(o, seed);
    std::ostringstream csv;
    csv << "task,model,seed,subject,test_rows,own_train_rows,before,after\n";
    ctx.out << "task   model  subject      test  before  after\n";
    for (const auto& s : held) {
        const auto r = model::run_personalization(data, s, spec, seed);
        char line[160];
        std::snprintf(line, sizeof line, "%-6s %-6s %-12s %4zu  %.2f    %.2f\n", model::to_string(t).c_str(),
                      o.model.c_str(), s.c_str(), r.test_rows, r.before, r.after);
        ctx.out << line;
        csv << model::to_string(t) << ',' << o.model << ',' << seed << ',' << s << ',' << r.test_rows << ','
            << r.own_train_rows << ',' << util::format_double(r.before) << ',' << util::format_double(r.after) << '\n';
    }
    emit_csv(ctx, o, "personalization", seed, csv.str());
    return kOk;
}

inline int cmd_learning_curve(Context& ctx, const Global& g, const ExperimentOpts& o) {
    const auto seed = require_seed(g, "experiment learning-curve");
    const auto rows = load_labeled(o.data);
    const auto t = model::task_from_string(o.task.empty() ? "T4" : o.task);
    auto data = model::map_labels(rows, model::task(t));
    if (!o.subject.empty()) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < data.size(); ++i)
            if (data.subject[i] == o.subject) idx.push_back(i);
        if (idx.empty()) fail(ErrorKind::NotFound, "unknown_subject", "no labeled rows for subject " + o.subject);
        data = data.subset(idx);
    }
    model::LearningCurveConfig cfg;
    cfg.test_size = o.test_size;
    cfg.repeats = o.repeats;
    cfg.seed = seed;
    if (!o.sizes.empty()) cfg.train_sizes = o.sizes;
    const auto curve = model::run_learning_curve(data, cfg, classifier_spec(o, seed));
    std::ostringstream csv;
    csv << "task,model,seed,train_size,mean_f1,std_f1\n";
    ctx.out << "train_size  macro-F1\n";
    for (const auto& p : curve) {
        char line[96];
        std::snprintf(line, sizeof line, "%10zu  %s\n", p.train_size, model::format_pm({p.mean, p.std}).c_str());
        ctx.out << line;
        csv << model::to_string(t) << ',' << o.model << ',' << seed << ',' << p.train_size << ','
            << util::format_double(p.mean) << ',' << util::format_double(p.std) << '\n';
    }
    emit_csv(ctx, o, "learning-curve", seed, csv.str());
    return kOk;
}

// --- export ----------------------------------------------------------------

struct ExportOpts {
    std::string server;
    std::string kind = "labeled";
    std::string subject;
    std::string out;
};

inline int cmd_export(Context& ctx, const Global& g, const ExportOpts& o) {
    std::string csv;
    if (!o.server.empty()) {
        auto url = o.server;
        if (url.rfind("http://", 0) != 0) url = "http://" + url;
        httplib::Client client(url);
        client.set_connection_timeout(10, 0);
        httplib::Params params{{"kind", o.kind}};
        if (!o.subject.empty()) params.emplace("subject", o.subject);
        const auto res = client.Get("/api/v1/dataset/export", params, httplib::Headers{});
        if (!res) fail(ErrorKind::Unavailable, "unreachable", "server unreachable: " + httplib::to_string(res.error()));
        if (res->status != 200) fail(ErrorKind::Validation, "export_failed", res->body);
        csv = res->body;
    } else {
        if (g.data_dir.empty()) fail(ErrorKind::InvalidArgument, "export_source", "export needs --server or --data-dir");
        if (!fs::exists(g.data_dir)) fail(ErrorKind::NotFound, "data_dir", "no data directory " + g.data_dir);
        service::IngestService svc(service_config(g));
        for (const auto& w : svc.recovery_warnings()) ctx.log(LogLevel::Warn, w);
        std::optional<std::string> subject;
        if (!o.subject.empty()) {
            if (!svc.has_subject(o.subject)) fail(ErrorKind::NotFound, "unknown_subject", "no subject " + o.subject);
            subject = o.subject;
        }
        csv = svc.export_csv(subject, o.kind == "labeled");
    }
    if (o.out.empty()) {
        ctx.out << csv;
        return kOk;
    }
    auto os = open_out(o.out);
    os << csv;
    os.close();
    write_manifest(ctx, o.out, "export",
                   {{"server", o.server}, {"data_dir", g.data_dir}, {"kind", o.kind}, {"subject", o.subject}},
                   std::nullopt);
    return kOk;
}

// ---------------------------------------------------------------------------

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    Context ctx{out, err, args};
    CLI::App app{"Stress monitoring toolkit: ingest server, device simulator, offline pipeline, experiments.",
                 "stressmon"};
    app.set_version_flag("--version", std::string(STRESSMON_VERSION));
    app.require_subcommand(1, 1);
    app.fallthrough();

    Global g;
    app.add_option("--config", g.config_path, "Service config file (JSON)");
    app.add_option("--data-dir", g.data_dir, "Service data directory");
    app.add_option("--seed", g.seed, "Seed; required by simulate and experiment");
    app.add_option("--log-level", g.log_level, "error, warn, info or debug")
        ->check(CLI::IsMember({"error", "warn", "info", "debug"}));

    ServeOpts so;
    auto* serve = app.add_subcommand("serve", "Run the HTTP ingest service until interrupted");
    serve->add_option("--host", so.host, "Listen address (default from config)");
    serve->add_option("--port", so.port, "Listen port; 0 picks a free one")->check(CLI::Range(0, 65535));
    serve->add_option("--clock", so.clock, "wall or client")->check(CLI::IsMember({"wall", "client"}));

    SimulateOpts sim_o;
    auto* simulate = app.add_subcommand("simulate", "Drive synthetic subjects against a server or a local data dir");
    simulate->add_option("--server", sim_o.server, "Server as host:port; without it the service runs in process");
    simulate->add_option("--days", sim_o.days, "Simulated days (default: each profile's duration)")
        ->check(CLI::PositiveNumber);
    simulate->add_option("--subjects", sim_o.subjects, "Generated cohort size")->check(CLI::PositiveNumber);
    simulate->add_option("--accel", sim_o.accel, "Simulated seconds per wall second; 0 runs unpaced")
        ->check(CLI::NonNegativeNumber);
    simulate->add_option("--start-ms", sim_o.start_ms, "Simulation start, Unix ms");
    simulate->add_option("--profile", sim_o.profiles, "Profile JSON file (repeatable); replaces the generated cohort")
        ->check(CLI::ExistingFile);
    simulate->add_option("--report-dir", sim_o.report_dir, "Write per-subject report CSVs and profiles here");
    simulate->add_option("--windows-out", sim_o.windows_out, "Also write every generated window to this CSV");

    ProcessOpts po;
    auto* process = app.add_subcommand("process", "Window CSV in, feature CSV out (one row per usable window)");
    process->add_option("--in", po.in, "Window CSV")->required()->check(CLI::ExistingFile);
    process->add_option("--out", po.out, "Feature CSV")->required();

    ExperimentOpts eo;
    auto* experiment = app.add_subcommand("experiment", "Model evaluation on a labeled feature CSV");
    experiment->require_subcommand(1, 1);
    auto add_common = [&](CLI::App* c, const char* task_default) {
        c->add_option("--data", eo.data, "Labeled feature CSV")->required()->check(CLI::ExistingFile);
        c->add_option("--task", eo.task, std::string("T1, T2, T3 or T4 (default ") + task_default + ")")
            ->check(CLI::IsMember({"T1", "T2", "T3", "T4"}));
        c->add_option("--model", eo.model, "rf or knn")->check(CLI::IsMember({"rf", "knn"}));
        c->add_option("--knn-k", eo.knn_k, "Neighbours for knn")->check(CLI::PositiveNumber);
        c->add_option("--trees", eo.trees, "Trees for rf")->check(CLI::PositiveNumber);
        c->add_option("--max-features", eo.max_features, "Features tried per split for rf")->check(CLI::PositiveNumber);
        c->add_option("--out", eo.out, "Write the CSV report here instead of stdout");
    };
    auto* crossval = experiment->add_subcommand("crossval", "Stratified K-fold macro-F1");
    add_common(crossval, "T3");
    crossval->add_option("--k", eo.k, "Folds")->check(CLI::Range(2, 1000));
    auto* personal = experiment->add_subcommand("personalization", "Held-out subject before/after adding own data");
    add_common(personal, "T4");
    personal->add_option("--subject", eo.subject, "Held-out subject (default: every subject with enough rows)");
    auto* curve = experiment->add_subcommand("learning-curve", "Macro-F1 against training-set size");
    add_common(curve, "T4");
    curve->add_option("--subject", eo.subject, "Restrict to one subject's rows");
    curve->add_option("--test-size", eo.test_size, "Held-out rows per repeat")->check(CLI::PositiveNumber);
    curve->add_option("--repeats", eo.repeats, "Repeats")->check(CLI::PositiveNumber);
    curve->add_option("--sizes", eo.sizes, "Training sizes (ascending)")->delimiter(',');

    ExportOpts xo;
    auto* exp = app.add_subcommand("export", "Dataset export from a server or a local data dir");
    exp->add_option("--server", xo.server, "Server as host:port");
    exp->add_option("--kind", xo.kind, "labeled or unlabeled")->check(CLI::IsMember({"labeled", "unlabeled"}));
    exp->add_option("--subject", xo.subject, "Only this subject");
    exp->add_option("--out", xo.out, "Output CSV (default stdout)");

    std::vector<const char*> cargv;
    cargv.push_back("stressmon");
    for (const auto& a : args) cargv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(cargv.size()), cargv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, err, err);
        return kUsage;
    }
    static constexpr const char* levels[] = {"error", "warn", "info", "debug"};
    for (int i = 0; i < 4; ++i)
        if (g.log_level == levels[i]) ctx.level = static_cast<LogLevel>(i);

    try {
        if (serve->parsed()) return cmd_serve(ctx, g, so);
        if (simulate->parsed()) return cmd_simulate(ctx, g, sim_o);
        if (process->parsed()) return cmd_process(ctx, po);
        if (crossval->parsed()) return cmd_crossval(ctx, g, eo);
        if (personal->parsed()) return cmd_personalization(ctx, g, eo);
        if (curve->parsed()) return cmd_learning_curve(ctx, g, eo);
        if (exp->parsed()) return cmd_export(ctx, g, xo);
    } catch (const Error& e) {
        err << service::error_body(e.kind(), e.code(), e.what()).dump() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << service::error_body(ErrorKind::Io, "runtime", e.what()).dump() << '\n';
        return kRuntime;
    }
    return kUsage;
}

inline int run(int argc, char** argv) { return run(std::vector<std::string>(argv + 1, argv + argc)); }

} // namespace stressmon::cli
