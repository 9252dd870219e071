// assist: command-line front end for the protocol monitor.
//
//   assist validate FILE
//   assist session --scenario FILE|ID --trainee ID [--testing] [--script FILE] [--summary-json]
//   assist simulate --plan FILE --out DIR
//   assist report --data DIR [--grouping cohort|pooled] [--format json|text|csv]
//   assist serve [--port N] [--data DIR] [--scenario FILE]...

#include <signal.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "assist/codec.hpp"
#include "assist/error.hpp"
#include "assist/report.hpp"
#include "assist/scenario.hpp"
#include "assist/server.hpp"
#include "assist/simulate.hpp"
#include "assist/store.hpp"
#include "assist/transcript.hpp"

namespace fs = std::filesystem;
using namespace assist;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

// A scenario file path, or an id looked up among the *.json files of dir.
Scenario resolve_scenario(const std::string& ref, const fs::path& dir) {
    if (fs::is_regular_file(ref)) return load_scenario_file(ref);
    if (fs::is_directory(dir)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.path().extension() == ".json") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            try {
                Scenario s = load_scenario_file(file.string());
                if (lowercase(s.scenario_id) == lowercase(ref)) return s;
            } catch (const Error&) {
            }
        }
    }
    throw NotFoundError("unknown scenario '" + ref + "' (not a file, and not found in " + dir.string() + ")");
}

void print_violations(const std::vector<Violation>& violations) {
    for (const auto& v : violations) {
        std::cout << (v.step_id.empty() ? "(scenario)" : v.step_id) << ": " << to_string(v.rule) << ": "
                  << v.detail << "\n";
    }
}

int run_validate(const std::string& file) {
    Scenario scenario;
    try {
        scenario = load_scenario_file(file);
    } catch (const ParseError& e) {
        std::cerr << file << ":" << e.line() << ":" << e.column() << ": " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << file << ": " << e.what() << "\n";
        return 2;
    }
    const auto violations = validate_scenario(scenario);
    if (!violations.empty()) {
        std::cout << file << ": " << violations.size() << " violation(s)\n";
        print_violations(violations);
        return 1;
    }
    std::cout << "OK: " << scenario.scenario_id << " (" << scenario.step_count() << " steps)\n";
    return 0;
}

struct SessionArgs {
    std::string scenario;
    std::string scenario_dir = "scenarios";
    std::string trainee;
    std::string session_id = "session-1";
    bool testing = false;
    int iteration = 1;
    std::string script;
    bool summary_json = false;
    std::string data;
    double fuzzy = kDefaultFuzzyThreshold;
    double start = 0;
};

int run_session(const SessionArgs& args) {
    auto scenario = std::make_shared<const Scenario>(resolve_scenario(args.scenario, args.scenario_dir));
    auto monitor = std::make_shared<const ProcessMonitor>(scenario, MonitorOptions{args.fuzzy});

    std::unique_ptr<SessionStore> store;
    if (!args.data.empty()) {
        store = std::make_unique<SessionStore>(args.data);
        store->save_scenario(*scenario);
    }
    TranscriptSetup setup;
    setup.session_id = args.session_id;
    setup.trainee_id = args.trainee;
    setup.mode = args.testing ? Mode::Testing : Mode::Training;
    setup.iteration = args.iteration;
    setup.start_at = args.start;
    const auto wall_start = std::chrono::steady_clock::now();
    setup.elapsed = [wall_start] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    };
    TranscriptRunner runner(monitor, setup, store.get());

    auto emit = [](const std::vector<std::string>& lines) {
        for (const auto& l : lines) std::cout << l << "\n";
        std::cout.flush();
    };

    std::optional<GroundTruthScript> script;
    if (!args.script.empty()) {
        script = script_from_json(parse_json_text(read_text(args.script), "script"));
        check_script(*script, *scenario);
        for (const auto& line : script->lines) {
            if (runner.finished()) break;
            std::cout << "trainee: " << line.text << "\n";
            emit(runner.feed("@" + format_number(line.at_offset) + " " + line.text));
            if (line.implementation_error_ordinal)
                emit(runner.feed("!imp " + std::to_string(*line.implementation_error_ordinal)));
        }
    } else {
        const bool interactive = isatty(STDIN_FILENO);
        std::string line;
        while (true) {
            if (interactive) std::cout << "> " << std::flush;
            if (!std::getline(std::cin, line)) break;
            try {
                emit(runner.feed(line));
            } catch (const DomainError& e) {
                std::cerr << "error: " << e.what() << "\n";
            }
        }
    }
    runner.abandon();

    if (args.summary_json) {
        std::cout << canonical_dump(runner.summary_json()) << "\n";
    } else {
        std::cout << runner.summary_text();
        if (script) {
            const auto& events = runner.session().events;
            GroundTruthScript performed;
            performed.lines.assign(script->lines.begin(),
                                   script->lines.begin() + static_cast<std::ptrdiff_t>(events.size()));
            const InteractionMetrics m = classify_interactions(events, performed);
            std::cout << "Interactions: TP " << m.tp << ", TN " << m.tn << ", FP " << m.fp << ", FN " << m.fn
                      << "\n";
        }
    }
    return 0;
}

int run_simulate(const std::string& plan_file, const std::string& out, const std::string& scenario_dir,
                 double fuzzy) {
    const SimulationPlan plan = parse_plan(parse_json_text(read_text(plan_file), "plan"));
    Scenario scenario;
    if (plan.scenario_file) {
        fs::path file = *plan.scenario_file;
        if (file.is_relative()) file = fs::path(plan_file).parent_path() / file;
        scenario = load_scenario_file(file.string());
    } else {
        scenario = resolve_scenario(plan.scenario_id, scenario_dir);
    }
    if (lowercase(scenario.scenario_id) != lowercase(plan.scenario_id))
        throw NotFoundError("plan refers to scenario '" + plan.scenario_id + "' but " +
                            (plan.scenario_file ? *plan.scenario_file : scenario_dir) + " holds '" +
                            scenario.scenario_id + "'");
    const auto result = run_simulation(plan, std::make_shared<const Scenario>(std::move(scenario)), fs::path(out),
                                       MonitorOptions{fuzzy});
    std::cout << render_text(result.report);
    std::cout << "\nInteraction metrics, assisted training sessions\n";
    for (const auto& t : result.metrics["assistedTraining"]) {
        std::cout << "  Train " << t["iteration"] << ": TP " << t["tp"] << ", TN " << t["tn"] << ", FP " << t["fp"]
                  << ", FN " << t["fn"] << "\n";
    }
    std::cout << "\nWrote " << out << "/{metrics.json,report.json,report.txt,report.csv,summaries.jsonl,sessions/}\n";
    return 0;
}

int run_report(const std::string& data, const std::string& grouping_text, const std::string& format,
               const std::string& scenario_dir, double fuzzy) {
    const Grouping grouping = parse_grouping(grouping_text);
    std::vector<SessionRow> rows;
    if (fs::is_directory(data) && !fs::is_empty(data)) {
        const SessionStore store(data);
        ScenarioRegistry registry;
        for (const auto& s : store.load_scenarios()) registry.add(s);
        if (!scenario_dir.empty() && fs::is_directory(scenario_dir)) {
            for (const auto& entry : fs::directory_iterator(scenario_dir)) {
                if (entry.path().extension() != ".json") continue;
                Scenario s = load_scenario_file(entry.path().string());
                if (!registry.find(s.scenario_id)) registry.add(std::move(s));
            }
        }
        rows = collect_rows(store, registry, MonitorOptions{fuzzy});
    }
    const GroupReport report = group_report(std::move(rows), grouping);
    if (format == "json")
        std::cout << to_json(report).dump(2) << "\n";
    else if (format == "text")
        std::cout << render_text(report);
    else if (format == "csv")
        std::cout << render_csv(report);
    else
        throw DomainError("unknown format '" + format + "' (expected json, text or csv)");
    return 0;
}

int run_serve(ServerOptions options) {
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    Server server(std::move(options));
    server.start();
    std::cout << "listening on " << server.port() << std::endl;
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        server.stop();
    });
    server.wait();
    // Wake the signal thread if stop() came from elsewhere.
    kill(getpid(), SIGTERM);
    waiter.join();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Voice-protocol training assistant: scenarios, sessions, simulation, reports, server"};
    app.require_subcommand(1);

    std::string validate_file;
    auto* validate = app.add_subcommand("validate", "Check a scenario file");
    validate->add_option("file", validate_file, "Scenario JSON file")->required();

    SessionArgs session_args;
    auto* session = app.add_subcommand("session", "Run a trainee session from stdin or a script");
    session->add_option("--scenario", session_args.scenario, "Scenario file or id")->required();
    session->add_option("--scenario-dir", session_args.scenario_dir, "Where scenario ids are looked up");
    session->add_option("--trainee", session_args.trainee, "Trainee id")->required();
    session->add_option("--session-id", session_args.session_id, "Session id");
    session->add_flag("--testing", session_args.testing, "Testing mode: no correction prompts");
    session->add_option("--iteration", session_args.iteration, "Iteration number")->check(CLI::PositiveNumber);
    session->add_option("--script", session_args.script, "Ground-truth script JSON to replay");
    session->add_flag("--summary-json", session_args.summary_json, "Print the summary as JSON");
    session->add_option("--data", session_args.data, "Persist the session to this data directory");
    session->add_option("--start", session_args.start, "Start time in Unix seconds");
    session->add_option("--fuzzy-threshold", session_args.fuzzy, "Fuzzy match threshold")
        ->check(CLI::Range(0.0, 1.0));

    std::string plan_file;
    std::string out_dir;
    std::string sim_scenario_dir = "scenarios";
    double sim_fuzzy = kDefaultFuzzyThreshold;
    auto* simulate = app.add_subcommand("simulate", "Replay a cohort plan through the monitor");
    simulate->add_option("--plan", plan_file, "Plan JSON")->required();
    simulate->add_option("--out", out_dir, "Output directory")->required();
    simulate->add_option("--scenario-dir", sim_scenario_dir, "Where the plan's scenario id is looked up");
    simulate->add_option("--fuzzy-threshold", sim_fuzzy, "Fuzzy match threshold")->check(CLI::Range(0.0, 1.0));

    std::string report_data;
    std::string grouping = "cohort";
    std::string format = "text";
    std::string report_scenario_dir;
    double report_fuzzy = kDefaultFuzzyThreshold;
    auto* report = app.add_subcommand("report", "Group report over a data directory");
    report->add_option("--data", report_data, "Data directory")->required();
    report->add_option("--grouping", grouping, "cohort or pooled");
    report->add_option("--format", format, "json, text or csv");
    report->add_option("--scenario-dir", report_scenario_dir, "Extra scenario files");
    report->add_option("--fuzzy-threshold", report_fuzzy, "Fuzzy match threshold")->check(CLI::Range(0.0, 1.0));

    ServerOptions server_options;
    std::vector<std::string> server_scenarios;
    std::string server_data = "data";
    auto* serve = app.add_subcommand("serve", "Run the HTTP server");
    serve->add_option("--port", server_options.port, "Port (0 picks a free one)")->envname("PORT");
    serve->add_option("--host", server_options.host, "Bind address");
    serve->add_option("--data", server_data, "Data directory")->envname("DATA_DIR");
    serve->add_option("--fuzzy-threshold", server_options.fuzzy_threshold, "Fuzzy match threshold")
        ->envname("FUZZY_THRESHOLD")
        ->check(CLI::Range(0.0, 1.0));
    serve->add_option("--scenario", server_scenarios, "Scenario file to register (repeatable)");
    serve->add_option("--heartbeat", server_options.heartbeat_seconds, "Live stream heartbeat seconds");
    serve->add_flag("--trust-client-clock", server_options.trust_client_clock,
                    "Take utterance times from clientTimestamp");
    serve->add_flag("!--no-fsync", server_options.durable, "Do not fsync each record");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) return run_validate(validate_file);
        if (*session) return run_session(session_args);
        if (*simulate) return run_simulate(plan_file, out_dir, sim_scenario_dir, sim_fuzzy);
        if (*report) return run_report(report_data, grouping, format, report_scenario_dir, report_fuzzy);
        if (*serve) {
            server_options.data_dir = server_data;
            for (const auto& s : server_scenarios) server_options.scenario_files.emplace_back(s);
            return run_serve(std::move(server_options));
        }
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << " (line " << e.line() << ", column " << e.column() << ")\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
