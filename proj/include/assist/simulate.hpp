#pragma once

// Scripted cohort simulation: every participant performs Train 1, Test 1,
// Train 2, Test 2, Train 3, Test 3 from ground-truth scripts, optionally
// through a noisy recognition channel.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "assist/codec.hpp"
#include "assist/monitor.hpp"
#include "assist/report.hpp"
#include "assist/scoring.hpp"
#include "assist/store.hpp"

namespace assist {

// Recognition noise at the match boundary. With probability fn_rate an
// accepted utterance is rejected; with probability fp_rate a rejected one is
// accepted as the current step. A trainee whose accurate line was rejected
// repeats it after retry_delay seconds, at most max_attempts times in all.
struct NoiseModel {
    double fn_rate = 0;
    double fp_rate = 0;
    std::uint64_t seed = 0;
    Seconds retry_delay = 2;
    int max_attempts = 3;
};

// Uniform doubles in [0, 1) built from the top 53 bits of mt19937_64, so a
// seed gives the same stream on every platform.
class NoiseSource {
public:
    explicit NoiseSource(std::uint64_t seed) : engine_(seed) {}
    double uniform();

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
// Per-session stream seed from the plan seed and the session id.
std::uint64_t session_seed(std::uint64_t seed, std::string_view session_id);

struct SessionSetup {
    std::string session_id;
    std::string trainee_id;
    Mode mode = Mode::Training;
    int iteration = 1;
    Seconds start_at = 0;
    // Defaults to the mode's behaviour (suppressed in Testing).
    std::optional<bool> suppress_corrections;
};

struct ScriptRun {
    Session session;
    // The lines as actually spoken, repeats included, with their offsets;
    // line i produced session.events[i].
    GroundTruthScript performed;
    std::vector<EventRecord> records;
};

// Runs a script through the monitor. Lines after a timeout are not spoken;
// a script that ends before the last step leaves the session to time out.
ScriptRun run_script(const ProcessMonitor& monitor, const GroundTruthScript& script, const SessionSetup& setup,
                     const NoiseModel* noise = nullptr);

struct PlanScript {
    GroundTruthScript script;
    std::optional<int> participant;
    std::optional<int> iteration;
    std::optional<Mode> mode;
};

struct CohortPlan {
    TraineeGroup group = TraineeGroup::Experiment;
    int participants = 0;
    std::string id_prefix;
    // Whether training sessions get correction prompts. Defaults to true
    // for the experiment group and false for the control group.
    bool assisted = true;
    std::vector<PlanScript> scripts;
};

struct SimulationPlan {
    std::string scenario_id;
    std::optional<std::string> scenario_file;
    Seconds start_time = 1704067200;  // 2024-01-01T00:00:00Z
    Seconds session_gap = 600;
    std::vector<CohortPlan> cohorts;
    std::optional<NoiseModel> noise;
};

// Throws SchemaError / DomainError describing the first problem found.
SimulationPlan parse_plan(const Json& j);

// The most specific script whose participant/iteration/mode constraints all
// hold; earlier scripts win ties. Null when none applies.
const GroundTruthScript* select_script(const CohortPlan& cohort, int participant, int iteration, Mode mode);

struct SimulatedSession {
    std::string group;
    int participant = 0;
    bool assisted = false;
    ScriptRun run;
    SessionSummary summary;
    PscoreReport score;
    InteractionMetrics metrics;
};

struct SimulationResult {
    std::vector<SimulatedSession> sessions;
    Json metrics;
    GroupReport report;
};

// Runs the whole plan. With an output directory, sessions are persisted to
// <out>/sessions and metrics.json, report.json, report.txt, report.csv and
// summaries.jsonl are written; <out>/sessions must not already hold data.
SimulationResult run_simulation(const SimulationPlan& plan, std::shared_ptr<const Scenario> scenario,
                                const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                                const MonitorOptions& options = {});

Json metrics_json(const std::vector<SimulatedSession>& sessions);

}  // namespace assist
