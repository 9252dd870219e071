#pragma once

// Cohort reports: per group x iteration x mode cells of Pscore and task time,
// IMP/REP error totals laid out Train 1, Test 1, ..., Test 3, Welch tests
// between groups on each test iteration and paired signed-rank tests within
// each group across iterations.

#include <optional>
#include <string>
#include <vector>

#include "assist/codec.hpp"
#include "assist/monitor.hpp"
#include "assist/scoring.hpp"
#include "assist/stats.hpp"

namespace assist {

class SessionStore;
class ScenarioRegistry;

enum class Grouping { Cohort, Pooled };

std::string_view to_string(Grouping grouping);
Grouping parse_grouping(std::string_view text);

inline constexpr std::string_view kUnassignedGroup = "Unassigned";
inline constexpr std::string_view kPooledGroup = "All";

struct SessionRow {
    std::string session_id;
    std::string trainee_id;
    std::string group;
    int iteration = 1;
    Mode mode = Mode::Training;
    Seconds task_time = 0;
    PscoreReport score;

    int imp() const { return static_cast<int>(score.implementation_error_ordinals.size()); }
    int rep() const { return static_cast<int>(score.recording_error_ordinals.size()); }
};

struct SampleMoments {
    double mean = 0;
    std::optional<double> sd;  // absent for a single session
};

struct ReportCell {
    std::string group;
    int iteration = 1;
    Mode mode = Mode::Training;
    int n = 0;
    // All absent when n == 0.
    std::optional<SampleMoments> pscore;
    std::optional<SampleMoments> task_time;
    std::optional<int> imp;
    std::optional<int> rep;
};

struct BetweenGroups {
    std::string metric;  // "pscore" or "taskTime"
    int iteration = 1;
    Mode mode = Mode::Testing;
    std::string group_a;
    std::string group_b;
    std::optional<StatTestResult> result;
    std::string note;  // why result is absent
};

struct WithinGroup {
    std::string metric;
    std::string group;
    Mode mode = Mode::Testing;
    int from_iteration = 1;
    int to_iteration = 3;
    int pairs = 0;
    std::optional<StatTestResult> result;
    std::string note;
};

struct GroupReport {
    Grouping grouping = Grouping::Cohort;
    std::vector<std::string> groups;
    // Every group x iteration 1..3 x {Training, Testing}, empty ones included.
    std::vector<ReportCell> cells;
    std::vector<BetweenGroups> between;
    std::vector<WithinGroup> within;
    std::vector<SessionRow> rows;

    const ReportCell* cell(std::string_view group, int iteration, Mode mode) const;
};

GroupReport group_report(std::vector<SessionRow> rows, Grouping grouping);

// Finished sessions of a store, replayed, scored and sorted by group,
// trainee, iteration, mode (training first) and session id. Sessions whose
// scenario is not in the registry are skipped.
std::vector<SessionRow> collect_rows(const SessionStore& store, const ScenarioRegistry& registry,
                                     const MonitorOptions& options = {});

Json to_json(const GroupReport& report);
std::string render_text(const GroupReport& report);
// sessionId,group,iteration,mode,t,pscore,imp,rep
std::string render_csv(const GroupReport& report);

// Shortest round-trip decimal form, the same digits the JSON output uses.
std::string format_number(double value);

}  // namespace assist
