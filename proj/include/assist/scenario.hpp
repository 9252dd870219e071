#pragma once

// Training scenarios: a protocol expressed as a linked chain of steps, each
// carrying the spoken acknowledgement, the utterance patterns that complete it
// and the penalty weights used when scoring a run.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "assist/error.hpp"

namespace assist {

using Seconds = double;

enum class ResponseKind { Statement, FollowUpQuestion };

struct ResponseSpec {
    ResponseKind kind = ResponseKind::Statement;
    std::string text;

    bool operator==(const ResponseSpec&) const = default;
};

// "R@text" is a statement, "E@text" a follow-up question; bare text is a
// statement.
ResponseSpec parse_acknowledgement(std::string_view column);
std::string format_acknowledgement(const ResponseSpec& spec);

struct TimePenaltyParams {
    Seconds baseline = 40;
    Seconds free_threshold = 50;
    Seconds fail_threshold = 95;
    double rate = 0.02;
    double fail_penalty = 10;
    double max_score = 10;

    bool operator==(const TimePenaltyParams&) const = default;
};

struct CriticalWindow {
    Seconds min = 65;
    Seconds max = 95;

    bool operator==(const CriticalWindow&) const = default;
};

struct Step {
    std::string step_id;
    int ordinal = 0;
    ResponseSpec acknowledgement;
    std::optional<std::string> condition_step_id;
    std::optional<std::string> correction_step_id;
    // Raw "/"-separated alternatives exactly as written in the document.
    std::string patterns;
    std::optional<std::string> next_step_id;
    std::optional<std::string> prev_step_id;
    double impl_penalty = 0;
    double rec_penalty = 0;
    // Free-form annotation carried through load/save untouched.
    std::optional<std::string> note;

    // patterns split on "/", empty alternatives dropped.
    std::vector<std::string> pattern_alternatives() const;

    bool operator==(const Step&) const = default;
};

struct Scenario {
    std::string scenario_id;
    std::string title;
    std::map<std::string, Step> steps;
    std::string entry_step_id;
    Seconds ideal_time = 40;
    CriticalWindow critical_window;
    TimePenaltyParams time_penalty;

    std::size_t step_count() const { return steps.size(); }
    const Step& step(const std::string& step_id) const;
    const Step* find_step(std::string_view step_id) const;

    bool operator==(const Scenario&) const = default;
};

// Parses the JSON scenario document. Throws ParseError (with line/column and
// field path) for malformed input and SchemaError for duplicate step ids.
Scenario parse_scenario_document(std::string_view document);

// Canonical JSON rendering; parse_scenario_document inverts it exactly.
std::string serialize_scenario(const Scenario& scenario);

Scenario load_scenario_file(const std::string& path);

enum class ViolationRule {
    EntryMissing,
    EntryHasCondition,
    DanglingLink,
    CycleDetected,
    UnreachableStep,
    PrevLinkMismatch,
    DuplicateOrdinal,
    OrdinalOutOfRange,
    OrdinalOrder,
    EmptyPatterns,
    PenaltyOrder,
    InvalidTimePenalty,
    InvalidCriticalWindow,
};

std::string_view to_string(ViolationRule rule);

struct Violation {
    std::string step_id;  // empty for scenario-level rules
    ViolationRule rule;
    std::string detail;

    bool operator==(const Violation&) const = default;
};

std::vector<Violation> validate_scenario(const Scenario& scenario);

class ScenarioValidationError : public SchemaError {
public:
    explicit ScenarioValidationError(std::vector<Violation> violations);
    const std::vector<Violation>& violations() const { return violations_; }

private:
    std::vector<Violation> violations_;
};

// Steps in execution order, following next links from the entry step.
// Throws SchemaError on cycles or dangling links.
std::vector<const Step*> linearize(const Scenario& scenario);

struct StepPenalties {
    double impl_penalty;
    double rec_penalty;
};

// Throws DomainError when ordinal is outside 1..step_count.
StepPenalties step_penalties(const Scenario& scenario, int ordinal);

// Thread-safe set of validated scenarios, addressable by case-insensitive id
// and by spoken keywords (the id itself plus any registered aliases).
class ScenarioRegistry {
public:
    // Validates first; throws SchemaError listing violations on failure.
    // Replaces an existing scenario with the same id.
    std::shared_ptr<const Scenario> add(Scenario scenario);
    void add_keyword(std::string keyword, std::string scenario_id);

    std::shared_ptr<const Scenario> find(std::string_view scenario_id) const;
    std::shared_ptr<const Scenario> get(std::string_view scenario_id) const;
    std::vector<std::shared_ptr<const Scenario>> all() const;
    std::map<std::string, std::string> keywords() const;

private:
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<const Scenario>> by_id_;
    std::map<std::string, std::string> keywords_;
};

std::string lowercase(std::string_view text);

}  // namespace assist
