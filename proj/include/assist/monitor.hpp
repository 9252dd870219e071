#pragma once

// Session state machine. A ProcessMonitor is bound to one validated scenario
// and is immutable; all mutable state lives in Session values, which the
// caller owns. Time is always passed in by the caller.

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "assist/intent.hpp"
#include "assist/scenario.hpp"

namespace assist {

inline constexpr std::string_view kRetryPrompt = "Please try again.";

enum class Mode { Training, Testing };
enum class SessionState { NotStarted, Active, Completed, Failed };
enum class ErrorKind { MissedStep, OutOfOrder, UnrecognizedUtterance, Timeout };
enum class PromptKind { Statement, FollowUpQuestion, Correction, Retry };
enum class StepOutcome { Done, Missed };

struct ErrorRecord {
    ErrorKind kind = ErrorKind::UnrecognizedUtterance;
    std::optional<std::string> step_id;
    Seconds at = 0;

    bool operator==(const ErrorRecord&) const = default;
};

struct Response {
    PromptKind kind = PromptKind::Statement;
    std::string text;

    bool operator==(const Response&) const = default;
};

struct SessionEvent {
    Seconds at = 0;
    std::string raw_text;
    MatchResult match;
    std::optional<Response> response;
    std::optional<std::string> advanced_to;

    bool operator==(const SessionEvent&) const = default;
};

struct Session {
    std::string session_id;
    std::string trainee_id;
    std::string scenario_id;
    Mode mode = Mode::Training;
    int iteration = 1;
    SessionState state = SessionState::NotStarted;
    std::optional<std::string> current_step_id;
    Seconds started_at = 0;
    std::optional<Seconds> ended_at;
    std::set<std::string> completed_steps;
    // Skipped steps not yet made up, in protocol order.
    std::vector<std::string> outstanding_missed;
    // Follow-up question still waiting for its answer.
    std::optional<std::string> pending_question;
    bool suppress_corrections = false;
    std::vector<SessionEvent> events;
    std::vector<ErrorRecord> errors;

    bool operator==(const Session&) const = default;
};

struct SessionSummary {
    std::string session_id;
    Seconds task_time = 0;
    // Indexed by ordinal - 1.
    std::vector<StepOutcome> step_outcomes;
    std::set<int> recording_error_ordinals;
    bool timed_out = false;
    std::size_t event_count = 0;
    std::vector<ErrorRecord> errors;

    bool operator==(const SessionSummary&) const = default;
};

struct UtteranceOutcome {
    std::optional<Response> response;
    std::optional<std::string> accepted_step;
    std::optional<std::string> advanced_to;
    std::vector<ErrorRecord> errors_appended;
    SessionState state = SessionState::Active;
    // false when the utterance arrived after the time limit and only the
    // timeout was recorded.
    bool recorded = true;
};

struct MonitorOptions {
    double fuzzy_threshold = kDefaultFuzzyThreshold;
};

class ProcessMonitor {
public:
    // Throws ScenarioValidationError for an invalid scenario.
    explicit ProcessMonitor(std::shared_ptr<const Scenario> scenario, MonitorOptions options = {});

    const Scenario& scenario() const { return *scenario_; }
    std::shared_ptr<const Scenario> scenario_ptr() const { return scenario_; }
    const MonitorOptions& options() const { return options_; }
    const std::vector<const Step*>& chain() const { return chain_; }
    int ordinal_of(std::string_view step_id) const;

    Session start(std::string session_id, std::string trainee_id, Mode mode, Seconds now,
                  int iteration = 1) const;

    // Steps an utterance may complete right now, in protocol order.
    std::vector<MatchCandidate> admissible(const Session& session) const;

    // Pattern match against the admissible steps. A negative reply to a
    // pending follow-up question is reported as a match on the question's
    // correction step.
    MatchResult recognize(const Session& session, std::string_view text) const;

    // recognize + apply.
    UtteranceOutcome handle_utterance(Session& session, std::string_view text, Seconds now) const;

    // Applies an already computed match. Replays and noisy channels enter
    // here. Throws StateError if the session is not Active, time runs
    // backwards, or the match names a step that is not admissible.
    UtteranceOutcome apply(Session& session, std::string_view text, const MatchResult& match,
                           Seconds now) const;

    // Fails the session once now - started_at exceeds the failure threshold.
    // Returns true if the session was failed by this call.
    bool check_timeout(Session& session, Seconds now) const;

    // Throws StateError unless the session is Completed or Failed.
    SessionSummary finalize(const Session& session) const;

private:
    std::size_t chain_index(std::string_view step_id) const;
    std::string describe_step(const Step& step) const;

    std::shared_ptr<const Scenario> scenario_;
    MonitorOptions options_;
    std::vector<const Step*> chain_;
    std::map<std::string, std::size_t, std::less<>> index_;
    std::map<std::string, std::vector<UtterancePattern>, std::less<>> patterns_;
};

// True for replies such as "no", "not yet", "negative".
bool is_negative_reply(const TokenSequence& utterance);

// Owns sessions by id; refuses to start a second session with a used id.
class SessionTable {
public:
    Session& start(const ProcessMonitor& monitor, std::string session_id, std::string trainee_id,
                   Mode mode, Seconds now, int iteration = 1);
    Session* find(std::string_view session_id);
    std::size_t size() const { return sessions_.size(); }

private:
    std::map<std::string, Session, std::less<>> sessions_;
};

std::string_view to_string(Mode mode);
std::string_view to_string(SessionState state);
std::string_view to_string(ErrorKind kind);
std::string_view to_string(PromptKind kind);

}  // namespace assist
