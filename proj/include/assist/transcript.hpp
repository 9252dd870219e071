#pragma once

// Line-oriented trainee session, the engine behind `assist session`.
//
// Input lines:
//   [@<seconds>] <utterance>   optional offset from session start; without
//                              it the injected clock is asked
//   !imp <ordinal>             observer marks an implementation error
//   # ...                      comment, ignored
//   (blank)                    ignored

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "assist/codec.hpp"
#include "assist/monitor.hpp"
#include "assist/scoring.hpp"

namespace assist {

class SessionStore;
struct EventRecord;

struct TranscriptSetup {
    std::string session_id = "session-1";
    std::string trainee_id = "trainee";
    Mode mode = Mode::Training;
    int iteration = 1;
    Seconds start_at = 0;
    // Seconds since start for lines without an "@" prefix.
    std::function<Seconds()> elapsed;
};

struct TranscriptLine {
    std::optional<Seconds> offset;
    enum class Kind { Utterance, ImplementationError, Ignored } kind = Kind::Ignored;
    std::string text;
    int ordinal = 0;
};

// Throws DomainError for a malformed "@" offset or "!imp" directive.
TranscriptLine parse_transcript_line(std::string_view line);

class TranscriptRunner {
public:
    TranscriptRunner(std::shared_ptr<const ProcessMonitor> monitor, TranscriptSetup setup,
                     SessionStore* store = nullptr);

    // Handles one input line and returns what the assistant says (possibly
    // nothing). Lines after the session finished are refused with a message.
    std::vector<std::string> feed(std::string_view line);

    // Ends an unfinished session by letting the time limit lapse.
    void abandon();

    bool finished() const;
    const Session& session() const { return session_; }
    const std::vector<int>& implementation_errors() const { return implementation_errors_; }

    SessionSummary summary() const;
    PscoreReport score() const;
    std::string summary_text() const;
    Json summary_json() const;

private:
    void persist(const std::vector<EventRecord>& records);

    std::shared_ptr<const ProcessMonitor> monitor_;
    TranscriptSetup setup_;
    SessionStore* store_;
    Session session_;
    long long seq_ = 1;
    std::vector<int> implementation_errors_;
};

// "8.0", "7.6", "-2.25": shortest form with at least one decimal.
std::string format_score(double value);

}  // namespace assist
