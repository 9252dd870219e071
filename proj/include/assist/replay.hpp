#pragma once

// Conversion between live monitor activity and stored log records, and the
// reverse: rebuilding a Session from its log.

#include <optional>
#include <string_view>
#include <vector>

#include "assist/monitor.hpp"
#include "assist/store.hpp"

namespace assist {

EventRecord started_record(const Session& session);

// Records describing one handled utterance, numbered from next_seq: the
// event itself (unless the utterance only tripped the timeout), followed by
// a completed or failed marker when the session finished.
std::vector<EventRecord> utterance_records(const Session& after, long long next_seq,
                                           std::string_view text, Seconds at,
                                           const UtteranceOutcome& outcome,
                                           std::optional<Seconds> client_at = std::nullopt);

// Marker for a session failed by check_timeout outside of an utterance.
EventRecord timeout_record(const Session& after, long long seq, Seconds at);

EventRecord assessment_record(std::string_view session_id, long long seq, Seconds at,
                              const std::vector<int>& implementation_error_ordinals);

struct StoredSession {
    Session session;
    std::optional<std::vector<int>> implementation_error_ordinals;
};

// Replays stored matches through the monitor. Throws StateError when the log
// disagrees with what the monitor produces (a different scenario version or
// a damaged log).
StoredSession replay_records(const std::vector<EventRecord>& records, const ProcessMonitor& monitor);

}  // namespace assist
