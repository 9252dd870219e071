#include "assist/replay.hpp"

#include "assist/error.hpp"

namespace assist {

namespace {

bool finished(SessionState state) {
    return state == SessionState::Completed || state == SessionState::Failed;
}

[[noreturn]] void diverged(const EventRecord& record, const std::string& what) {
    throw StateError("log of session '" + record.session_id + "' diverges at seq " +
                     std::to_string(record.seq) + ": " + what);
}

}  // namespace

EventRecord started_record(const Session& session) {
    EventRecord r{session.session_id, 1, session.started_at, RecordType::Started, Json::object()};
    r.payload["traineeId"] = session.trainee_id;
    r.payload["scenarioId"] = session.scenario_id;
    r.payload["mode"] = to_string(session.mode);
    r.payload["iteration"] = session.iteration;
    r.payload["suppressCorrections"] = session.suppress_corrections;
    return r;
}

std::vector<EventRecord> utterance_records(const Session& after, long long next_seq,
                                           std::string_view text, Seconds at,
                                           const UtteranceOutcome& outcome,
                                           std::optional<Seconds> client_at) {
    std::vector<EventRecord> out;
    if (outcome.recorded) {
        const SessionEvent& event = after.events.back();
        EventRecord r{after.session_id, next_seq++, event.at, RecordType::Event, Json::object()};
        r.payload["rawText"] = std::string(text);
        if (client_at) r.payload["clientAt"] = *client_at;
        r.payload["match"] = to_json(event.match);
        r.payload["response"] = event.response ? to_json(*event.response) : Json(nullptr);
        r.payload["advancedTo"] = event.advanced_to ? Json(*event.advanced_to) : Json(nullptr);
        r.payload["errorsAppended"] = to_json(outcome.errors_appended);
        out.push_back(std::move(r));
    }
    if (after.state == SessionState::Completed) {
        out.push_back({after.session_id, next_seq, after.ended_at.value_or(at), RecordType::Completed,
                       Json::object()});
    } else if (after.state == SessionState::Failed) {
        EventRecord r{after.session_id, next_seq, after.ended_at.value_or(at), RecordType::Failed,
                      Json::object()};
        r.payload["reason"] = "timeout";
        r.payload["errorsAppended"] = outcome.recorded ? Json::array() : to_json(outcome.errors_appended);
        out.push_back(std::move(r));
    }
    return out;
}

EventRecord timeout_record(const Session& after, long long seq, Seconds at) {
    EventRecord r{after.session_id, seq, at, RecordType::Failed, Json::object()};
    r.payload["reason"] = "timeout";
    Json errors = Json::array();
    if (!after.errors.empty() && after.errors.back().kind == ErrorKind::Timeout)
        errors.push_back(to_json(after.errors.back()));
    r.payload["errorsAppended"] = std::move(errors);
    return r;
}

EventRecord assessment_record(std::string_view session_id, long long seq, Seconds at,
                              const std::vector<int>& implementation_error_ordinals) {
    EventRecord r{std::string(session_id), seq, at, RecordType::Assessment, Json::object()};
    r.payload["implementationErrorOrdinals"] = implementation_error_ordinals;
    return r;
}

StoredSession replay_records(const std::vector<EventRecord>& records, const ProcessMonitor& monitor) {
    if (records.empty() || records.front().type != RecordType::Started)
        throw StateError("a session log must begin with a started record");
    const EventRecord& first = records.front();
    const std::string scenario_id = first.payload.at("scenarioId").get<std::string>();
    if (lowercase(scenario_id) != lowercase(monitor.scenario().scenario_id))
        diverged(first, "recorded for scenario '" + scenario_id + "'");

    StoredSession stored;
    Session& session = stored.session;
    session = monitor.start(first.session_id, first.payload.at("traineeId").get<std::string>(),
                            parse_mode(first.payload.at("mode").get<std::string>()), first.at,
                            first.payload.value("iteration", 1));
    session.suppress_corrections = first.payload.value("suppressCorrections", session.suppress_corrections);

    for (std::size_t i = 1; i < records.size(); ++i) {
        const EventRecord& r = records[i];
        switch (r.type) {
            case RecordType::Started:
                diverged(r, "second started record");
            case RecordType::Event: {
                if (finished(session.state)) diverged(r, "event after the session finished");
                const MatchResult match = match_from_json(r.payload.at("match"));
                const UtteranceOutcome outcome =
                    monitor.apply(session, r.payload.at("rawText").get<std::string>(), match, r.at);
                if (!outcome.recorded) diverged(r, "utterance falls after the time limit");
                const Json advanced = outcome.advanced_to ? Json(*outcome.advanced_to) : Json(nullptr);
                if (advanced != r.payload.at("advancedTo")) diverged(r, "advanced to a different step");
                if (to_json(outcome.errors_appended) != r.payload.at("errorsAppended"))
                    diverged(r, "different errors");
                break;
            }
            case RecordType::Completed:
                if (session.state != SessionState::Completed) diverged(r, "completed marker on an unfinished session");
                break;
            case RecordType::Failed:
                if (session.state == SessionState::Active && !monitor.check_timeout(session, r.at))
                    diverged(r, "failed marker before the time limit");
                if (session.state != SessionState::Failed) diverged(r, "failed marker on a completed session");
                break;
            case RecordType::Assessment: {
                std::vector<int> ordinals;
                for (const auto& o : r.payload.at("implementationErrorOrdinals")) ordinals.push_back(o.get<int>());
                stored.implementation_error_ordinals = std::move(ordinals);
                break;
            }
        }
    }
    return stored;
}

}  // namespace assist
