#include "assist/codec.hpp"

#include <cmath>

#include "assist/error.hpp"

namespace assist {

namespace {

Json number(double value) {
    if (std::isfinite(value) && value == std::trunc(value) && std::fabs(value) < 9.0e15)
        return static_cast<long long>(value);
    return value;
}

Json optional_string(const std::optional<std::string>& value) {
    return value ? Json(*value) : Json(nullptr);
}

std::optional<std::string> string_or_null(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<std::string>();
}

template <typename Enum, std::size_t N>
Enum lookup(std::string_view text, const std::pair<std::string_view, Enum> (&table)[N],
            std::string_view what) {
    for (const auto& [name, value] : table) {
        if (name == text) return value;
    }
    throw DomainError("unknown " + std::string(what) + " '" + std::string(text) + "'");
}

std::pair<std::size_t, std::size_t> position(std::string_view text, std::size_t offset) {
    std::size_t line = 1;
    std::size_t column = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return {line, column};
}

}  // namespace

Mode parse_mode(std::string_view text) {
    static const std::pair<std::string_view, Mode> table[] = {{"Training", Mode::Training},
                                                              {"Testing", Mode::Testing}};
    return lookup(text, table, "mode");
}

SessionState parse_session_state(std::string_view text) {
    static const std::pair<std::string_view, SessionState> table[] = {
        {"NotStarted", SessionState::NotStarted},
        {"Active", SessionState::Active},
        {"Completed", SessionState::Completed},
        {"Failed", SessionState::Failed}};
    return lookup(text, table, "session state");
}

ErrorKind parse_error_kind(std::string_view text) {
    static const std::pair<std::string_view, ErrorKind> table[] = {
        {"MissedStep", ErrorKind::MissedStep},
        {"OutOfOrder", ErrorKind::OutOfOrder},
        {"UnrecognizedUtterance", ErrorKind::UnrecognizedUtterance},
        {"Timeout", ErrorKind::Timeout}};
    return lookup(text, table, "error kind");
}

PromptKind parse_prompt_kind(std::string_view text) {
    static const std::pair<std::string_view, PromptKind> table[] = {
        {"Statement", PromptKind::Statement},
        {"FollowUpQuestion", PromptKind::FollowUpQuestion},
        {"Correction", PromptKind::Correction},
        {"Retry", PromptKind::Retry}};
    return lookup(text, table, "response kind");
}

MatchKind parse_match_kind(std::string_view text) {
    static const std::pair<std::string_view, MatchKind> table[] = {
        {"Exact", MatchKind::Exact}, {"Fuzzy", MatchKind::Fuzzy}, {"None", MatchKind::None}};
    return lookup(text, table, "match kind");
}

std::string_view to_string(MatchKind kind) {
    switch (kind) {
        case MatchKind::Exact: return "Exact";
        case MatchKind::Fuzzy: return "Fuzzy";
        case MatchKind::None: return "None";
    }
    return "None";
}

std::string_view to_string(StepOutcome outcome) {
    return outcome == StepOutcome::Done ? "Done" : "Missed";
}

Json to_json(const MatchResult& match) {
    Json j;
    j["matched"] = match.matched;
    j["stepId"] = optional_string(match.step_id);
    j["score"] = number(match.score);
    Json slots = Json::array();
    for (const double s : match.slots) slots.push_back(number(s));
    j["slots"] = std::move(slots);
    j["kind"] = to_string(match.kind);
    return j;
}

MatchResult match_from_json(const Json& j) {
    MatchResult match;
    match.matched = j.at("matched").get<bool>();
    match.step_id = string_or_null(j, "stepId");
    match.score = j.at("score").get<double>();
    for (const auto& s : j.at("slots")) match.slots.push_back(s.get<double>());
    match.kind = parse_match_kind(j.at("kind").get<std::string>());
    return match;
}

Json to_json(const Response& response) {
    Json j;
    j["kind"] = to_string(response.kind);
    j["text"] = response.text;
    return j;
}

Response response_from_json(const Json& j) {
    return {parse_prompt_kind(j.at("kind").get<std::string>()), j.at("text").get<std::string>()};
}

Json to_json(const ErrorRecord& error) {
    Json j;
    j["kind"] = to_string(error.kind);
    j["stepId"] = optional_string(error.step_id);
    j["at"] = number(error.at);
    return j;
}

ErrorRecord error_from_json(const Json& j) {
    return {parse_error_kind(j.at("kind").get<std::string>()), string_or_null(j, "stepId"),
            j.at("at").get<double>()};
}

Json to_json(const std::vector<ErrorRecord>& errors) {
    Json out = Json::array();
    for (const auto& e : errors) out.push_back(to_json(e));
    return out;
}

Json to_json(const SessionEvent& event) {
    Json j;
    j["at"] = number(event.at);
    j["rawText"] = event.raw_text;
    j["match"] = to_json(event.match);
    j["response"] = event.response ? to_json(*event.response) : Json(nullptr);
    j["advancedTo"] = optional_string(event.advanced_to);
    return j;
}

Json to_json(const SessionSummary& summary) {
    Json j;
    j["sessionId"] = summary.session_id;
    j["taskTime"] = number(summary.task_time);
    Json outcomes = Json::array();
    for (const auto o : summary.step_outcomes) outcomes.push_back(to_string(o));
    j["stepOutcomes"] = std::move(outcomes);
    j["recordingErrorOrdinals"] = summary.recording_error_ordinals;
    j["timedOut"] = summary.timed_out;
    j["eventCount"] = summary.event_count;
    j["errors"] = to_json(summary.errors);
    return j;
}

Json to_json(const PscoreReport& report) {
    Json j;
    j["pscore"] = number(report.pscore);
    j["timePenalty"] = number(report.time_penalty);
    j["implPenaltyTotal"] = number(report.impl_penalty_total);
    j["recPenaltyTotal"] = number(report.rec_penalty_total);
    j["failed"] = report.failed;
    j["implementationErrorOrdinals"] = report.implementation_error_ordinals;
    j["recordingErrorOrdinals"] = report.recording_error_ordinals;
    return j;
}

Json to_json(const InteractionMetrics& metrics) {
    Json j;
    j["tp"] = metrics.tp;
    j["tn"] = metrics.tn;
    j["fp"] = metrics.fp;
    j["fn"] = metrics.fn;
    return j;
}

Json to_json(const StatTestResult& result) {
    Json j;
    j["method"] = to_string(result.method);
    j["statistic"] = number(result.statistic);
    j["df"] = result.df ? number(*result.df) : Json(nullptr);
    j["pTwoTailed"] = number(result.p_two_tailed);
    if (result.method == StatMethod::WilcoxonPratt) {
        j["signedRankSum"] = result.signed_rank_sum ? number(*result.signed_rank_sum) : Json(nullptr);
        j["pNormal"] = result.p_normal ? number(*result.p_normal) : Json(nullptr);
        j["pExact"] = result.p_exact ? number(*result.p_exact) : Json(nullptr);
        j["nonzero"] = result.nonzero;
        j["zeros"] = result.zeros;
        j["ties"] = result.ties;
    }
    return j;
}

Json session_view(const Session& session, const ProcessMonitor& monitor) {
    Json j;
    j["sessionId"] = session.session_id;
    j["traineeId"] = session.trainee_id;
    j["scenarioId"] = session.scenario_id;
    j["mode"] = to_string(session.mode);
    j["iteration"] = session.iteration;
    j["state"] = to_string(session.state);
    j["currentStepId"] = optional_string(session.current_step_id);
    j["currentOrdinal"] =
        session.current_step_id ? Json(monitor.ordinal_of(*session.current_step_id)) : Json(nullptr);
    j["stepCount"] = monitor.chain().size();
    j["completedSteps"] = session.completed_steps.size();
    j["pendingQuestion"] = optional_string(session.pending_question);
    j["startedAt"] = number(session.started_at);
    j["endedAt"] = session.ended_at ? number(*session.ended_at) : Json(nullptr);
    j["errorCount"] = session.errors.size();
    j["eventCount"] = session.events.size();
    return j;
}

Json to_json(const GroundTruthScript& script) {
    Json j;
    j["name"] = script.name;
    Json lines = Json::array();
    for (const auto& line : script.lines) {
        Json l;
        l["at"] = number(line.at_offset);
        l["text"] = line.text;
        l["accurate"] = line.scripted_accurate;
        if (line.implementation_error_ordinal) l["implementationError"] = *line.implementation_error_ordinal;
        lines.push_back(std::move(l));
    }
    j["lines"] = std::move(lines);
    return j;
}

GroundTruthScript script_from_json(const Json& j) {
    if (!j.is_object()) throw SchemaError("script must be a JSON object");
    GroundTruthScript script;
    script.name = j.value("name", std::string{});
    const auto lines = j.find("lines");
    if (lines == j.end() || !lines->is_array()) throw SchemaError("script needs a 'lines' array");
    for (std::size_t i = 0; i < lines->size(); ++i) {
        const Json& l = (*lines)[i];
        const std::string where = "script '" + script.name + "' line " + std::to_string(i + 1);
        if (!l.is_object() || !l.contains("at") || !l.contains("text"))
            throw SchemaError(where + " needs 'at' and 'text'");
        if (!l["at"].is_number() || !l["text"].is_string())
            throw SchemaError(where + ": 'at' must be a number and 'text' a string");
        ScriptLine line;
        line.at_offset = l["at"].get<double>();
        line.text = l["text"].get<std::string>();
        if (auto a = l.find("accurate"); a != l.end()) {
            if (!a->is_boolean()) throw SchemaError(where + ": 'accurate' must be a boolean");
            line.scripted_accurate = a->get<bool>();
        }
        if (auto e = l.find("implementationError"); e != l.end() && !e->is_null()) {
            if (!e->is_number_integer()) throw SchemaError(where + ": 'implementationError' must be an integer");
            line.implementation_error_ordinal = e->get<int>();
        }
        script.lines.push_back(std::move(line));
    }
    return script;
}

Json parse_json_text(std::string_view text, std::string_view what) {
    try {
        return Json::parse(text.begin(), text.end());
    } catch (const Json::parse_error& e) {
        const auto [line, column] = position(text, e.byte > 0 ? e.byte - 1 : 0);
        throw ParseError("malformed " + std::string(what) + ": " + e.what(), line, column);
    }
}

std::string canonical_dump(const Json& j) {
    return j.dump(-1, ' ', false, Json::error_handler_t::replace);
}

}  // namespace assist
