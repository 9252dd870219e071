#pragma once

// JSON shapes shared by the store, the server, the CLI and the reports.
// Object keys are emitted in a fixed order so dumps are byte-stable.

#include <string>
#include <string_view>

#include <json.hpp>

#include "assist/monitor.hpp"
#include "assist/scoring.hpp"
#include "assist/stats.hpp"

namespace assist {

using Json = nlohmann::ordered_json;

Mode parse_mode(std::string_view text);
SessionState parse_session_state(std::string_view text);
ErrorKind parse_error_kind(std::string_view text);
PromptKind parse_prompt_kind(std::string_view text);
MatchKind parse_match_kind(std::string_view text);
std::string_view to_string(MatchKind kind);
std::string_view to_string(StepOutcome outcome);

Json to_json(const MatchResult& match);
MatchResult match_from_json(const Json& j);

Json to_json(const Response& response);
Response response_from_json(const Json& j);

Json to_json(const ErrorRecord& error);
ErrorRecord error_from_json(const Json& j);
Json to_json(const std::vector<ErrorRecord>& errors);

Json to_json(const SessionEvent& event);
Json to_json(const SessionSummary& summary);
Json to_json(const PscoreReport& report);
Json to_json(const InteractionMetrics& metrics);
Json to_json(const StatTestResult& result);

// Session overview used by the HTTP API and the live stream.
Json session_view(const Session& session, const ProcessMonitor& monitor);

// Ground-truth script:
//   {"name": "...", "lines": [{"at": 3.5, "text": "...", "accurate": true,
//                              "implementationError": 8}]}
// "accurate" defaults to true; "implementationError" may be omitted.
Json to_json(const GroundTruthScript& script);
GroundTruthScript script_from_json(const Json& j);

// Throws ParseError with the position of the offending character.
Json parse_json_text(std::string_view text, std::string_view what);

std::string canonical_dump(const Json& j);

}  // namespace assist
