#pragma once

// Deterministic stand-in for the speech/NLP front end: utterance text is
// normalized into tokens and matched against the "/"-separated patterns of
// the steps the trainee may currently perform.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace assist {

inline constexpr double kDefaultFuzzyThreshold = 0.8;

struct TokenSequence {
    std::vector<std::string> tokens;
    std::string source_text;
};

// Lowercases ASCII, drops apostrophes, turns other punctuation into
// separators and collapses whitespace. A '.' between two digits survives so
// decimal numbers stay one token.
TokenSequence normalize(std::string_view text);

struct PatternElement {
    enum class Kind { Literal, NumberSlot };
    Kind kind = Kind::Literal;
    std::string token;  // empty for NumberSlot

    bool operator==(const PatternElement&) const = default;
};

struct UtterancePattern {
    std::vector<PatternElement> elements;
    std::string source;
};

// One pattern per "/" alternative; "{Number}" becomes a NumberSlot.
// Throws DomainError if no alternative has any content.
std::vector<UtterancePattern> compile_pattern(std::string_view raw);

bool is_number_token(std::string_view token);

enum class MatchKind { Exact, Fuzzy, None };

struct MatchResult {
    bool matched = false;
    std::optional<std::string> step_id;
    double score = 0;
    std::vector<double> slots;
    MatchKind kind = MatchKind::None;

    bool operator==(const MatchResult&) const = default;
};

struct MatchCandidate {
    std::string step_id;
    int ordinal = 0;
    std::vector<UtterancePattern> patterns;
};

// Exact token-for-token match wins outright; otherwise the best Jaccard
// similarity over token sets (slots excluded) is accepted when it reaches
// fuzzy_threshold. Ties go to the lowest ordinal, then the smaller step id.
MatchResult match_utterance(const TokenSequence& utterance,
                            const std::vector<MatchCandidate>& candidates,
                            double fuzzy_threshold = kDefaultFuzzyThreshold);

struct ScenarioSelection {
    std::optional<std::string> scenario_id;
    std::vector<std::string> keywords;
};

// keywords: utterance tokens present in the registry (in token order);
// scenario_id: the first hit.
ScenarioSelection select_scenario(const TokenSequence& utterance,
                                  const std::map<std::string, std::string>& registry);

}  // namespace assist
