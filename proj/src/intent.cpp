#include "assist/intent.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

#include "assist/error.hpp"

namespace assist {

namespace {

constexpr std::string_view kNumberSlot = "{Number}";

bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (current.find('.') != std::string::npos && !is_number_token(current)) {
            // "9c0.9" is not a number, so its point separates like any other.
            std::size_t start = 0;
            for (std::size_t dot; (dot = current.find('.', start)) != std::string::npos; start = dot + 1)
                tokens.push_back(current.substr(start, dot - start));
            tokens.push_back(current.substr(start));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
        }
        current.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        const auto u = static_cast<unsigned char>(c);
        if (u >= 0x80 || std::isalnum(u)) {
            current += static_cast<char>(std::tolower(u));
        } else if (c == '\'' || c == '`') {
            // dropped: "patient's" -> "patients"
        } else if (c == '.' && i > 0 && i + 1 < text.size() && is_digit(text[i - 1]) &&
                   is_digit(text[i + 1]) && !current.empty()) {
            current += c;
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

// Fraction num/den compared exactly so equal similarities really tie.
struct Similarity {
    long long num = 0;
    long long den = 1;

    double value() const { return den == 0 ? 0.0 : static_cast<double>(num) / den; }
    int compare(const Similarity& other) const {
        const long long lhs = num * other.den;
        const long long rhs = other.num * den;
        return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
    }
};

bool matches_exactly(const std::vector<std::string>& tokens, const UtterancePattern& pattern,
                     std::vector<double>& slots) {
    if (tokens.size() != pattern.elements.size()) return false;
    std::vector<double> captured;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto& element = pattern.elements[i];
        if (element.kind == PatternElement::Kind::Literal) {
            if (tokens[i] != element.token) return false;
        } else {
            if (!is_number_token(tokens[i])) return false;
            double value = 0;
            std::from_chars(tokens[i].data(), tokens[i].data() + tokens[i].size(), value);
            captured.push_back(value);
        }
    }
    slots = std::move(captured);
    return true;
}

Similarity jaccard(const std::vector<std::string>& tokens, const UtterancePattern& pattern) {
    std::set<std::string> literal;
    bool has_slot = false;
    for (const auto& element : pattern.elements) {
        if (element.kind == PatternElement::Kind::Literal)
            literal.insert(element.token);
        else
            has_slot = true;
    }
    std::set<std::string> spoken;
    for (const auto& token : tokens) {
        if (has_slot && is_number_token(token)) continue;
        spoken.insert(token);
    }
    if (literal.empty() || spoken.empty()) return {0, 1};
    long long common = 0;
    for (const auto& token : spoken) common += literal.count(token);
    const long long total = static_cast<long long>(literal.size() + spoken.size()) - common;
    return {common, total};
}

// true if candidate a should win a tie against b
bool precedes(const MatchCandidate& a, const MatchCandidate& b) {
    if (a.ordinal != b.ordinal) return a.ordinal < b.ordinal;
    return a.step_id < b.step_id;
}

}  // namespace

TokenSequence normalize(std::string_view text) {
    return {tokenize(text), std::string(text)};
}

bool is_number_token(std::string_view token) {
    if (token.empty() || !is_digit(token.front()) || !is_digit(token.back())) return false;
    bool seen_point = false;
    for (const char c : token) {
        if (c == '.') {
            if (seen_point) return false;
            seen_point = true;
        } else if (!is_digit(c)) {
            return false;
        }
    }
    return true;
}

std::vector<UtterancePattern> compile_pattern(std::string_view raw) {
    std::vector<UtterancePattern> out;
    std::size_t start = 0;
    while (start <= raw.size()) {
        std::size_t end = raw.find('/', start);
        if (end == std::string_view::npos) end = raw.size();
        const std::string_view alternative = raw.substr(start, end - start);

        UtterancePattern pattern;
        pattern.source = std::string(alternative);
        std::size_t cursor = 0;
        while (cursor <= alternative.size()) {
            std::size_t slot = alternative.find(kNumberSlot, cursor);
            const std::size_t literal_end = slot == std::string_view::npos ? alternative.size() : slot;
            for (auto& token : tokenize(alternative.substr(cursor, literal_end - cursor)))
                pattern.elements.push_back({PatternElement::Kind::Literal, std::move(token)});
            if (slot == std::string_view::npos) break;
            pattern.elements.push_back({PatternElement::Kind::NumberSlot, {}});
            cursor = slot + kNumberSlot.size();
        }
        if (!pattern.elements.empty()) out.push_back(std::move(pattern));
        start = end + 1;
    }
    if (out.empty()) throw DomainError("pattern '" + std::string(raw) + "' has no content");
    return out;
}

MatchResult match_utterance(const TokenSequence& utterance,
                            const std::vector<MatchCandidate>& candidates,
                            double fuzzy_threshold) {
    MatchResult result;
    if (utterance.tokens.empty()) return result;

    const MatchCandidate* exact = nullptr;
    std::vector<double> exact_slots;
    for (const auto& candidate : candidates) {
        if (exact && !precedes(candidate, *exact)) continue;
        for (const auto& pattern : candidate.patterns) {
            std::vector<double> slots;
            if (matches_exactly(utterance.tokens, pattern, slots)) {
                exact = &candidate;
                exact_slots = std::move(slots);
                break;
            }
        }
    }
    if (exact) {
        result.matched = true;
        result.step_id = exact->step_id;
        result.score = 1.0;
        result.slots = std::move(exact_slots);
        result.kind = MatchKind::Exact;
        return result;
    }

    const MatchCandidate* best = nullptr;
    Similarity best_score;
    for (const auto& candidate : candidates) {
        for (const auto& pattern : candidate.patterns) {
            const Similarity score = jaccard(utterance.tokens, pattern);
            const int order = best ? score.compare(best_score) : 1;
            if (order > 0 || (order == 0 && best != &candidate && precedes(candidate, *best))) {
                best = &candidate;
                best_score = score;
            }
        }
    }
    result.score = best ? best_score.value() : 0.0;
    if (best && best_score.num > 0 && result.score >= fuzzy_threshold) {
        result.matched = true;
        result.step_id = best->step_id;
        result.kind = MatchKind::Fuzzy;
    }
    return result;
}

ScenarioSelection select_scenario(const TokenSequence& utterance,
                                  const std::map<std::string, std::string>& registry) {
    ScenarioSelection selection;
    for (const auto& token : utterance.tokens) {
        auto it = registry.find(token);
        if (it == registry.end()) {
            // registry keys may carry uppercase when built by hand
            for (auto jt = registry.begin(); jt != registry.end(); ++jt) {
                std::string key = jt->first;
                std::transform(key.begin(), key.end(), key.begin(),
                               [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
                if (key == token) {
                    it = jt;
                    break;
                }
            }
        }
        if (it == registry.end()) continue;
        selection.keywords.push_back(token);
        if (!selection.scenario_id) selection.scenario_id = it->second;
    }
    return selection;
}

}  // namespace assist
