#include "assist/scenario.hpp"

#include <algorithm>
#include <limits>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <variant>

#include <json.hpp>

namespace assist {

namespace {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;
using PathElement = std::variant<std::string, std::size_t>;
using JsonPath = std::vector<PathElement>;

std::string path_string(const JsonPath& path) {
    std::string out;
    for (const auto& element : path) {
        if (const auto* key = std::get_if<std::string>(&element)) {
            if (!out.empty()) out += '.';
            out += *key;
        } else {
            out += '[' + std::to_string(std::get<std::size_t>(element)) + ']';
        }
    }
    return out;
}

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t offset) {
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

// Walks already-validated JSON text to find where the value at `path` starts.
// Only used to attach a location to schema errors, so it assumes well-formed
// input and gives up (returns npos) on anything surprising.
class PathLocator {
public:
    explicit PathLocator(std::string_view text) : text_(text) {}

    std::size_t find(const JsonPath& path) {
        pos_ = 0;
        return locate(path, 0);
    }

private:
    static constexpr std::size_t npos = std::string_view::npos;

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    std::string read_string() {
        std::string out;
        ++pos_;  // opening quote
        while (pos_ < text_.size() && text_[pos_] != '"') {
            if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) {
                out += text_[pos_ + 1];
                pos_ += 2;
            } else {
                out += text_[pos_++];
            }
        }
        ++pos_;
        return out;
    }

    void skip_value() {
        skip_ws();
        if (pos_ >= text_.size()) return;
        const char c = text_[pos_];
        if (c == '"') {
            read_string();
        } else if (c == '{' || c == '[') {
            int depth = 0;
            while (pos_ < text_.size()) {
                const char d = text_[pos_];
                if (d == '"') {
                    read_string();
                    continue;
                }
                if (d == '{' || d == '[') ++depth;
                if (d == '}' || d == ']') --depth;
                ++pos_;
                if (depth == 0) break;
            }
        } else {
            while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != '}' &&
                   text_[pos_] != ']' && !std::isspace(static_cast<unsigned char>(text_[pos_])))
                ++pos_;
        }
    }

    std::size_t locate(const JsonPath& path, std::size_t depth) {
        skip_ws();
        if (depth == path.size()) return pos_;
        if (pos_ >= text_.size()) return npos;
        if (const auto* key = std::get_if<std::string>(&path[depth])) {
            if (text_[pos_] != '{') return npos;
            ++pos_;
            while (true) {
                skip_ws();
                if (pos_ >= text_.size() || text_[pos_] == '}') return npos;
                if (text_[pos_] == ',') {
                    ++pos_;
                    continue;
                }
                const std::string name = read_string();
                skip_ws();
                ++pos_;  // ':'
                if (name == *key) return locate(path, depth + 1);
                skip_value();
            }
        }
        const std::size_t index = std::get<std::size_t>(path[depth]);
        if (text_[pos_] != '[') return npos;
        ++pos_;
        for (std::size_t i = 0;; ++i) {
            skip_ws();
            if (pos_ >= text_.size() || text_[pos_] == ']') return npos;
            if (i == index) return locate(path, depth + 1);
            skip_value();
            skip_ws();
            if (pos_ < text_.size() && text_[pos_] == ',') ++pos_;
        }
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

class DocumentReader {
public:
    explicit DocumentReader(std::string_view text) : text_(text) {}

    [[noreturn]] void fail(const std::string& what, const JsonPath& path) const {
        PathLocator locator(text_);
        const std::size_t offset = locator.find(path);
        std::size_t line = 0;
        std::size_t column = 0;
        if (offset != std::string_view::npos) std::tie(line, column) = line_column(text_, offset);
        throw ParseError(what, line, column, path_string(path));
    }

    const Json& member(const Json& object, const std::string& key, JsonPath path) const {
        path.push_back(key);
        auto it = object.find(key);
        if (it == object.end()) {
            path.pop_back();
            fail("missing field '" + key + "'", path);
        }
        return *it;
    }

    std::string string_field(const Json& object, const std::string& key, JsonPath path) const {
        const Json& value = member(object, key, path);
        path.push_back(key);
        if (!value.is_string()) fail("expected string", path);
        return value.get<std::string>();
    }

    std::optional<std::string> link_field(const Json& object, const std::string& key,
                                          JsonPath path) const {
        auto it = object.find(key);
        if (it == object.end() || it->is_null()) return std::nullopt;
        path.push_back(key);
        if (!it->is_string()) fail("expected string or null", path);
        return it->get<std::string>();
    }

    double number_field(const Json& object, const std::string& key, JsonPath path) const {
        const Json& value = member(object, key, path);
        path.push_back(key);
        return number(value, path);
    }

    double number(const Json& value, const JsonPath& path) const {
        if (!value.is_number()) fail("expected number", path);
        const double v = value.get<double>();
        if (!std::isfinite(v)) fail("expected finite number", path);
        return v;
    }

    int integer_field(const Json& object, const std::string& key, JsonPath path) const {
        const Json& value = member(object, key, path);
        path.push_back(key);
        if (!value.is_number_integer()) fail("expected integer", path);
        const auto v = value.get<long long>();
        if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
            fail("integer out of range", path);
        return static_cast<int>(v);
    }

    void reject_unknown(const Json& object, const std::set<std::string>& known,
                        const JsonPath& path) const {
        for (auto it = object.begin(); it != object.end(); ++it) {
            if (!known.count(it.key())) {
                JsonPath where = path;
                where.push_back(it.key());
                fail("unknown field '" + it.key() + "'", where);
            }
        }
    }

private:
    std::string_view text_;
};

Json number_json(double v) {
    if (std::floor(v) == v && std::fabs(v) < 1e15) return Json(static_cast<long long>(v));
    return Json(v);
}

OrderedJson link_json(const std::optional<std::string>& link) {
    return link ? OrderedJson(*link) : OrderedJson(nullptr);
}

bool has_pattern_content(std::string_view alternative) {
    if (alternative.find("{Number}") != std::string_view::npos) return true;
    return std::any_of(alternative.begin(), alternative.end(),
                       [](unsigned char c) { return std::isalnum(c) || c >= 0x80; });
}

}  // namespace

std::string lowercase(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

ResponseSpec parse_acknowledgement(std::string_view column) {
    if (column.substr(0, 2) == "R@") return {ResponseKind::Statement, std::string(column.substr(2))};
    if (column.substr(0, 2) == "E@")
        return {ResponseKind::FollowUpQuestion, std::string(column.substr(2))};
    return {ResponseKind::Statement, std::string(column)};
}

std::string format_acknowledgement(const ResponseSpec& spec) {
    return (spec.kind == ResponseKind::FollowUpQuestion ? "E@" : "R@") + spec.text;
}

std::vector<std::string> Step::pattern_alternatives() const {
    std::vector<std::string> out;
    std::string current;
    for (const char c : patterns) {
        if (c == '/') {
            if (has_pattern_content(current)) out.push_back(current);
            current.clear();
        } else {
            current += c;
        }
    }
    if (has_pattern_content(current)) out.push_back(current);
    return out;
}

const Step& Scenario::step(const std::string& step_id) const {
    auto it = steps.find(step_id);
    if (it == steps.end()) throw NotFoundError("unknown step '" + step_id + "'");
    return it->second;
}

const Step* Scenario::find_step(std::string_view step_id) const {
    auto it = steps.find(std::string(step_id));
    return it == steps.end() ? nullptr : &it->second;
}

Scenario parse_scenario_document(std::string_view document) {
    if (std::all_of(document.begin(), document.end(),
                    [](unsigned char c) { return std::isspace(c); }))
        throw ParseError("empty scenario document", 1, 1);

    Json root;
    try {
        root = Json::parse(document.begin(), document.end());
    } catch (const Json::parse_error& e) {
        const auto [line, column] = line_column(document, e.byte > 0 ? e.byte - 1 : 0);
        throw ParseError(std::string("malformed JSON: ") + e.what(), line, column);
    }

    DocumentReader reader(document);
    if (!root.is_object()) reader.fail("scenario document must be a JSON object", {});
    reader.reject_unknown(root,
                          {"scenarioId", "title", "entryStepId", "idealTimeSeconds",
                           "criticalWindowSeconds", "timePenalty", "steps"},
                          {});

    Scenario scenario;
    scenario.scenario_id = reader.string_field(root, "scenarioId", {});
    scenario.title = reader.string_field(root, "title", {});
    scenario.entry_step_id = reader.string_field(root, "entryStepId", {});
    scenario.ideal_time = reader.number_field(root, "idealTimeSeconds", {});

    const Json& window = reader.member(root, "criticalWindowSeconds", {});
    if (!window.is_array() || window.size() != 2)
        reader.fail("expected [min, max]", {std::string("criticalWindowSeconds")});
    scenario.critical_window.min =
        reader.number(window[0], {std::string("criticalWindowSeconds"), std::size_t{0}});
    scenario.critical_window.max =
        reader.number(window[1], {std::string("criticalWindowSeconds"), std::size_t{1}});

    const Json& penalty = reader.member(root, "timePenalty", {});
    const JsonPath penalty_path{std::string("timePenalty")};
    if (!penalty.is_object()) reader.fail("expected object", penalty_path);
    reader.reject_unknown(
        penalty, {"baseline", "freeThreshold", "failThreshold", "rate", "failPenalty", "maxScore"},
        penalty_path);
    auto& tp = scenario.time_penalty;
    tp.baseline = reader.number_field(penalty, "baseline", penalty_path);
    tp.free_threshold = reader.number_field(penalty, "freeThreshold", penalty_path);
    tp.fail_threshold = reader.number_field(penalty, "failThreshold", penalty_path);
    tp.rate = reader.number_field(penalty, "rate", penalty_path);
    tp.fail_penalty = reader.number_field(penalty, "failPenalty", penalty_path);
    tp.max_score = reader.number_field(penalty, "maxScore", penalty_path);

    const Json& steps = reader.member(root, "steps", {});
    if (!steps.is_array()) reader.fail("expected array", {std::string("steps")});
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const JsonPath path{std::string("steps"), i};
        const Json& row = steps[i];
        if (!row.is_object()) reader.fail("expected object", path);
        reader.reject_unknown(row,
                              {"stepId", "ordinal", "acknowledgement", "condition", "correction",
                               "patterns", "next", "prev", "implPenalty", "recPenalty", "note"},
                              path);
        Step step;
        step.step_id = reader.string_field(row, "stepId", path);
        if (step.step_id.empty()) reader.fail("empty stepId", path);
        step.ordinal = reader.integer_field(row, "ordinal", path);
        step.acknowledgement = parse_acknowledgement(reader.string_field(row, "acknowledgement", path));
        step.condition_step_id = reader.link_field(row, "condition", path);
        step.correction_step_id = reader.link_field(row, "correction", path);
        step.patterns = reader.string_field(row, "patterns", path);
        step.next_step_id = reader.link_field(row, "next", path);
        step.prev_step_id = reader.link_field(row, "prev", path);
        step.impl_penalty = reader.number_field(row, "implPenalty", path);
        step.rec_penalty = reader.number_field(row, "recPenalty", path);
        step.note = reader.link_field(row, "note", path);

        const std::string id = step.step_id;
        if (!scenario.steps.emplace(id, std::move(step)).second)
            throw SchemaError("duplicate stepId '" + id + "' at steps[" + std::to_string(i) + "]");
    }
    return scenario;
}

std::string serialize_scenario(const Scenario& scenario) {
    std::vector<const Step*> ordered;
    ordered.reserve(scenario.steps.size());
    for (const auto& [id, step] : scenario.steps) ordered.push_back(&step);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const Step* a, const Step* b) { return a->ordinal < b->ordinal; });

    OrderedJson root;
    root["scenarioId"] = scenario.scenario_id;
    root["title"] = scenario.title;
    root["entryStepId"] = scenario.entry_step_id;
    root["idealTimeSeconds"] = number_json(scenario.ideal_time);
    root["criticalWindowSeconds"] = OrderedJson::array(
        {number_json(scenario.critical_window.min), number_json(scenario.critical_window.max)});
    const auto& tp = scenario.time_penalty;
    OrderedJson penalty;
    penalty["baseline"] = number_json(tp.baseline);
    penalty["freeThreshold"] = number_json(tp.free_threshold);
    penalty["failThreshold"] = number_json(tp.fail_threshold);
    penalty["rate"] = number_json(tp.rate);
    penalty["failPenalty"] = number_json(tp.fail_penalty);
    penalty["maxScore"] = number_json(tp.max_score);
    root["timePenalty"] = std::move(penalty);

    OrderedJson steps = OrderedJson::array();
    for (const Step* step : ordered) {
        OrderedJson row;
        row["stepId"] = step->step_id;
        row["ordinal"] = step->ordinal;
        row["acknowledgement"] = format_acknowledgement(step->acknowledgement);
        row["condition"] = link_json(step->condition_step_id);
        row["correction"] = link_json(step->correction_step_id);
        row["patterns"] = step->patterns;
        row["next"] = link_json(step->next_step_id);
        row["prev"] = link_json(step->prev_step_id);
        row["implPenalty"] = number_json(step->impl_penalty);
        row["recPenalty"] = number_json(step->rec_penalty);
        if (step->note) row["note"] = *step->note;
        steps.push_back(std::move(row));
    }
    root["steps"] = std::move(steps);
    return root.dump(2) + "\n";
}

Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open scenario file '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_scenario_document(buffer.str());
}

std::string_view to_string(ViolationRule rule) {
    switch (rule) {
        case ViolationRule::EntryMissing: return "EntryMissing";
        case ViolationRule::EntryHasCondition: return "EntryHasCondition";
        case ViolationRule::DanglingLink: return "DanglingLink";
        case ViolationRule::CycleDetected: return "CycleDetected";
        case ViolationRule::UnreachableStep: return "UnreachableStep";
        case ViolationRule::PrevLinkMismatch: return "PrevLinkMismatch";
        case ViolationRule::DuplicateOrdinal: return "DuplicateOrdinal";
        case ViolationRule::OrdinalOutOfRange: return "OrdinalOutOfRange";
        case ViolationRule::OrdinalOrder: return "OrdinalOrder";
        case ViolationRule::EmptyPatterns: return "EmptyPatterns";
        case ViolationRule::PenaltyOrder: return "PenaltyOrder";
        case ViolationRule::InvalidTimePenalty: return "InvalidTimePenalty";
        case ViolationRule::InvalidCriticalWindow: return "InvalidCriticalWindow";
    }
    return "Unknown";
}

std::vector<Violation> validate_scenario(const Scenario& scenario) {
    std::vector<Violation> out;
    auto add = [&](const std::string& step_id, ViolationRule rule, std::string detail) {
        out.push_back({step_id, rule, std::move(detail)});
    };

    const auto& tp = scenario.time_penalty;
    if (!(tp.baseline < tp.free_threshold && tp.free_threshold < tp.fail_threshold) ||
        !(tp.rate > 0) || tp.fail_penalty < 0)
        add("", ViolationRule::InvalidTimePenalty,
            "need baseline < freeThreshold < failThreshold, rate > 0, failPenalty >= 0");
    if (scenario.critical_window.min < 0 ||
        scenario.critical_window.min > scenario.critical_window.max)
        add("", ViolationRule::InvalidCriticalWindow, "need 0 <= min <= max");

    const int count = static_cast<int>(scenario.steps.size());
    std::map<int, std::string> by_ordinal;
    for (const auto& [id, step] : scenario.steps) {
        const std::pair<const char*, const std::optional<std::string>*> links[] = {
            {"next", &step.next_step_id},
            {"prev", &step.prev_step_id},
            {"condition", &step.condition_step_id},
            {"correction", &step.correction_step_id},
        };
        for (const auto& [field, link] : links) {
            if (*link && !scenario.steps.count(**link))
                add(id, ViolationRule::DanglingLink,
                    std::string(field) + " names unknown step '" + **link + "'");
        }
        if (step.ordinal < 1 || step.ordinal > count)
            add(id, ViolationRule::OrdinalOutOfRange,
                "ordinal " + std::to_string(step.ordinal) + " outside 1.." + std::to_string(count));
        auto [it, inserted] = by_ordinal.emplace(step.ordinal, id);
        if (!inserted)
            add(id, ViolationRule::DuplicateOrdinal,
                "ordinal " + std::to_string(step.ordinal) + " also used by " + it->second);
        if (step.pattern_alternatives().empty())
            add(id, ViolationRule::EmptyPatterns, "no utterance pattern alternatives");
        if (step.rec_penalty < 0 || step.impl_penalty < step.rec_penalty)
            add(id, ViolationRule::PenaltyOrder, "need implPenalty >= recPenalty >= 0");
    }

    const Step* entry = scenario.find_step(scenario.entry_step_id);
    if (!entry) {
        add(scenario.entry_step_id, ViolationRule::EntryMissing,
            "entry step '" + scenario.entry_step_id + "' not found");
        return out;
    }
    if (entry->condition_step_id)
        add(entry->step_id, ViolationRule::EntryHasCondition, "entry step must not have a condition");
    if (entry->prev_step_id)
        add(entry->step_id, ViolationRule::PrevLinkMismatch, "entry step must not have a prev link");

    std::set<std::string> visited;
    const Step* previous = nullptr;
    bool cycle = false;
    for (const Step* step = entry; step != nullptr;) {
        visited.insert(step->step_id);
        if (previous) {
            if (step->prev_step_id != previous->step_id)
                add(step->step_id, ViolationRule::PrevLinkMismatch,
                    "prev should be '" + previous->step_id + "'");
            if (step->ordinal <= previous->ordinal)
                add(step->step_id, ViolationRule::OrdinalOrder,
                    "ordinal does not increase along next links");
        }
        if (!step->next_step_id) break;
        const Step* next = scenario.find_step(*step->next_step_id);
        if (!next) break;
        if (visited.count(next->step_id)) {
            add(step->step_id, ViolationRule::CycleDetected,
                "next link returns to '" + next->step_id + "'");
            cycle = true;
            break;
        }
        previous = step;
        step = next;
    }
    if (!cycle) {
        for (const auto& [id, step] : scenario.steps) {
            if (!visited.count(id))
                add(id, ViolationRule::UnreachableStep, "not on the chain from the entry step");
        }
    }
    return out;
}

ScenarioValidationError::ScenarioValidationError(std::vector<Violation> violations)
    : SchemaError([&] {
          std::string what = "scenario failed validation:";
          for (const auto& v : violations) {
              what += " ";
              what += to_string(v.rule);
              if (!v.step_id.empty()) what += "(" + v.step_id + ")";
          }
          return what;
      }()),
      violations_(std::move(violations)) {}

std::vector<const Step*> linearize(const Scenario& scenario) {
    std::vector<const Step*> chain;
    std::set<std::string> visited;
    const Step* step = scenario.find_step(scenario.entry_step_id);
    if (!step) throw SchemaError("entry step '" + scenario.entry_step_id + "' not found");
    while (step) {
        if (!visited.insert(step->step_id).second)
            throw SchemaError("cycle through step '" + step->step_id + "'");
        chain.push_back(step);
        if (!step->next_step_id) break;
        const Step* next = scenario.find_step(*step->next_step_id);
        if (!next)
            throw SchemaError("step '" + step->step_id + "' links to unknown step '" +
                              *step->next_step_id + "'");
        step = next;
    }
    return chain;
}

StepPenalties step_penalties(const Scenario& scenario, int ordinal) {
    if (ordinal < 1 || ordinal > static_cast<int>(scenario.step_count()))
        throw DomainError("ordinal " + std::to_string(ordinal) + " outside 1.." +
                          std::to_string(scenario.step_count()));
    for (const auto& [id, step] : scenario.steps) {
        if (step.ordinal == ordinal) return {step.impl_penalty, step.rec_penalty};
    }
    throw DomainError("no step with ordinal " + std::to_string(ordinal));
}

std::shared_ptr<const Scenario> ScenarioRegistry::add(Scenario scenario) {
    auto violations = validate_scenario(scenario);
    if (!violations.empty()) throw ScenarioValidationError(std::move(violations));
    const std::string key = lowercase(scenario.scenario_id);
    auto shared = std::make_shared<const Scenario>(std::move(scenario));
    std::unique_lock lock(mutex_);
    by_id_[key] = shared;
    keywords_[key] = key;
    return shared;
}

void ScenarioRegistry::add_keyword(std::string keyword, std::string scenario_id) {
    std::unique_lock lock(mutex_);
    keywords_[lowercase(keyword)] = lowercase(scenario_id);
}

std::shared_ptr<const Scenario> ScenarioRegistry::find(std::string_view scenario_id) const {
    std::shared_lock lock(mutex_);
    auto it = by_id_.find(lowercase(scenario_id));
    return it == by_id_.end() ? nullptr : it->second;
}

std::shared_ptr<const Scenario> ScenarioRegistry::get(std::string_view scenario_id) const {
    auto found = find(scenario_id);
    if (!found) throw NotFoundError("unknown scenario '" + std::string(scenario_id) + "'");
    return found;
}

std::vector<std::shared_ptr<const Scenario>> ScenarioRegistry::all() const {
    std::shared_lock lock(mutex_);
    std::vector<std::shared_ptr<const Scenario>> out;
    for (const auto& [id, scenario] : by_id_) out.push_back(scenario);
    return out;
}

std::map<std::string, std::string> ScenarioRegistry::keywords() const {
    std::shared_lock lock(mutex_);
    return keywords_;
}

}  // namespace assist
