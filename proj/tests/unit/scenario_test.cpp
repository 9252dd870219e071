#include <doctest.h>

#include <random>

#include "assist/error.hpp"
#include "assist/scenario.hpp"
#include "support.hpp"

using namespace assist;

namespace {

Step make_step(std::string id, int ordinal, std::optional<std::string> prev, std::optional<std::string> next) {
    Step s;
    s.step_id = std::move(id);
    s.ordinal = ordinal;
    s.acknowledgement = {ResponseKind::Statement, "Ok"};
    s.patterns = "step " + std::to_string(ordinal);
    s.prev_step_id = prev;
    s.condition_step_id = prev;
    s.correction_step_id = prev;
    s.next_step_id = next;
    s.impl_penalty = 1;
    s.rec_penalty = 0.5;
    return s;
}

Scenario chain(int n) {
    Scenario s;
    s.scenario_id = "chain";
    s.title = "Chain";
    s.entry_step_id = "S1";
    for (int i = 1; i <= n; ++i) {
        std::optional<std::string> prev = i > 1 ? std::optional("S" + std::to_string(i - 1)) : std::nullopt;
        std::optional<std::string> next = i < n ? std::optional("S" + std::to_string(i + 1)) : std::nullopt;
        s.steps.emplace("S" + std::to_string(i), make_step("S" + std::to_string(i), i, prev, next));
    }
    return s;
}

bool has_rule(const std::vector<Violation>& vs, ViolationRule rule) {
    for (const auto& v : vs)
        if (v.rule == rule) return true;
    return false;
}

std::string random_word(std::mt19937_64& rng) {
    static const char* const words[] = {"apply", "check", "pulse", "left", "leg", "tourniquet", "wound",
                                        "assess", "airway", "the", "for", "bleeding", "pressure"};
    return words[rng() % std::size(words)];
}

Scenario random_scenario(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> weight(0.0, 3.0);
    const int n = 1 + static_cast<int>(rng() % 13);
    Scenario s = chain(n);
    s.scenario_id = "Gen" + std::to_string(rng() % 1000);
    s.title = random_word(rng) + " \"quoted\" title";
    s.ideal_time = 20 + static_cast<double>(rng() % 40);
    s.critical_window = {60, 90.5};
    s.time_penalty.rate = 0.01 + static_cast<double>(rng() % 5) / 100;
    for (auto& [id, step] : s.steps) {
        const double a = weight(rng);
        const double b = weight(rng);
        step.impl_penalty = std::max(a, b);
        step.rec_penalty = std::min(a, b);
        step.acknowledgement = {rng() % 3 == 0 ? ResponseKind::FollowUpQuestion : ResponseKind::Statement,
                                random_word(rng) + "?"};
        std::string patterns;
        const int alternatives = 1 + static_cast<int>(rng() % 3);
        for (int k = 0; k < alternatives; ++k) {
            if (k) patterns += "/";
            patterns += random_word(rng) + " " + random_word(rng);
            if (rng() % 5 == 0) patterns += " {Number} units";
        }
        step.patterns = patterns;
        if (rng() % 4 == 0) step.note = "note " + random_word(rng);
        if (rng() % 3 == 0) step.correction_step_id.reset();
    }
    return s;
}

}  // namespace

TEST_SUITE("scenario") {

TEST_CASE("acknowledgement prefixes") {
    CHECK(parse_acknowledgement("R@Ok") == ResponseSpec{ResponseKind::Statement, "Ok"});
    CHECK(parse_acknowledgement("E@Did bleeding stop?") ==
          ResponseSpec{ResponseKind::FollowUpQuestion, "Did bleeding stop?"});
    CHECK(parse_acknowledgement("Plain text") == ResponseSpec{ResponseKind::Statement, "Plain text"});
    CHECK(format_acknowledgement({ResponseKind::FollowUpQuestion, "Q"}) == "E@Q");
}

TEST_CASE("shipped MARCHp rows") {
    const auto& s = *testing::marchp();
    const Step& m1 = s.step("M1");
    CHECK(m1.acknowledgement == ResponseSpec{ResponseKind::Statement, "Ok"});
    CHECK_FALSE(m1.condition_step_id.has_value());
    CHECK(m1.next_step_id == std::optional<std::string>("M2"));
    const auto alternatives = m1.pattern_alternatives();
    REQUIRE(alternatives.size() >= 2);
    CHECK(alternatives[0] == "Assessing for the hemorrhage");
    CHECK(alternatives[1] == "Checking for hemorrhage");

    const Step& m6 = s.step("M6");
    CHECK(m6.acknowledgement == ResponseSpec{ResponseKind::FollowUpQuestion, "Did bleeding stop?"});
    CHECK(m6.condition_step_id == std::optional<std::string>("M5"));
    CHECK(m6.prev_step_id == std::optional<std::string>("M5"));
    CHECK(m6.next_step_id == std::optional<std::string>("M7"));

    CHECK(validate_scenario(s).empty());
    CHECK(s.step_count() == 13);
    CHECK(s.ideal_time == 40);
    CHECK(s.critical_window == CriticalWindow{65, 95});
}

TEST_CASE("empty and malformed documents are parse errors") {
    CHECK_THROWS_AS(parse_scenario_document(""), ParseError);
    CHECK_THROWS_AS(parse_scenario_document("{\"scenarioId\": "), ParseError);
    try {
        parse_scenario_document("{\n  \"scenarioId\": 5\n}");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() >= 1);
        CHECK_FALSE(e.field().empty());
    }
}

TEST_CASE("duplicate step ids are a schema error") {
    std::string doc = serialize_scenario(chain(2));
    const auto first = doc.find("\"stepId\": \"S2\"");
    REQUIRE(first != std::string::npos);
    doc.replace(first, std::string("\"stepId\": \"S2\"").size(), "\"stepId\": \"S1\"");
    CHECK_THROWS_AS(parse_scenario_document(doc), SchemaError);
}

TEST_CASE("validator counterexamples") {
    SUBCASE("cycle") {
        Scenario s = chain(4);
        s.steps.at("S3").next_step_id = "S1";
        CHECK(has_rule(validate_scenario(s), ViolationRule::CycleDetected));
        CHECK_THROWS_AS(linearize(s), SchemaError);
    }
    SUBCASE("entry with a condition") {
        Scenario s = chain(3);
        s.steps.at("S1").condition_step_id = "S2";
        const auto vs = validate_scenario(s);
        REQUIRE(has_rule(vs, ViolationRule::EntryHasCondition));
        CHECK(vs.front().step_id == "S1");
    }
    SUBCASE("dangling link") {
        Scenario s = chain(3);
        s.steps.at("S2").correction_step_id = "S9";
        CHECK(has_rule(validate_scenario(s), ViolationRule::DanglingLink));
    }
    SUBCASE("missing entry") {
        Scenario s = chain(3);
        s.entry_step_id = "S0";
        CHECK(has_rule(validate_scenario(s), ViolationRule::EntryMissing));
    }
    SUBCASE("duplicate ordinal") {
        Scenario s = chain(3);
        s.steps.at("S3").ordinal = 2;
        CHECK(has_rule(validate_scenario(s), ViolationRule::DuplicateOrdinal));
    }
    SUBCASE("empty patterns") {
        Scenario s = chain(3);
        s.steps.at("S2").patterns = "/";
        CHECK(has_rule(validate_scenario(s), ViolationRule::EmptyPatterns));
    }
    SUBCASE("penalty order") {
        Scenario s = chain(3);
        s.steps.at("S2").rec_penalty = 3;
        CHECK(has_rule(validate_scenario(s), ViolationRule::PenaltyOrder));
    }
    SUBCASE("time penalty thresholds") {
        Scenario s = chain(3);
        s.time_penalty.free_threshold = 30;
        CHECK(has_rule(validate_scenario(s), ViolationRule::InvalidTimePenalty));
    }
    SUBCASE("unreachable step") {
        Scenario s = chain(3);
        s.steps.emplace("X", make_step("X", 4, std::nullopt, std::nullopt));
        CHECK(has_rule(validate_scenario(s), ViolationRule::UnreachableStep));
    }
}

TEST_CASE("linearize") {
    const auto order = linearize(*testing::marchp());
    REQUIRE(order.size() == 13);
    CHECK(order.front()->step_id == "M1");
    for (std::size_t i = 1; i < order.size(); ++i) CHECK(order[i]->ordinal > order[i - 1]->ordinal);

    const auto single = linearize(chain(1));
    REQUIRE(single.size() == 1);
    CHECK(single[0]->step_id == "S1");
}

TEST_CASE("prev links walked backwards give the same chain") {
    const Scenario& s = *testing::marchp();
    const auto order = linearize(s);
    std::vector<std::string> backwards;
    std::optional<std::string> at = order.back()->step_id;
    while (at) {
        backwards.insert(backwards.begin(), *at);
        at = s.step(*at).prev_step_id;
    }
    REQUIRE(backwards.size() == order.size());
    for (std::size_t i = 0; i < order.size(); ++i) CHECK(backwards[i] == order[i]->step_id);
}

TEST_CASE("step penalties by ordinal") {
    const Scenario& s = *testing::marchp();
    CHECK(step_penalties(s, 3).impl_penalty == 2);
    CHECK(step_penalties(s, 3).rec_penalty == 2);
    CHECK(step_penalties(s, 8).impl_penalty == 1.5);
    CHECK(step_penalties(s, 8).rec_penalty == 1);
    CHECK(step_penalties(s, 13).impl_penalty == 1);
    CHECK(step_penalties(s, 13).rec_penalty == 0.5);
    CHECK_THROWS_AS(step_penalties(s, 0), DomainError);
    CHECK_THROWS_AS(step_penalties(s, 14), DomainError);
}

TEST_CASE("worst case penalties exceed the maximum score") {
    const Scenario& s = *testing::marchp();
    double total = 0;
    for (const auto& [id, step] : s.steps) total += step.impl_penalty + step.rec_penalty;
    CHECK(total > s.time_penalty.max_score);
}

TEST_CASE("shipped file is in canonical form") {
    const std::string text = testing::read_file(testing::marchp_path());
    CHECK(serialize_scenario(parse_scenario_document(text)) == text);
}

TEST_CASE("round trip over generated scenarios") {
    std::mt19937_64 rng(20240101);
    for (int i = 0; i < 300; ++i) {
        const Scenario s = random_scenario(rng);
        INFO("case " << i);
        REQUIRE(validate_scenario(s).empty());
        const std::string text = serialize_scenario(s);
        const Scenario back = parse_scenario_document(text);
        CHECK(back == s);
        CHECK(serialize_scenario(back) == text);
    }
}

TEST_CASE("unknown fields are rejected") {
    std::string doc = serialize_scenario(chain(2));
    doc.insert(doc.find('{') + 1, "\n  \"colour\": \"red\",");
    CHECK_THROWS_AS(parse_scenario_document(doc), ParseError);
}

TEST_CASE("registry ids are case-insensitive, step ids are not") {
    ScenarioRegistry registry;
    registry.add(*testing::marchp());
    CHECK(registry.find("MARCHP") != nullptr);
    CHECK(registry.find("MarchP") != nullptr);
    CHECK(registry.find("other") == nullptr);
    CHECK(registry.get("marchp")->find_step("m1") == nullptr);
    CHECK_THROWS_AS(registry.get("other"), NotFoundError);

    Scenario bad = chain(3);
    bad.steps.at("S3").next_step_id = "S1";
    CHECK_THROWS_AS(registry.add(bad), ScenarioValidationError);
}

}  // TEST_SUITE
