#include <doctest.h>

#include "assist/error.hpp"
#include "assist/report.hpp"
#include "assist/store.hpp"
#include "assist/transcript.hpp"
#include "support.hpp"

using namespace assist;

namespace {

TranscriptRunner runner_for(Mode mode, SessionStore* store = nullptr) {
    TranscriptSetup setup;
    setup.session_id = "w1";
    setup.trainee_id = "ann";
    setup.mode = mode;
    setup.start_at = 1704067200;
    return TranscriptRunner(testing::marchp_monitor(), setup, store);
}

std::vector<std::string> feed_script(TranscriptRunner& runner, const GroundTruthScript& script) {
    std::vector<std::string> said;
    for (const auto& line : script.lines) {
        for (auto& s : runner.feed("@" + format_number(line.at_offset) + " " + line.text)) said.push_back(s);
    }
    return said;
}

bool mentions(const std::vector<std::string>& said, const std::string& needle) {
    for (const auto& s : said)
        if (s.find(needle) != std::string::npos) return true;
    return false;
}

}  // namespace

TEST_SUITE("transcript") {

TEST_CASE("worked example scores 8.0") {
    TranscriptRunner runner = runner_for(Mode::Training);
    feed_script(runner, testing::perfect_script(*testing::marchp(), 5, 5));
    CHECK(runner.finished());
    runner.feed("!imp 8");
    const PscoreReport score = runner.score();
    CHECK(score.pscore == doctest::Approx(8.0).epsilon(1e-12));
    CHECK(runner.summary().task_time == 65);
    const std::string text = runner.summary_text();
    CHECK(text.find("Pscore: 8.0 = 10 - (0.5 time + 1.5 implementation + 0 recording)") != std::string::npos);
    CHECK(text.find("Implementation errors at ordinals: 8") != std::string::npos);
    CHECK(runner.summary_json()["score"]["pscore"].get<double>() == doctest::Approx(8.0));
}

TEST_CASE("perfect quick run scores 10.0") {
    TranscriptRunner runner = runner_for(Mode::Testing);
    const auto said = feed_script(runner, testing::perfect_script(*testing::marchp()));
    CHECK(said.size() == 13);
    for (const auto& s : said) CHECK(s.find("skipped") == std::string::npos);
    CHECK(runner.session().state == SessionState::Completed);
    CHECK(format_score(runner.score().pscore) == "10.0");
}

TEST_CASE("training prompts and testing silence") {
    GroundTruthScript skipped = testing::perfect_script(*testing::marchp());
    skipped.lines.erase(skipped.lines.begin());  // M1 never said

    TranscriptRunner training = runner_for(Mode::Training);
    const auto trained = feed_script(training, skipped);
    CHECK(mentions(trained, "You skipped M1"));

    TranscriptRunner testing_run = runner_for(Mode::Testing);
    const auto tested = feed_script(testing_run, skipped);
    CHECK_FALSE(mentions(tested, "You skipped"));
    CHECK(testing_run.summary().errors.size() == training.summary().errors.size());
    CHECK(testing_run.score().pscore == training.score().pscore);
    CHECK(testing_run.score().rec_penalty_total > 0);
}

TEST_CASE("unmatched speech asks for a retry") {
    TranscriptRunner runner = runner_for(Mode::Testing);
    CHECK(runner.feed("@1 purple elephants") == std::vector<std::string>{"assistant: Please try again."});
    CHECK(runner.feed("# a comment").empty());
    CHECK(runner.feed("   ").empty());
}

TEST_CASE("late lines are refused and abandon times out") {
    TranscriptRunner runner = runner_for(Mode::Training);
    runner.feed("@3 " + testing::marchp()->find_step("M1")->pattern_alternatives().front());
    const auto late = runner.feed("@120 anything");
    CHECK(mentions(late, "Time limit exceeded"));
    CHECK(runner.session().state == SessionState::Failed);
    CHECK(mentions(runner.feed("@121 more"), "already"));

    TranscriptRunner idle = runner_for(Mode::Training);
    idle.abandon();
    CHECK(idle.session().state == SessionState::Failed);
    CHECK(idle.summary().timed_out);
    CHECK(idle.score().failed);
}

TEST_CASE("implementation marks are persisted") {
    testing::TempDir dir;
    SessionStore store(dir.path());
    TranscriptRunner runner = runner_for(Mode::Training, &store);
    runner.feed("!imp 3");
    feed_script(runner, testing::perfect_script(*testing::marchp()));
    runner.feed("!imp 5");
    const auto records = store.load_session("w1");
    REQUIRE(records.size() >= 3);
    CHECK(records.back().type == RecordType::Assessment);
    CHECK(runner.implementation_errors() == std::vector<int>{3, 5});
    CHECK_THROWS_AS(runner.feed("!imp 14"), DomainError);
}

TEST_CASE("line syntax") {
    const TranscriptLine plain = parse_transcript_line("check the airway");
    CHECK(plain.kind == TranscriptLine::Kind::Utterance);
    CHECK_FALSE(plain.offset.has_value());
    CHECK(plain.text == "check the airway");

    const TranscriptLine timed = parse_transcript_line("  @12.5   check the airway ");
    CHECK(timed.offset == std::optional<double>(12.5));
    CHECK(timed.text == "check the airway");

    const TranscriptLine imp = parse_transcript_line("@4 !imp 8");
    CHECK(imp.kind == TranscriptLine::Kind::ImplementationError);
    CHECK(imp.ordinal == 8);

    CHECK(parse_transcript_line("# note").kind == TranscriptLine::Kind::Ignored);
    CHECK_THROWS_AS(parse_transcript_line("@abc hello"), DomainError);
    CHECK_THROWS_AS(parse_transcript_line("@-2 hello"), DomainError);
    CHECK_THROWS_AS(parse_transcript_line("!imp eight"), DomainError);
}

TEST_CASE("score formatting") {
    CHECK(format_score(8) == "8.0");
    CHECK(format_score(7.6) == "7.6");
    CHECK(format_score(-2.25) == "-2.25");
}

}  // TEST_SUITE
