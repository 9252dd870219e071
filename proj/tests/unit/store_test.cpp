#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "assist/error.hpp"
#include "assist/replay.hpp"
#include "assist/store.hpp"
#include "assist/transcript.hpp"
#include "support.hpp"

using namespace assist;
namespace fs = std::filesystem;

namespace {

constexpr double kStart = 1704067200;  // 2024-01-01T00:00:00Z

// Runs "step id" lines (or free text) through a transcript runner that
// persists to the store. Lines are one second apart.
Session run(SessionStore& store, const std::string& session_id, const std::string& trainee,
            const std::vector<std::string>& steps, double start = kStart) {
    TranscriptSetup setup;
    setup.session_id = session_id;
    setup.trainee_id = trainee;
    setup.start_at = start;
    TranscriptRunner runner(testing::marchp_monitor(), setup, &store);
    double at = 0;
    for (const auto& s : steps) {
        const Step* step = testing::marchp()->find_step(s);
        runner.feed("@" + std::to_string(at += 1) + " " + (step ? step->pattern_alternatives().front() : s));
    }
    runner.abandon();
    return runner.session();
}

std::vector<std::string> all_steps_except(std::initializer_list<std::string> skipped) {
    std::vector<std::string> out;
    for (int i = 1; i <= 13; ++i) {
        const std::string id = "M" + std::to_string(i);
        if (std::find(skipped.begin(), skipped.end(), id) == skipped.end()) out.push_back(id);
    }
    return out;
}

fs::path day_file(const fs::path& dir) { return dir / "events" / (utc_day(kStart) + ".jsonl"); }

EventRecord started(const std::string& id) {
    Session s = testing::marchp_monitor()->start(id, "t1", Mode::Training, kStart);
    return started_record(s);
}

}  // namespace

TEST_SUITE("store") {

TEST_CASE("utc day") {
    CHECK(utc_day(kStart) == "2024-01-01");
    CHECK(utc_day(kStart - 1) == "2023-12-31");
    CHECK(utc_day(0) == "1970-01-01");
}

TEST_CASE("sequence rules") {
    testing::TempDir dir;
    SessionStore store(dir.path());
    EventRecord first = started("s1");
    store.append(first);
    CHECK(store.last_seq("s1") == 1);
    CHECK_THROWS_AS(store.append(first), OrderingError);

    EventRecord gap = first;
    gap.seq = 3;
    gap.type = RecordType::Completed;
    gap.payload = Json::object();
    CHECK_THROWS_AS(store.append(gap), OrderingError);

    EventRecord not_started = gap;
    not_started.session_id = "s2";
    not_started.seq = 1;
    CHECK_THROWS_AS(store.append(not_started), StateError);

    CHECK_THROWS_AS(store.load_session("nobody"), NotFoundError);
    CHECK_FALSE(store.has_session("nobody"));
}

TEST_CASE("empty store has no sessions") {
    testing::TempDir dir;
    SessionStore store(dir.path() / "fresh");
    CHECK(store.session_ids().empty());
    CHECK_THROWS_AS(store.load_session("s1"), NotFoundError);
}

TEST_CASE("records read back bit-identically") {
    testing::TempDir dir;
    std::vector<EventRecord> written;
    {
        SessionStore store(dir.path());
        run(store, "s1", "t1", all_steps_except({"M4"}));
        written = store.load_session("s1");
    }
    SessionStore reopened(dir.path());
    CHECK(reopened.load_session("s1") == written);
    for (std::size_t i = 0; i < written.size(); ++i) CHECK(written[i].seq == static_cast<long long>(i + 1));
}

TEST_CASE("torn final line is dropped on open") {
    testing::TempDir dir;
    {
        SessionStore store(dir.path());
        run(store, "s1", "t1", {"M1", "M2", "M3"});
    }
    const fs::path file = day_file(dir.path());
    const std::string intact = testing::read_file(file);
    const auto records = SessionStore(dir.path()).load_session("s1");

    // Cut the last line at every possible point.
    const std::size_t last_start = intact.rfind('\n', intact.size() - 2) + 1;
    for (std::size_t cut = last_start + 1; cut < intact.size(); cut += 7) {
        testing::write_file(file, intact.substr(0, cut));
        SessionStore store(dir.path());
        const auto loaded = store.load_session("s1");
        REQUIRE(loaded.size() == records.size() - 1);
        for (std::size_t i = 0; i < loaded.size(); ++i) CHECK(loaded[i] == records[i]);
        CHECK(testing::read_file(file) == intact.substr(0, last_start));
        // The lost record can be written again.
        store.append(records.back());
        CHECK(store.load_session("s1") == records);
        CHECK(testing::read_file(file) == intact);
    }
}

TEST_CASE("damage before the last line is an error") {
    testing::TempDir dir;
    {
        SessionStore store(dir.path());
        run(store, "s1", "t1", {"M1", "M2"});
    }
    const fs::path file = day_file(dir.path());
    std::string text = testing::read_file(file);
    text.insert(text.find('\n') + 1, "{not json}\n");
    testing::write_file(file, text);
    CHECK_THROWS_AS(SessionStore{dir.path()}, ParseError);
}

TEST_CASE("appends never rewrite earlier bytes") {
    testing::TempDir dir;
    SessionStore store(dir.path());
    run(store, "s1", "t1", {"M1", "M2"});
    const std::string before = testing::read_file(day_file(dir.path()));
    run(store, "s2", "t2", all_steps_except({}));
    const std::string after = testing::read_file(day_file(dir.path()));
    CHECK(after.size() > before.size());
    CHECK(after.compare(0, before.size(), before) == 0);
}

TEST_CASE("interleaved sessions load separately") {
    testing::TempDir dir;
    SessionStore store(dir.path());
    const auto& monitor = *testing::marchp_monitor();
    Session a = monitor.start("a", "t1", Mode::Training, kStart);
    Session b = monitor.start("b", "t2", Mode::Testing, kStart);
    store.append(started_record(a));
    store.append(started_record(b));
    long long seq_a = 1, seq_b = 1;
    for (const Step* step : monitor.chain()) {
        const double at = kStart + step->ordinal;
        const std::string text = step->pattern_alternatives().front();
        for (auto* pair : {&a, &b}) {
            long long& seq = pair == &a ? seq_a : seq_b;
            const auto out = monitor.handle_utterance(*pair, text, at);
            for (const auto& r : utterance_records(*pair, seq + 1, text, at, out)) {
                store.append(r);
                ++seq;
            }
        }
    }
    CHECK(store.session_ids() == std::vector<std::string>{"a", "b"});
    for (const auto* s : {&a, &b}) {
        const auto records = store.load_session(s->session_id);
        for (const auto& r : records) CHECK(r.session_id == s->session_id);
        const StoredSession back = replay_records(records, monitor);
        CHECK(back.session == *s);
        CHECK(testing::summary_bytes(monitor.finalize(back.session)) ==
              testing::summary_bytes(monitor.finalize(*s)));
    }
    EventRecord late = started_record(a);
    late.seq = seq_a + 1;
    late.type = RecordType::Event;
    CHECK_THROWS_AS(store.append(late), StateError);
    CHECK_NOTHROW(store.append(assessment_record("a", seq_a + 1, kStart + 50, {8})));
    CHECK(replay_records(store.load_session("a"), monitor).implementation_error_ordinals ==
          std::optional<std::vector<int>>(std::vector<int>{8}));
}

TEST_CASE("replay rebuilds noisy sessions exactly") {
    testing::TempDir dir;
    SessionStore store(dir.path());
    const auto& monitor = *testing::marchp_monitor();
    std::mt19937_64 rng(77);
    for (int i = 0; i < 60; ++i) {
        const std::string id = "n" + std::to_string(i);
        TranscriptSetup setup;
        setup.session_id = id;
        setup.trainee_id = "t" + std::to_string(i % 4);
        setup.mode = i % 2 ? Mode::Testing : Mode::Training;
        setup.start_at = kStart + 1000.0 * i;
        TranscriptRunner runner(testing::marchp_monitor(), setup, &store);
        for (const auto& line : testing::noisy_script(monitor.scenario(), rng)) {
            if (runner.finished()) break;
            runner.feed("@" + std::to_string(line.offset) + " " + line.text);
        }
        runner.abandon();
        const StoredSession back = replay_records(store.load_session(id), monitor);
        CHECK(back.session == runner.session());
    }
}

TEST_CASE("replay refuses a log that disagrees with the monitor") {
    testing::TempDir dir;
    SessionStore store(dir.path());
    run(store, "s1", "t1", {"M1", "M2", "M3"});
    auto records = store.load_session("s1");
    records[2].payload["advancedTo"] = "M9";
    CHECK_THROWS_AS(replay_records(records, *testing::marchp_monitor()), StateError);
}

TEST_CASE("trainees") {
    testing::TempDir dir;
    {
        SessionStore store(dir.path());
        store.add_trainee({"t1", "Ann", TraineeGroup::Experiment, {}});
        CHECK_NOTHROW(store.add_trainee({"t1", "Ann", TraineeGroup::Experiment, {}}));
        CHECK_THROWS_AS(store.add_trainee({"t1", "Ann", TraineeGroup::Control, {}}), ConflictError);
        run(store, "s1", "t1", {"M1"});
    }
    SessionStore store(dir.path());
    const auto t1 = store.find_trainee("t1");
    REQUIRE(t1.has_value());
    CHECK(t1->group == TraineeGroup::Experiment);
    CHECK(t1->sessions == std::vector<std::string>{"s1"});
    CHECK_FALSE(store.find_trainee("t2").has_value());
}

TEST_CASE("frequent errors") {
    testing::TempDir dir;
    SessionStore store(dir.path());
    ScenarioRegistry registry;
    registry.add(*testing::marchp());
    store.add_trainee({"t1", "", TraineeGroup::Control, {}});
    store.add_trainee({"t2", "", TraineeGroup::Control, {}});
    store.add_trainee({"t3", "", TraineeGroup::Control, {}});
    for (int i = 0; i < 3; ++i) run(store, "a" + std::to_string(i), "t1", all_steps_except({"M3"}));
    run(store, "b", "t1", all_steps_except({"M5"}));
    run(store, "c", "t2", all_steps_except({"M9"}));
    run(store, "d", "t2", all_steps_except({"M2"}));

    CHECK(store.frequent_errors("t1", registry) ==
          std::vector<ErrorFrequency>{{"marchp", "M3", 3, 3}, {"marchp", "M5", 5, 1}});
    CHECK(store.frequent_errors("t2", registry) ==
          std::vector<ErrorFrequency>{{"marchp", "M2", 2, 1}, {"marchp", "M9", 9, 1}});
    CHECK(store.frequent_errors("t3", registry).empty());
    CHECK_THROWS_AS(store.frequent_errors("nobody", registry), NotFoundError);

    // Counts add up to the trainee's error records.
    int total = 0;
    for (const auto& e : store.frequent_errors("t1", registry)) total += e.count;
    int errors = 0;
    for (const auto& id : {"a0", "a1", "a2", "b"})
        errors += static_cast<int>(replay_records(store.load_session(id), *testing::marchp_monitor()).session.errors.size());
    CHECK(total == errors);
}

TEST_CASE("scenarios saved with the data") {
    testing::TempDir dir;
    SessionStore store(dir.path());
    store.save_scenario(*testing::marchp());
    const auto loaded = SessionStore(dir.path()).load_scenarios();
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0] == *testing::marchp());
}

}  // TEST_SUITE
