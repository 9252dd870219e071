#include "assist/simulate.hpp"

#include <fstream>
#include <set>

#include "assist/error.hpp"
#include "assist/replay.hpp"

namespace fs = std::filesystem;

namespace assist {

namespace {

constexpr int kIterations = 3;

std::string two_digits(int n) {
    return n < 10 ? "0" + std::to_string(n) : std::to_string(n);
}

std::string trainee_id_for(const CohortPlan& cohort, int participant) {
    return cohort.id_prefix + "-p" + two_digits(participant);
}

std::string session_id_for(const CohortPlan& cohort, int participant, int iteration, Mode mode) {
    return trainee_id_for(cohort, participant) + (mode == Mode::Training ? "-train" : "-test") +
           std::to_string(iteration);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error("cannot write " + path.string());
}

template <typename T>
T required(const Json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) throw SchemaError(where + ": missing '" + key + "'");
    try {
        return it->get<T>();
    } catch (const Json::exception&) {
        throw SchemaError(where + ": '" + key + "' has the wrong type");
    }
}

template <typename T>
std::optional<T> optional_field(const Json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    try {
        return it->get<T>();
    } catch (const Json::exception&) {
        throw SchemaError(where + ": '" + key + "' has the wrong type");
    }
}

void check_rate(double rate, const char* name) {
    if (!(rate >= 0 && rate <= 1)) throw DomainError(std::string("noise ") + name + " must lie in [0, 1]");
}

}  // namespace

double NoiseSource::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t session_seed(std::uint64_t seed, std::string_view session_id) {
    std::uint64_t hash = 0xCBF29CE484222325ULL;
    for (const unsigned char c : session_id) {
        hash ^= c;
        hash *= 0x100000001B3ULL;
    }
    return splitmix64(seed ^ splitmix64(hash));
}

ScriptRun run_script(const ProcessMonitor& monitor, const GroundTruthScript& script, const SessionSetup& setup,
                     const NoiseModel* noise) {
    check_script(script, monitor.scenario());
    ScriptRun run;
    run.performed.name = script.name;
    Session& session = run.session;
    session = monitor.start(setup.session_id, setup.trainee_id, setup.mode, setup.start_at, setup.iteration);
    if (setup.suppress_corrections) session.suppress_corrections = *setup.suppress_corrections;
    run.records.push_back(started_record(session));

    NoiseSource rng(noise ? session_seed(noise->seed, setup.session_id) : 0);
    auto finished = [&] { return session.state != SessionState::Active; };
    Seconds shift = 0;

    for (const auto& line : script.lines) {
        if (finished()) break;
        for (int attempt = 0;; ++attempt) {
            const Seconds offset = line.at_offset + shift;
            const Seconds at = setup.start_at + offset;
            MatchResult match = monitor.recognize(session, line.text);
            if (noise) {
                const double u = rng.uniform();
                if (match.matched) {
                    if (u < noise->fn_rate) match = MatchResult{};
                } else if (u < noise->fp_rate && session.current_step_id) {
                    match = MatchResult{true, session.current_step_id, monitor.options().fuzzy_threshold, {},
                                        MatchKind::Fuzzy};
                }
            }
            const UtteranceOutcome outcome = monitor.apply(session, line.text, match, at);
            const auto records = utterance_records(session, static_cast<long long>(run.records.size()) + 1,
                                                   line.text, at, outcome);
            run.records.insert(run.records.end(), records.begin(), records.end());
            if (outcome.recorded) {
                ScriptLine performed = line;
                performed.at_offset = offset;
                if (attempt > 0) performed.implementation_error_ordinal.reset();
                run.performed.lines.push_back(std::move(performed));
            }
            const bool retry = noise && outcome.recorded && !finished() && line.scripted_accurate &&
                               outcome.response && outcome.response->kind == PromptKind::Retry &&
                               attempt + 1 < noise->max_attempts;
            if (!retry) break;
            shift += noise->retry_delay;
        }
    }

    if (!finished()) {
        const Seconds last = session.events.empty() ? session.started_at : session.events.back().at;
        const Seconds at = std::max(last, session.started_at + monitor.scenario().time_penalty.fail_threshold) + 1.0;
        monitor.check_timeout(session, at);
        run.records.push_back(timeout_record(session, static_cast<long long>(run.records.size()) + 1, at));
    }

    std::vector<int> implementation;
    for (const auto& l : run.performed.lines) {
        if (l.implementation_error_ordinal) implementation.push_back(*l.implementation_error_ordinal);
    }
    if (!implementation.empty())
        run.records.push_back(assessment_record(session.session_id, static_cast<long long>(run.records.size()) + 1,
                                                session.ended_at.value_or(session.started_at), implementation));
    return run;
}

SimulationPlan parse_plan(const Json& j) {
    if (!j.is_object()) throw SchemaError("plan must be a JSON object");
    SimulationPlan plan;
    plan.scenario_id = required<std::string>(j, "scenarioId", "plan");
    plan.scenario_file = optional_field<std::string>(j, "scenarioFile", "plan");
    plan.start_time = optional_field<double>(j, "startTime", "plan").value_or(plan.start_time);
    plan.session_gap = optional_field<double>(j, "sessionGap", "plan").value_or(plan.session_gap);
    if (!(plan.session_gap > 0)) throw DomainError("plan: sessionGap must be positive");

    if (auto n = j.find("noise"); n != j.end() && !n->is_null()) {
        NoiseModel noise;
        noise.fn_rate = optional_field<double>(*n, "fnRate", "noise").value_or(0);
        noise.fp_rate = optional_field<double>(*n, "fpRate", "noise").value_or(0);
        noise.seed = optional_field<std::uint64_t>(*n, "seed", "noise").value_or(0);
        noise.retry_delay = optional_field<double>(*n, "retryDelay", "noise").value_or(noise.retry_delay);
        noise.max_attempts = optional_field<int>(*n, "maxAttempts", "noise").value_or(noise.max_attempts);
        check_rate(noise.fn_rate, "fnRate");
        check_rate(noise.fp_rate, "fpRate");
        if (noise.retry_delay < 0) throw DomainError("noise retryDelay must be non-negative");
        if (noise.max_attempts < 1) throw DomainError("noise maxAttempts must be at least 1");
        plan.noise = noise;
    }

    const auto cohorts = j.find("cohorts");
    if (cohorts == j.end() || !cohorts->is_array() || cohorts->empty())
        throw SchemaError("plan needs a non-empty 'cohorts' array");
    std::set<std::string> prefixes;
    for (std::size_t c = 0; c < cohorts->size(); ++c) {
        const Json& cj = (*cohorts)[c];
        const std::string where = "cohort " + std::to_string(c + 1);
        CohortPlan cohort;
        cohort.group = parse_trainee_group(required<std::string>(cj, "group", where));
        cohort.participants = required<int>(cj, "participants", where);
        if (cohort.participants < 1) throw DomainError(where + ": participants must be at least 1");
        cohort.id_prefix = optional_field<std::string>(cj, "idPrefix", where).value_or(lowercase(to_string(cohort.group)));
        if (!prefixes.insert(cohort.id_prefix).second)
            throw SchemaError(where + ": idPrefix '" + cohort.id_prefix + "' is used twice");
        cohort.assisted = optional_field<bool>(cj, "assisted", where).value_or(cohort.group == TraineeGroup::Experiment);
        const auto scripts = cj.find("scripts");
        if (scripts == cj.end() || !scripts->is_array() || scripts->empty())
            throw SchemaError(where + " needs a non-empty 'scripts' array");
        for (const auto& sj : *scripts) {
            PlanScript ps;
            ps.script = script_from_json(sj);
            ps.participant = optional_field<int>(sj, "participant", where);
            ps.iteration = optional_field<int>(sj, "iteration", where);
            if (auto m = optional_field<std::string>(sj, "mode", where)) ps.mode = parse_mode(*m);
            cohort.scripts.push_back(std::move(ps));
        }
        for (int p = 1; p <= cohort.participants; ++p) {
            for (int i = 1; i <= kIterations; ++i) {
                for (const Mode m : {Mode::Training, Mode::Testing}) {
                    if (!select_script(cohort, p, i, m))
                        throw SchemaError(where + ": no script for participant " + std::to_string(p) + ", " +
                                          std::string(to_string(m)) + " " + std::to_string(i));
                }
            }
        }
        plan.cohorts.push_back(std::move(cohort));
    }
    return plan;
}

const GroundTruthScript* select_script(const CohortPlan& cohort, int participant, int iteration, Mode mode) {
    const GroundTruthScript* best = nullptr;
    int best_score = -1;
    for (const auto& ps : cohort.scripts) {
        if (ps.participant && *ps.participant != participant) continue;
        if (ps.iteration && *ps.iteration != iteration) continue;
        if (ps.mode && *ps.mode != mode) continue;
        const int score = (ps.participant ? 4 : 0) + (ps.iteration ? 2 : 0) + (ps.mode ? 1 : 0);
        if (score > best_score) {
            best = &ps.script;
            best_score = score;
        }
    }
    return best;
}

Json metrics_json(const std::vector<SimulatedSession>& sessions) {
    struct Cell {
        std::string group;
        int iteration;
        Mode mode;
        bool assisted;
        int sessions = 0;
        InteractionMetrics metrics;
    };
    std::vector<Cell> cells;
    InteractionMetrics training[kIterations];
    InteractionMetrics total;
    for (const auto& s : sessions) {
        const Session& session = s.run.session;
        auto it = std::find_if(cells.begin(), cells.end(), [&](const Cell& c) {
            return c.group == s.group && c.iteration == session.iteration && c.mode == session.mode &&
                   c.assisted == s.assisted;
        });
        if (it == cells.end()) {
            cells.push_back({s.group, session.iteration, session.mode, s.assisted, 0, {}});
            it = std::prev(cells.end());
        }
        ++it->sessions;
        it->metrics += s.metrics;
        total += s.metrics;
        if (s.assisted && session.mode == Mode::Training && session.iteration >= 1 && session.iteration <= kIterations)
            training[session.iteration - 1] += s.metrics;
    }
    std::stable_sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
        if (a.group != b.group) return a.group < b.group;
        if (a.iteration != b.iteration) return a.iteration < b.iteration;
        if (a.mode != b.mode) return a.mode == Mode::Training;
        return a.assisted && !b.assisted;
    });

    auto with_lines = [](const InteractionMetrics& m) {
        Json j = to_json(m);
        j["lines"] = m.total();
        return j;
    };
    Json j;
    j["sessions"] = sessions.size();
    Json training_json = Json::array();
    for (int i = 0; i < kIterations; ++i) {
        Json t;
        t["iteration"] = i + 1;
        const Json counts = with_lines(training[i]);
        for (const auto& [k, v] : counts.items()) t[k] = v;
        training_json.push_back(std::move(t));
    }
    j["assistedTraining"] = std::move(training_json);
    Json by_cell = Json::array();
    for (const auto& c : cells) {
        Json cell;
        cell["group"] = c.group;
        cell["iteration"] = c.iteration;
        cell["mode"] = to_string(c.mode);
        cell["assisted"] = c.assisted;
        cell["sessions"] = c.sessions;
        const Json counts = with_lines(c.metrics);
        for (const auto& [k, v] : counts.items()) cell[k] = v;
        by_cell.push_back(std::move(cell));
    }
    j["byCell"] = std::move(by_cell);
    j["total"] = with_lines(total);
    return j;
}

SimulationResult run_simulation(const SimulationPlan& plan, std::shared_ptr<const Scenario> scenario,
                                const std::optional<fs::path>& out_dir, const MonitorOptions& options) {
    if (!scenario) throw NotFoundError("plan refers to an unknown scenario");
    if (lowercase(plan.scenario_id) != lowercase(scenario->scenario_id))
        throw NotFoundError("plan refers to scenario '" + plan.scenario_id + "' but '" + scenario->scenario_id +
                            "' was supplied");
    const ProcessMonitor monitor(scenario, options);

    std::unique_ptr<SessionStore> store;
    if (out_dir) {
        const fs::path sessions_dir = *out_dir / "sessions";
        if (fs::exists(sessions_dir) && !fs::is_empty(sessions_dir))
            throw ConflictError(sessions_dir.string() + " already holds data; choose an empty output directory");
        fs::create_directories(*out_dir);
        store = std::make_unique<SessionStore>(sessions_dir, StoreOptions{false});
        store->save_scenario(*scenario);
    }

    SimulationResult result;
    std::size_t index = 0;
    for (const auto& cohort : plan.cohorts) {
        const std::string group(to_string(cohort.group));
        for (int p = 1; p <= cohort.participants; ++p) {
            if (store) store->add_trainee({trainee_id_for(cohort, p), trainee_id_for(cohort, p), cohort.group, {}});
            for (int i = 1; i <= kIterations; ++i) {
                for (const Mode mode : {Mode::Training, Mode::Testing}) {
                    SessionSetup setup;
                    setup.session_id = session_id_for(cohort, p, i, mode);
                    setup.trainee_id = trainee_id_for(cohort, p);
                    setup.mode = mode;
                    setup.iteration = i;
                    setup.start_at = plan.start_time + static_cast<double>(index++) * plan.session_gap;
                    if (mode == Mode::Training) setup.suppress_corrections = !cohort.assisted;
                    const GroundTruthScript* script = select_script(cohort, p, i, mode);
                    if (!script) throw SchemaError("no script for session " + setup.session_id);

                    SimulatedSession s;
                    s.group = group;
                    s.participant = p;
                    s.assisted = mode == Mode::Training && cohort.assisted;
                    s.run = run_script(monitor, *script, setup, plan.noise ? &*plan.noise : nullptr);
                    s.summary = monitor.finalize(s.run.session);
                    s.score = compute_pscore(s.summary, &s.run.performed, *scenario);
                    s.metrics = classify_interactions(s.run.session.events, s.run.performed);
                    if (store) {
                        for (const auto& r : s.run.records) store->append(r);
                    }
                    result.sessions.push_back(std::move(s));
                }
            }
        }
    }
    result.metrics = metrics_json(result.sessions);

    if (store) {
        store->sync();
        ScenarioRegistry registry;
        registry.add(*scenario);
        result.report = group_report(collect_rows(*store, registry, options), Grouping::Cohort);
        std::string summaries;
        for (const auto& s : result.sessions) summaries += canonical_dump(to_json(s.summary)) + "\n";
        write_text(*out_dir / "summaries.jsonl", summaries);
        write_text(*out_dir / "metrics.json", result.metrics.dump(2) + "\n");
        write_text(*out_dir / "report.json", to_json(result.report).dump(2) + "\n");
        write_text(*out_dir / "report.txt", render_text(result.report));
        write_text(*out_dir / "report.csv", render_csv(result.report));
    } else {
        std::vector<SessionRow> rows;
        for (const auto& s : result.sessions) {
            SessionRow row;
            row.session_id = s.run.session.session_id;
            row.trainee_id = s.run.session.trainee_id;
            row.group = s.group;
            row.iteration = s.run.session.iteration;
            row.mode = s.run.session.mode;
            row.task_time = s.summary.task_time;
            row.score = s.score;
            rows.push_back(std::move(row));
        }
        result.report = group_report(std::move(rows), Grouping::Cohort);
    }
    return result;
}

}  // namespace assist
