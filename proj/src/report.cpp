#include "assist/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "assist/error.hpp"
#include "assist/replay.hpp"
#include "assist/store.hpp"

namespace assist {

namespace {

constexpr int kIterations = 3;
const Mode kModes[] = {Mode::Training, Mode::Testing};
const std::pair<int, int> kIterationPairs[] = {{1, 2}, {2, 3}, {1, 3}};
const char* const kMetrics[] = {"pscore", "taskTime"};

Json number(double value) {
    if (std::isfinite(value) && value == std::trunc(value) && std::fabs(value) < 9.0e15)
        return static_cast<long long>(value);
    return value;
}

double metric_of(const SessionRow& row, std::string_view metric) {
    return metric == "pscore" ? row.score.pscore : row.task_time;
}

SampleMoments moments_of(const std::vector<double>& values) {
    SampleMoments m;
    double sum = 0;
    for (const double v : values) sum += v;
    m.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0;
        for (const double v : values) ss += (v - m.mean) * (v - m.mean);
        m.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return m;
}

int group_rank(const std::string& group) {
    if (group == "Control") return 0;
    if (group == "Experiment") return 1;
    return 2;
}

std::string column_label(Mode mode, int iteration) {
    return (mode == Mode::Training ? "Train " : "Test ") + std::to_string(iteration);
}

std::string fixed(double value, int decimals) {
    char buffer[64];
    std::snprintf(buffer, sizeof buffer, "%.*f", decimals, value);
    std::string out = buffer;
    if (out == "-0" || out.find_first_not_of("-0.") == std::string::npos) {
        if (out.front() == '-') out.erase(0, 1);
    }
    return out;
}

std::string pad(const std::string& text, std::size_t width, bool left = false) {
    if (text.size() >= width) return text;
    const std::string fill(width - text.size(), ' ');
    return left ? text + fill : fill + text;
}

Json optional_moments(const std::optional<SampleMoments>& m) {
    if (!m) return nullptr;
    Json j;
    j["mean"] = number(m->mean);
    j["sd"] = m->sd ? number(*m->sd) : Json(nullptr);
    return j;
}

Json optional_int(const std::optional<int>& v) {
    return v ? Json(*v) : Json(nullptr);
}

Json optional_result(const std::optional<StatTestResult>& r) {
    return r ? to_json(*r) : Json(nullptr);
}

std::string describe_result(const std::optional<StatTestResult>& r, const std::string& note) {
    if (!r) return "n/a (" + note + ")";
    std::string out = (r->method == StatMethod::WelchT ? "t = " : "z = ") + fixed(r->statistic, 4);
    if (r->df) out += ", df = " + fixed(*r->df, 3);
    out += ", p = " + fixed(r->p_two_tailed, 5);
    if (r->p_exact) out += " (exact)";
    return out;
}

}  // namespace

std::string_view to_string(Grouping grouping) {
    return grouping == Grouping::Cohort ? "cohort" : "pooled";
}

Grouping parse_grouping(std::string_view text) {
    if (text == "cohort") return Grouping::Cohort;
    if (text == "pooled") return Grouping::Pooled;
    throw DomainError("unknown grouping '" + std::string(text) + "' (expected cohort or pooled)");
}

std::string format_number(double value) {
    return number(value).dump();
}

const ReportCell* GroupReport::cell(std::string_view group, int iteration, Mode mode) const {
    for (const auto& c : cells) {
        if (c.group == group && c.iteration == iteration && c.mode == mode) return &c;
    }
    return nullptr;
}

GroupReport group_report(std::vector<SessionRow> rows, Grouping grouping) {
    GroupReport report;
    report.grouping = grouping;
    if (grouping == Grouping::Pooled) {
        for (auto& row : rows) row.group = std::string(kPooledGroup);
    }
    std::stable_sort(rows.begin(), rows.end(), [](const SessionRow& a, const SessionRow& b) {
        if (group_rank(a.group) != group_rank(b.group)) return group_rank(a.group) < group_rank(b.group);
        if (a.group != b.group) return a.group < b.group;
        if (a.trainee_id != b.trainee_id) return a.trainee_id < b.trainee_id;
        if (a.iteration != b.iteration) return a.iteration < b.iteration;
        if (a.mode != b.mode) return a.mode == Mode::Training;
        return a.session_id < b.session_id;
    });

    if (grouping == Grouping::Pooled) {
        report.groups = {std::string(kPooledGroup)};
    } else {
        report.groups = {"Control", "Experiment"};
        for (const auto& row : rows) {
            if (std::find(report.groups.begin(), report.groups.end(), row.group) == report.groups.end())
                report.groups.push_back(row.group);
        }
    }

    // First session of each trainee per (group, iteration, mode).
    std::map<std::tuple<std::string, int, Mode>, std::map<std::string, const SessionRow*>> by_trainee;
    for (const auto& row : rows) by_trainee[{row.group, row.iteration, row.mode}].emplace(row.trainee_id, &row);

    for (const auto& group : report.groups) {
        for (int iteration = 1; iteration <= kIterations; ++iteration) {
            for (const Mode mode : kModes) {
                ReportCell cell;
                cell.group = group;
                cell.iteration = iteration;
                cell.mode = mode;
                std::vector<double> pscores;
                std::vector<double> times;
                int imp = 0;
                int rep = 0;
                for (const auto& row : rows) {
                    if (row.group != group || row.iteration != iteration || row.mode != mode) continue;
                    pscores.push_back(row.score.pscore);
                    times.push_back(row.task_time);
                    imp += row.imp();
                    rep += row.rep();
                }
                cell.n = static_cast<int>(pscores.size());
                if (cell.n > 0) {
                    cell.pscore = moments_of(pscores);
                    cell.task_time = moments_of(times);
                    cell.imp = imp;
                    cell.rep = rep;
                }
                report.cells.push_back(std::move(cell));
            }
        }
    }

    const bool two_cohorts = grouping == Grouping::Cohort;
    if (two_cohorts) {
        for (int iteration = 1; iteration <= kIterations; ++iteration) {
            for (const char* metric : kMetrics) {
                BetweenGroups b;
                b.metric = metric;
                b.iteration = iteration;
                b.mode = Mode::Testing;
                b.group_a = "Control";
                b.group_b = "Experiment";
                std::vector<double> a;
                std::vector<double> e;
                for (const auto& row : rows) {
                    if (row.iteration != iteration || row.mode != Mode::Testing) continue;
                    if (row.group == b.group_a) a.push_back(metric_of(row, metric));
                    if (row.group == b.group_b) e.push_back(metric_of(row, metric));
                }
                if (a.size() < 2 || e.size() < 2) {
                    b.note = "needs two or more sessions in each group";
                } else {
                    try {
                        b.result = welch_t_test(a, e);
                    } catch (const DegenerateInputError& ex) {
                        b.note = ex.what();
                    }
                }
                report.between.push_back(std::move(b));
            }
        }
    }

    for (const auto& group : report.groups) {
        for (const Mode mode : kModes) {
            for (const auto& [from, to] : kIterationPairs) {
                for (const char* metric : kMetrics) {
                    WithinGroup w;
                    w.metric = metric;
                    w.group = group;
                    w.mode = mode;
                    w.from_iteration = from;
                    w.to_iteration = to;
                    std::vector<double> x;
                    std::vector<double> y;
                    const auto first = by_trainee.find({group, from, mode});
                    const auto second = by_trainee.find({group, to, mode});
                    if (first != by_trainee.end() && second != by_trainee.end()) {
                        for (const auto& [trainee, row] : first->second) {
                            auto other = second->second.find(trainee);
                            if (other == second->second.end()) continue;
                            x.push_back(metric_of(*row, metric));
                            y.push_back(metric_of(*other->second, metric));
                        }
                    }
                    w.pairs = static_cast<int>(x.size());
                    if (x.empty())
                        w.note = "no trainee has sessions in both iterations";
                    else
                        w.result = wilcoxon_signed_rank_pratt(x, y);
                    report.within.push_back(std::move(w));
                }
            }
        }
    }

    report.rows = std::move(rows);
    return report;
}

std::vector<SessionRow> collect_rows(const SessionStore& store, const ScenarioRegistry& registry,
                                     const MonitorOptions& options) {
    std::map<std::string, std::shared_ptr<ProcessMonitor>> monitors;
    std::map<std::string, std::string> groups;
    for (const auto& profile : store.trainees()) groups[profile.trainee_id] = std::string(to_string(profile.group));

    std::vector<SessionRow> rows;
    for (const auto& id : store.session_ids()) {
        const auto records = store.load_session(id);
        const std::string scenario_id = lowercase(records.front().payload.value("scenarioId", std::string{}));
        auto scenario = registry.find(scenario_id);
        if (!scenario) continue;
        auto& monitor = monitors[scenario_id];
        if (!monitor) monitor = std::make_shared<ProcessMonitor>(scenario, options);
        const StoredSession stored = replay_records(records, *monitor);
        const Session& s = stored.session;
        if (s.state != SessionState::Completed && s.state != SessionState::Failed) continue;
        const SessionSummary summary = monitor->finalize(s);
        SessionRow row;
        row.session_id = s.session_id;
        row.trainee_id = s.trainee_id;
        auto g = groups.find(s.trainee_id);
        row.group = g == groups.end() ? std::string(kUnassignedGroup) : g->second;
        row.iteration = s.iteration;
        row.mode = s.mode;
        row.task_time = summary.task_time;
        row.score = compute_pscore(summary, stored.implementation_error_ordinals.value_or(std::vector<int>{}),
                                   monitor->scenario());
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const SessionRow& a, const SessionRow& b) {
        if (group_rank(a.group) != group_rank(b.group)) return group_rank(a.group) < group_rank(b.group);
        if (a.group != b.group) return a.group < b.group;
        if (a.trainee_id != b.trainee_id) return a.trainee_id < b.trainee_id;
        if (a.iteration != b.iteration) return a.iteration < b.iteration;
        if (a.mode != b.mode) return a.mode == Mode::Training;
        return a.session_id < b.session_id;
    });
    return rows;
}

Json to_json(const GroupReport& report) {
    Json j;
    j["grouping"] = to_string(report.grouping);
    j["groups"] = report.groups;

    Json cells = Json::array();
    for (const auto& c : report.cells) {
        Json cell;
        cell["group"] = c.group;
        cell["iteration"] = c.iteration;
        cell["mode"] = to_string(c.mode);
        cell["n"] = c.n;
        cell["pscore"] = optional_moments(c.pscore);
        cell["taskTime"] = optional_moments(c.task_time);
        cell["imp"] = optional_int(c.imp);
        cell["rep"] = optional_int(c.rep);
        cells.push_back(std::move(cell));
    }
    j["cells"] = std::move(cells);

    Json table = Json::array();
    for (const auto& group : report.groups) {
        Json row;
        row["group"] = group;
        Json columns = Json::array();
        for (int iteration = 1; iteration <= kIterations; ++iteration) {
            for (const Mode mode : kModes) {
                const ReportCell* c = report.cell(group, iteration, mode);
                Json col;
                col["column"] = column_label(mode, iteration);
                col["imp"] = optional_int(c->imp);
                col["rep"] = optional_int(c->rep);
                columns.push_back(std::move(col));
            }
        }
        row["columns"] = std::move(columns);
        table.push_back(std::move(row));
    }
    j["errorTable"] = std::move(table);

    Json between = Json::array();
    for (const auto& b : report.between) {
        Json item;
        item["metric"] = b.metric;
        item["iteration"] = b.iteration;
        item["mode"] = to_string(b.mode);
        item["groupA"] = b.group_a;
        item["groupB"] = b.group_b;
        item["result"] = optional_result(b.result);
        if (!b.result) item["note"] = b.note;
        between.push_back(std::move(item));
    }
    j["betweenGroups"] = std::move(between);

    Json within = Json::array();
    for (const auto& w : report.within) {
        Json item;
        item["metric"] = w.metric;
        item["group"] = w.group;
        item["mode"] = to_string(w.mode);
        item["fromIteration"] = w.from_iteration;
        item["toIteration"] = w.to_iteration;
        item["pairs"] = w.pairs;
        item["result"] = optional_result(w.result);
        if (!w.result) item["note"] = w.note;
        within.push_back(std::move(item));
    }
    j["withinGroup"] = std::move(within);

    Json sessions = Json::array();
    for (const auto& r : report.rows) {
        Json item;
        item["sessionId"] = r.session_id;
        item["traineeId"] = r.trainee_id;
        item["group"] = r.group;
        item["iteration"] = r.iteration;
        item["mode"] = to_string(r.mode);
        item["taskTime"] = number(r.task_time);
        item["score"] = to_json(r.score);
        item["imp"] = r.imp();
        item["rep"] = r.rep();
        sessions.push_back(std::move(item));
    }
    j["sessions"] = std::move(sessions);
    return j;
}

std::string render_text(const GroupReport& report) {
    std::string out;
    out += "Group report (grouping: " + std::string(to_string(report.grouping)) + ", " +
           std::to_string(report.rows.size()) + " sessions)\n";

    std::size_t name_width = 12;
    for (const auto& g : report.groups) name_width = std::max(name_width, g.size() + 6);
    constexpr std::size_t kColumn = 20;

    auto header = [&](const std::string& first) {
        std::string line = pad(first, name_width, true);
        for (int iteration = 1; iteration <= kIterations; ++iteration) {
            for (const Mode mode : kModes) line += pad(" " + column_label(mode, iteration), kColumn);
        }
        return line + "\n";
    };

    auto moments_table = [&](const std::string& title, bool pscore) {
        out += "\n" + title + " (mean +/- sd, n)\n";
        out += header("group");
        for (const auto& group : report.groups) {
            std::string line = pad(group, name_width, true);
            for (int iteration = 1; iteration <= kIterations; ++iteration) {
                for (const Mode mode : kModes) {
                    const ReportCell* c = report.cell(group, iteration, mode);
                    const auto& m = pscore ? c->pscore : c->task_time;
                    std::string text = "-";
                    if (m) {
                        text = fixed(m->mean, 2) + " +/- " + (m->sd ? fixed(*m->sd, 2) : std::string("-")) +
                               " (" + std::to_string(c->n) + ")";
                    }
                    line += pad(" " + text, kColumn);
                }
            }
            out += line + "\n";
        }
    };
    moments_table("Pscore by iteration", true);
    moments_table("Task time (s) by iteration", false);

    out += "\nErrors by iteration (IMP / REP totals)\n";
    out += header("group");
    for (const auto& group : report.groups) {
        for (const bool imp : {true, false}) {
            std::string line = pad(group + (imp ? " IMP" : " REP"), name_width, true);
            for (int iteration = 1; iteration <= kIterations; ++iteration) {
                for (const Mode mode : kModes) {
                    const ReportCell* c = report.cell(group, iteration, mode);
                    const auto& v = imp ? c->imp : c->rep;
                    line += pad(v ? std::to_string(*v) : std::string("-"), kColumn);
                }
            }
            out += line + "\n";
        }
    }

    if (!report.between.empty()) {
        out += "\nWelch's t-test between groups (testing iterations)\n";
        for (const auto& b : report.between) {
            out += "  " + pad(b.metric, 9, true) + " test " + std::to_string(b.iteration) + "  " + b.group_a +
                   " vs " + b.group_b + ": " + describe_result(b.result, b.note) + "\n";
        }
    }
    out += "\nWilcoxon signed-rank (Pratt) within groups\n";
    for (const auto& w : report.within) {
        out += "  " + pad(w.group, name_width, true) + pad(w.metric, 9, true) + " " +
               (w.mode == Mode::Training ? "train " : "test ") + std::to_string(w.from_iteration) + " -> " +
               std::to_string(w.to_iteration) + " (" + std::to_string(w.pairs) + " pairs): " +
               describe_result(w.result, w.note) + "\n";
    }
    return out;
}

std::string render_csv(const GroupReport& report) {
    std::string out = "sessionId,group,iteration,mode,t,pscore,imp,rep\n";
    for (const auto& r : report.rows) {
        out += r.session_id + "," + r.group + "," + std::to_string(r.iteration) + "," +
               std::string(to_string(r.mode)) + "," + format_number(r.task_time) + "," +
               format_number(r.score.pscore) + "," + std::to_string(r.imp()) + "," + std::to_string(r.rep()) +
               "\n";
    }
    return out;
}

}  // namespace assist
