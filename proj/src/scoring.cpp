#include "assist/scoring.hpp"

#include <algorithm>
#include <set>

#include "assist/error.hpp"

namespace assist {

void check_script(const GroundTruthScript& script, const Scenario& scenario) {
    const int count = static_cast<int>(scenario.step_count());
    for (std::size_t i = 0; i < script.lines.size(); ++i) {
        const auto& line = script.lines[i];
        if (i > 0 && line.at_offset < script.lines[i - 1].at_offset)
            throw DomainError("script line " + std::to_string(i + 1) + " goes back in time");
        if (line.implementation_error_ordinal &&
            (*line.implementation_error_ordinal < 1 || *line.implementation_error_ordinal > count))
            throw DomainError("script line " + std::to_string(i + 1) +
                              ": implementation error ordinal " +
                              std::to_string(*line.implementation_error_ordinal) +
                              " outside 1.." + std::to_string(count));
    }
}

double time_penalty(Seconds t, const TimePenaltyParams& params) {
    if (t < 0) throw DomainError("task time must be non-negative");
    if (t <= params.free_threshold) return 0.0;
    if (t <= params.fail_threshold) return (t - params.baseline) * params.rate;
    return params.fail_penalty;
}

PscoreReport compute_pscore(const SessionSummary& summary,
                            const std::vector<int>& implementation_error_ordinals,
                            const Scenario& scenario) {
    PscoreReport report;
    report.time_penalty = time_penalty(summary.task_time, scenario.time_penalty);
    report.failed = summary.timed_out;

    const std::set<int> impl(implementation_error_ordinals.begin(),
                             implementation_error_ordinals.end());
    std::set<int> rec = summary.recording_error_ordinals;
    for (std::size_t i = 0; i < summary.step_outcomes.size(); ++i) {
        if (summary.step_outcomes[i] == StepOutcome::Missed) rec.insert(static_cast<int>(i + 1));
    }
    for (const int ordinal : impl) report.impl_penalty_total += step_penalties(scenario, ordinal).impl_penalty;
    for (const int ordinal : rec) report.rec_penalty_total += step_penalties(scenario, ordinal).rec_penalty;
    report.implementation_error_ordinals.assign(impl.begin(), impl.end());
    report.recording_error_ordinals.assign(rec.begin(), rec.end());

    report.pscore = scenario.time_penalty.max_score -
                    (report.time_penalty + report.impl_penalty_total + report.rec_penalty_total);
    return report;
}

PscoreReport compute_pscore(const SessionSummary& summary, const GroundTruthScript* script,
                            const Scenario& scenario) {
    std::vector<int> impl;
    if (script) {
        check_script(*script, scenario);
        for (const auto& line : script->lines) {
            if (line.implementation_error_ordinal) impl.push_back(*line.implementation_error_ordinal);
        }
    }
    return compute_pscore(summary, impl, scenario);
}

InteractionMetrics& InteractionMetrics::operator+=(const InteractionMetrics& other) {
    tp += other.tp;
    tn += other.tn;
    fp += other.fp;
    fn += other.fn;
    return *this;
}

InteractionMetrics classify_interactions(const std::vector<SessionEvent>& events,
                                         const GroundTruthScript& script) {
    if (events.size() != script.lines.size())
        throw AlignmentError("script has " + std::to_string(script.lines.size()) +
                             " lines but the session recorded " + std::to_string(events.size()) +
                             " events");
    InteractionMetrics metrics;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const bool accepted = events[i].match.matched;
        if (script.lines[i].scripted_accurate)
            (accepted ? metrics.tp : metrics.fn) += 1;
        else
            (accepted ? metrics.fp : metrics.tn) += 1;
    }
    return metrics;
}

}  // namespace assist
