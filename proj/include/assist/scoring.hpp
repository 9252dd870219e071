#pragma once

// Performance score and interaction-quality classification.
//
//   pscore = maxScore - (timePenalty + sum_i (impl_i + rec_i))
//
// where impl_i / rec_i are the per-step weights of the scenario, charged once
// for every step with an implementation error (known only from an observer
// script) or a recording error (a step the monitor saw skipped).

#include <optional>
#include <string>
#include <vector>

#include "assist/monitor.hpp"
#include "assist/scenario.hpp"

namespace assist {

struct ScriptLine {
    Seconds at_offset = 0;
    std::string text;
    bool scripted_accurate = true;
    std::optional<int> implementation_error_ordinal;

    bool operator==(const ScriptLine&) const = default;
};

struct GroundTruthScript {
    std::string name;
    std::vector<ScriptLine> lines;

    bool operator==(const GroundTruthScript&) const = default;
};

// Throws DomainError for decreasing offsets or ordinals outside 1..step_count.
void check_script(const GroundTruthScript& script, const Scenario& scenario);

// Free up to and including the free threshold, linear from the baseline up to
// and including the failure threshold, failPenalty beyond it. The jump at the
// free threshold is intentional. Throws DomainError for negative t.
double time_penalty(Seconds t, const TimePenaltyParams& params);

struct PscoreReport {
    double pscore = 0;
    double time_penalty = 0;
    double impl_penalty_total = 0;
    double rec_penalty_total = 0;
    bool failed = false;
    std::vector<int> implementation_error_ordinals;
    std::vector<int> recording_error_ordinals;

    bool operator==(const PscoreReport&) const = default;
};

PscoreReport compute_pscore(const SessionSummary& summary, const GroundTruthScript* script,
                            const Scenario& scenario);

// Same, with the implementation errors given directly (an observer's
// assessment attached to a stored session).
PscoreReport compute_pscore(const SessionSummary& summary,
                            const std::vector<int>& implementation_error_ordinals,
                            const Scenario& scenario);

struct InteractionMetrics {
    int tp = 0;
    int tn = 0;
    int fp = 0;
    int fn = 0;

    int total() const { return tp + tn + fp + fn; }
    InteractionMetrics& operator+=(const InteractionMetrics& other);
    bool operator==(const InteractionMetrics&) const = default;
};

// events[i] is the monitor's reaction to script.lines[i]. Accepted means the
// monitor matched the utterance to some step. Throws AlignmentError when the
// lengths differ.
InteractionMetrics classify_interactions(const std::vector<SessionEvent>& events,
                                         const GroundTruthScript& script);

}  // namespace assist
