#include "assist/monitor.hpp"

#include <algorithm>

#include "assist/error.hpp"

namespace assist {

namespace {

const std::set<std::string> kNegativeTokens = {"no",   "not",  "negative", "nope",
                                               "didnt", "hasnt", "isnt"};

Response ack_response(const Step& step) {
    return {step.acknowledgement.kind == ResponseKind::FollowUpQuestion ? PromptKind::FollowUpQuestion
                                                                        : PromptKind::Statement,
            step.acknowledgement.text};
}

}  // namespace

bool is_negative_reply(const TokenSequence& utterance) {
    return std::any_of(utterance.tokens.begin(), utterance.tokens.end(),
                       [](const std::string& t) { return kNegativeTokens.count(t) > 0; });
}

ProcessMonitor::ProcessMonitor(std::shared_ptr<const Scenario> scenario, MonitorOptions options)
    : scenario_(std::move(scenario)), options_(options) {
    if (!scenario_) throw StateError("monitor needs a scenario");
    auto violations = validate_scenario(*scenario_);
    if (!violations.empty()) throw ScenarioValidationError(std::move(violations));
    chain_ = linearize(*scenario_);
    for (std::size_t i = 0; i < chain_.size(); ++i) {
        index_.emplace(chain_[i]->step_id, i);
        patterns_.emplace(chain_[i]->step_id, compile_pattern(chain_[i]->patterns));
    }
}

std::size_t ProcessMonitor::chain_index(std::string_view step_id) const {
    auto it = index_.find(step_id);
    if (it == index_.end()) throw NotFoundError("unknown step '" + std::string(step_id) + "'");
    return it->second;
}

int ProcessMonitor::ordinal_of(std::string_view step_id) const {
    return chain_[chain_index(step_id)]->ordinal;
}

std::string ProcessMonitor::describe_step(const Step& step) const {
    const auto alternatives = step.pattern_alternatives();
    return alternatives.empty() ? step.step_id : step.step_id + " (" + alternatives.front() + ")";
}

Session ProcessMonitor::start(std::string session_id, std::string trainee_id, Mode mode,
                              Seconds now, int iteration) const {
    Session session;
    session.session_id = std::move(session_id);
    session.trainee_id = std::move(trainee_id);
    session.scenario_id = scenario_->scenario_id;
    session.mode = mode;
    session.iteration = iteration;
    session.state = SessionState::Active;
    session.current_step_id = scenario_->entry_step_id;
    session.started_at = now;
    session.suppress_corrections = mode == Mode::Testing;
    return session;
}

std::vector<MatchCandidate> ProcessMonitor::admissible(const Session& session) const {
    std::vector<MatchCandidate> out;
    if (session.state != SessionState::Active || !session.current_step_id) return out;
    auto add = [&](const Step& step) {
        out.push_back({step.step_id, step.ordinal, patterns_.find(step.step_id)->second});
    };
    for (const auto& id : session.outstanding_missed) add(*chain_[chain_index(id)]);
    if (session.pending_question) add(*chain_[chain_index(*session.pending_question)]);
    for (std::size_t i = chain_index(*session.current_step_id); i < chain_.size(); ++i) add(*chain_[i]);
    std::sort(out.begin(), out.end(),
              [](const MatchCandidate& a, const MatchCandidate& b) { return a.ordinal < b.ordinal; });
    return out;
}

MatchResult ProcessMonitor::recognize(const Session& session, std::string_view text) const {
    const TokenSequence tokens = normalize(text);
    MatchResult match = match_utterance(tokens, admissible(session), options_.fuzzy_threshold);
    if (!match.matched && session.pending_question) {
        const Step& question = *chain_[chain_index(*session.pending_question)];
        if (question.correction_step_id && session.completed_steps.count(*question.correction_step_id) &&
            is_negative_reply(tokens)) {
            match.matched = true;
            match.step_id = question.correction_step_id;
            match.score = 1.0;
            match.kind = MatchKind::Exact;
            match.slots.clear();
        }
    }
    return match;
}

UtteranceOutcome ProcessMonitor::handle_utterance(Session& session, std::string_view text,
                                                  Seconds now) const {
    if (session.state != SessionState::Active)
        throw StateError("session '" + session.session_id + "' is not active");
    return apply(session, text, recognize(session, text), now);
}

bool ProcessMonitor::check_timeout(Session& session, Seconds now) const {
    if (session.state != SessionState::Active) return false;
    if (!(now - session.started_at > scenario_->time_penalty.fail_threshold)) return false;
    session.state = SessionState::Failed;
    session.ended_at = now;
    session.errors.push_back({ErrorKind::Timeout, session.current_step_id, now});
    session.pending_question.reset();
    return true;
}

UtteranceOutcome ProcessMonitor::apply(Session& session, std::string_view text,
                                       const MatchResult& match, Seconds now) const {
    if (session.state != SessionState::Active)
        throw StateError("session '" + session.session_id + "' is not active");
    const Seconds last = session.events.empty() ? session.started_at : session.events.back().at;
    if (now < last) throw StateError("utterance timestamp precedes the previous event");

    UtteranceOutcome outcome;
    const std::size_t errors_before = session.errors.size();
    auto finish = [&](SessionEvent event) {
        session.events.push_back(std::move(event));
        outcome.errors_appended.assign(session.errors.begin() + errors_before, session.errors.end());
        outcome.state = session.state;
        return outcome;
    };

    if (check_timeout(session, now)) {
        outcome.recorded = false;
        outcome.errors_appended.assign(session.errors.begin() + errors_before, session.errors.end());
        outcome.state = session.state;
        return outcome;
    }

    SessionEvent event;
    event.at = now;
    event.raw_text = std::string(text);
    event.match = match;

    if (!match.matched || !match.step_id) {
        session.errors.push_back({ErrorKind::UnrecognizedUtterance, session.current_step_id, now});
        outcome.response = Response{PromptKind::Retry, std::string(kRetryPrompt)};
        event.response = outcome.response;
        return finish(std::move(event));
    }

    const std::string& matched = *match.step_id;
    const std::size_t matched_index = chain_index(matched);
    const Step& step = *chain_[matched_index];
    const std::size_t current_index = chain_index(*session.current_step_id);
    outcome.accepted_step = matched;

    auto complete_and_advance = [&] {
        session.completed_steps.insert(matched);
        if (step.next_step_id) {
            session.current_step_id = step.next_step_id;
            outcome.advanced_to = step.next_step_id;
            if (step.acknowledgement.kind == ResponseKind::FollowUpQuestion)
                session.pending_question = matched;
        } else {
            session.current_step_id.reset();
            session.state = SessionState::Completed;
            session.ended_at = now;
        }
    };

    const auto missed_it =
        std::find(session.outstanding_missed.begin(), session.outstanding_missed.end(), matched);

    if (session.pending_question && session.completed_steps.count(matched) &&
        matched != *session.pending_question) {
        // Negative answer to the follow-up question: replay the correction
        // step's prompt and keep waiting for the answer.
        if (!session.suppress_corrections)
            outcome.response = Response{PromptKind::Correction, step.acknowledgement.text};
    } else if (matched_index == current_index) {
        session.pending_question.reset();
        complete_and_advance();
        outcome.response = ack_response(step);
    } else if (missed_it != session.outstanding_missed.end()) {
        session.outstanding_missed.erase(missed_it);
        session.completed_steps.insert(matched);
        session.errors.push_back({ErrorKind::OutOfOrder, matched, now});
        outcome.response = ack_response(step);
    } else if (session.pending_question && matched == *session.pending_question) {
        outcome.response = ack_response(step);
    } else if (matched_index > current_index) {
        session.pending_question.reset();
        for (std::size_t i = current_index; i < matched_index; ++i) {
            const std::string& skipped = chain_[i]->step_id;
            session.errors.push_back({ErrorKind::MissedStep, skipped, now});
            session.outstanding_missed.push_back(skipped);
        }
        std::sort(session.outstanding_missed.begin(), session.outstanding_missed.end(),
                  [&](const std::string& a, const std::string& b) {
                      return chain_index(a) < chain_index(b);
                  });
        const Step& first_missed = *chain_[current_index];
        complete_and_advance();
        if (!session.suppress_corrections)
            outcome.response = Response{PromptKind::Correction,
                                        "You skipped " + describe_step(first_missed) +
                                            ". Please go back and complete it."};
    } else {
        throw StateError("step '" + matched + "' is not admissible in session '" +
                         session.session_id + "'");
    }

    event.response = outcome.response;
    event.advanced_to = outcome.advanced_to;
    return finish(std::move(event));
}

SessionSummary ProcessMonitor::finalize(const Session& session) const {
    if (session.state != SessionState::Completed && session.state != SessionState::Failed)
        throw StateError("session '" + session.session_id + "' has not finished");
    SessionSummary summary;
    summary.session_id = session.session_id;
    summary.task_time = session.ended_at.value_or(session.started_at) - session.started_at;
    summary.step_outcomes.assign(chain_.size(), StepOutcome::Missed);
    for (const Step* step : chain_) {
        if (session.completed_steps.count(step->step_id))
            summary.step_outcomes[static_cast<std::size_t>(step->ordinal - 1)] = StepOutcome::Done;
    }
    for (const auto& error : session.errors) {
        if (error.kind == ErrorKind::MissedStep && error.step_id)
            summary.recording_error_ordinals.insert(ordinal_of(*error.step_id));
    }
    summary.timed_out = summary.task_time > scenario_->time_penalty.fail_threshold;
    summary.event_count = session.events.size();
    summary.errors = session.errors;
    return summary;
}

Session& SessionTable::start(const ProcessMonitor& monitor, std::string session_id,
                             std::string trainee_id, Mode mode, Seconds now, int iteration) {
    if (sessions_.count(session_id))
        throw ConflictError("session '" + session_id + "' already exists");
    Session session = monitor.start(session_id, std::move(trainee_id), mode, now, iteration);
    return sessions_.emplace(std::move(session_id), std::move(session)).first->second;
}

Session* SessionTable::find(std::string_view session_id) {
    auto it = sessions_.find(session_id);
    return it == sessions_.end() ? nullptr : &it->second;
}

std::string_view to_string(Mode mode) {
    return mode == Mode::Training ? "Training" : "Testing";
}

std::string_view to_string(SessionState state) {
    switch (state) {
        case SessionState::NotStarted: return "NotStarted";
        case SessionState::Active: return "Active";
        case SessionState::Completed: return "Completed";
        case SessionState::Failed: return "Failed";
    }
    return "Unknown";
}

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::MissedStep: return "MissedStep";
        case ErrorKind::OutOfOrder: return "OutOfOrder";
        case ErrorKind::UnrecognizedUtterance: return "UnrecognizedUtterance";
        case ErrorKind::Timeout: return "Timeout";
    }
    return "Unknown";
}

std::string_view to_string(PromptKind kind) {
    switch (kind) {
        case PromptKind::Statement: return "Statement";
        case PromptKind::FollowUpQuestion: return "FollowUpQuestion";
        case PromptKind::Correction: return "Correction";
        case PromptKind::Retry: return "Retry";
    }
    return "Unknown";
}

}  // namespace assist
