#include "assist/transcript.hpp"

#include <charconv>
#include <cmath>

#include "assist/error.hpp"
#include "assist/replay.hpp"
#include "assist/report.hpp"
#include "assist/store.hpp"

namespace assist {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string join_ordinals(const std::vector<int>& ordinals) {
    if (ordinals.empty()) return "none";
    std::string out;
    for (const int o : ordinals) out += (out.empty() ? "" : ", ") + std::to_string(o);
    return out;
}

}  // namespace

std::string format_score(double value) {
    std::string text = format_number(value);
    if (text.find_first_of(".eE") == std::string::npos) text += ".0";
    return text;
}

TranscriptLine parse_transcript_line(std::string_view raw) {
    TranscriptLine line;
    std::string_view rest = trim(raw);
    if (rest.empty() || rest.front() == '#') return line;
    if (rest.front() == '@') {
        rest.remove_prefix(1);
        std::size_t end = 0;
        while (end < rest.size() && !std::isspace(static_cast<unsigned char>(rest[end]))) ++end;
        double offset = 0;
        const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + end, offset);
        if (ec != std::errc() || ptr != rest.data() + end || !std::isfinite(offset) || offset < 0)
            throw DomainError("bad time offset '@" + std::string(rest.substr(0, end)) + "'");
        line.offset = offset;
        rest = trim(rest.substr(end));
        if (rest.empty()) return line;
    }
    if (rest.rfind("!imp", 0) == 0) {
        std::string_view number = trim(rest.substr(4));
        int ordinal = 0;
        const auto [ptr, ec] = std::from_chars(number.data(), number.data() + number.size(), ordinal);
        if (ec != std::errc() || ptr != number.data() + number.size())
            throw DomainError("'!imp' needs a step ordinal, got '" + std::string(number) + "'");
        line.kind = TranscriptLine::Kind::ImplementationError;
        line.ordinal = ordinal;
        return line;
    }
    line.kind = TranscriptLine::Kind::Utterance;
    line.text = std::string(rest);
    return line;
}

TranscriptRunner::TranscriptRunner(std::shared_ptr<const ProcessMonitor> monitor, TranscriptSetup setup,
                                   SessionStore* store)
    : monitor_(std::move(monitor)), setup_(std::move(setup)), store_(store) {
    session_ = monitor_->start(setup_.session_id, setup_.trainee_id, setup_.mode, setup_.start_at,
                               setup_.iteration);
    if (store_) persist({started_record(session_)});
}

void TranscriptRunner::persist(const std::vector<EventRecord>& records) {
    for (const auto& r : records) {
        if (store_) store_->append(r);
        seq_ = r.seq;
    }
}

bool TranscriptRunner::finished() const {
    return session_.state == SessionState::Completed || session_.state == SessionState::Failed;
}

std::vector<std::string> TranscriptRunner::feed(std::string_view raw) {
    const TranscriptLine line = parse_transcript_line(raw);
    std::vector<std::string> out;
    if (line.kind == TranscriptLine::Kind::Ignored) return out;

    if (line.kind == TranscriptLine::Kind::ImplementationError) {
        const int count = static_cast<int>(monitor_->chain().size());
        if (line.ordinal < 1 || line.ordinal > count)
            throw DomainError("implementation error ordinal " + std::to_string(line.ordinal) + " outside 1.." +
                              std::to_string(count));
        implementation_errors_.push_back(line.ordinal);
        if (finished()) {
            persist({assessment_record(session_.session_id, seq_ + 1,
                                       session_.ended_at.value_or(session_.started_at), implementation_errors_)});
        }
        return out;
    }

    if (finished()) {
        out.push_back("(session already " + std::string(to_string(session_.state)) + ")");
        return out;
    }
    const Seconds offset = line.offset ? *line.offset : (setup_.elapsed ? setup_.elapsed() : 0.0);
    const UtteranceOutcome outcome = monitor_->handle_utterance(session_, line.text, setup_.start_at + offset);
    auto records = utterance_records(session_, seq_ + 1, line.text, setup_.start_at + offset, outcome);
    if (finished() && !implementation_errors_.empty())
        records.push_back(assessment_record(session_.session_id, seq_ + 1 + static_cast<long long>(records.size()),
                                            session_.ended_at.value_or(session_.started_at),
                                            implementation_errors_));
    persist(records);

    if (outcome.response) out.push_back("assistant: " + outcome.response->text);
    if (!outcome.recorded) out.push_back("assistant: Time limit exceeded. The session has failed.");
    return out;
}

void TranscriptRunner::abandon() {
    if (finished()) return;
    const Seconds last = session_.events.empty() ? session_.started_at : session_.events.back().at;
    const Seconds at =
        std::max(last, session_.started_at + monitor_->scenario().time_penalty.fail_threshold) + 1.0;
    monitor_->check_timeout(session_, at);
    std::vector<EventRecord> records = {timeout_record(session_, seq_ + 1, at)};
    if (!implementation_errors_.empty())
        records.push_back(assessment_record(session_.session_id, seq_ + 2, at, implementation_errors_));
    persist(records);
}

SessionSummary TranscriptRunner::summary() const {
    return monitor_->finalize(session_);
}

PscoreReport TranscriptRunner::score() const {
    return compute_pscore(summary(), implementation_errors_, monitor_->scenario());
}

std::string TranscriptRunner::summary_text() const {
    const SessionSummary s = summary();
    const PscoreReport p = score();
    std::size_t done = 0;
    for (const auto o : s.step_outcomes) done += o == StepOutcome::Done;
    std::vector<int> recording(s.recording_error_ordinals.begin(), s.recording_error_ordinals.end());
    std::string out;
    out += "Session " + s.session_id + " " + std::string(to_string(session_.state)) + " after " +
           format_number(s.task_time) + " s" + (s.timed_out ? " (time limit exceeded)" : "") + "\n";
    out += "Steps: " + std::to_string(done) + " done, " + std::to_string(s.step_outcomes.size() - done) +
           " missed\n";
    out += "Errors recorded: " + std::to_string(s.errors.size()) + "\n";
    out += "Recording errors at ordinals: " + join_ordinals(recording) + "\n";
    out += "Implementation errors at ordinals: " + join_ordinals(p.implementation_error_ordinals) + "\n";
    out += "Pscore: " + format_score(p.pscore) + " = " + format_number(monitor_->scenario().time_penalty.max_score) +
           " - (" + format_number(p.time_penalty) + " time + " + format_number(p.impl_penalty_total) +
           " implementation + " + format_number(p.rec_penalty_total) + " recording)" +
           (p.failed ? " [failed]" : "") + "\n";
    return out;
}

Json TranscriptRunner::summary_json() const {
    Json j;
    j["summary"] = to_json(summary());
    j["score"] = to_json(score());
    return j;
}

}  // namespace assist
