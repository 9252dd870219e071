#pragma once

// Append-only session log. Layout under the data directory:
//
//   events/YYYY-MM-DD.jsonl   one record per line, day taken from the record time (UTC)
//   trainees.jsonl            trainee profiles
//   scenarios/<id>.json       scenarios the sessions refer to
//
// Every line is a JSON object carrying "v":1. A line without its trailing
// newline is a torn write and is cut off when the store is opened.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "assist/codec.hpp"
#include "assist/scenario.hpp"

namespace assist {

inline constexpr int kLogVersion = 1;

enum class RecordType { Started, Event, Completed, Failed, Assessment };

std::string_view to_string(RecordType type);
RecordType parse_record_type(std::string_view text);

struct EventRecord {
    std::string session_id;
    long long seq = 0;
    Seconds at = 0;
    RecordType type = RecordType::Event;
    // Type-specific fields, in the order they are written.
    Json payload = Json::object();

    bool operator==(const EventRecord&) const = default;
};

Json to_json(const EventRecord& record);
EventRecord record_from_json(const Json& j);

enum class TraineeGroup { Control, Experiment };

std::string_view to_string(TraineeGroup group);
TraineeGroup parse_trainee_group(std::string_view text);

struct TraineeProfile {
    std::string trainee_id;
    std::string display_name;
    TraineeGroup group = TraineeGroup::Control;
    std::vector<std::string> sessions;

    bool operator==(const TraineeProfile&) const = default;
};

Json to_json(const TraineeProfile& profile);

struct ErrorFrequency {
    std::string scenario_id;
    std::string step_id;
    int ordinal = 0;
    int count = 0;

    bool operator==(const ErrorFrequency&) const = default;
};

struct StoreOptions {
    // fsync after every append. Batch writers may turn this off and call
    // sync() once at the end.
    bool durable = true;
};

class SessionStore {
public:
    // Creates the directory layout if missing, recovers torn tails and
    // indexes every record. Throws ParseError for damage that is not a torn
    // final line.
    explicit SessionStore(std::filesystem::path data_dir, StoreOptions options = {});

    const std::filesystem::path& data_dir() const { return data_dir_; }

    // Requires record.seq == last_seq(record.session_id) + 1, otherwise
    // OrderingError. Returns once the line is on disk (when durable).
    void append(const EventRecord& record);

    std::vector<EventRecord> load_session(std::string_view session_id) const;
    long long last_seq(std::string_view session_id) const;
    bool has_session(std::string_view session_id) const;
    // In order of first appearance.
    std::vector<std::string> session_ids() const;

    // ConflictError if the id exists with a different group or name.
    // Re-registering an identical profile is a no-op.
    TraineeProfile add_trainee(const TraineeProfile& profile);
    std::optional<TraineeProfile> find_trainee(std::string_view trainee_id) const;
    std::vector<TraineeProfile> trainees() const;

    void save_scenario(const Scenario& scenario);
    std::vector<Scenario> load_scenarios() const;

    // Error records of every session of the trainee, counted per step,
    // most frequent first, ties by ordinal. NotFoundError for an unknown
    // trainee.
    std::vector<ErrorFrequency> frequent_errors(std::string_view trainee_id,
                                                const ScenarioRegistry& registry) const;

    void sync();

private:
    void recover_and_index();
    void index(const EventRecord& record);
    void write_line(const std::filesystem::path& file, const std::string& line);

    std::filesystem::path data_dir_;
    StoreOptions options_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::vector<EventRecord>, std::less<>> sessions_;
    std::vector<std::string> session_order_;
    std::map<std::string, TraineeProfile, std::less<>> trainees_;
    std::vector<std::string> trainee_order_;
};

// YYYY-MM-DD of a Unix time in UTC.
std::string utc_day(Seconds unix_time);

}  // namespace assist
