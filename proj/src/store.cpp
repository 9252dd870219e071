#include "assist/store.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <climits>
#include <cstring>
#include <ctime>
#include <fstream>
#include <mutex>
#include <sstream>

#include "assist/error.hpp"

namespace fs = std::filesystem;

namespace assist {

namespace {

Json number(double value) {
    if (value == static_cast<double>(static_cast<long long>(value)) && value > -9.0e15 && value < 9.0e15)
        return static_cast<long long>(value);
    return value;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

[[noreturn]] void io_failure(const std::string& what, const fs::path& path) {
    throw Error(what + " " + path.string() + ": " + std::strerror(errno));
}

void fsync_directory(const fs::path& dir) {
    const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
    if (fd < 0) return;
    ::fsync(fd);
    ::close(fd);
}

// Cuts a trailing partial line; returns the complete lines.
std::vector<std::string> recover_lines(const fs::path& path) {
    std::string content = read_file(path);
    const std::size_t end = content.rfind('\n');
    const std::size_t keep = end == std::string::npos ? 0 : end + 1;
    if (keep != content.size()) {
        if (::truncate(path.c_str(), static_cast<off_t>(keep)) != 0) io_failure("cannot truncate", path);
        content.resize(keep);
    }
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < content.size()) {
        const std::size_t nl = content.find('\n', start);
        if (nl > start) lines.push_back(content.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

Json parse_line(const std::string& line, const fs::path& file, std::size_t line_number) {
    try {
        Json j = Json::parse(line);
        if (!j.is_object() || j.value("v", 0) != kLogVersion)
            throw ParseError("unsupported record in " + file.string(), line_number, 1);
        return j;
    } catch (const Json::parse_error& e) {
        throw ParseError("corrupt record in " + file.string() + ": " + e.what(), line_number,
                         e.byte > 0 ? e.byte : 1);
    }
}

}  // namespace

std::string_view to_string(RecordType type) {
    switch (type) {
        case RecordType::Started: return "started";
        case RecordType::Event: return "event";
        case RecordType::Completed: return "completed";
        case RecordType::Failed: return "failed";
        case RecordType::Assessment: return "assessment";
    }
    return "event";
}

RecordType parse_record_type(std::string_view text) {
    for (const auto type : {RecordType::Started, RecordType::Event, RecordType::Completed,
                            RecordType::Failed, RecordType::Assessment}) {
        if (to_string(type) == text) return type;
    }
    throw DomainError("unknown record type '" + std::string(text) + "'");
}

Json to_json(const EventRecord& record) {
    Json j;
    j["v"] = kLogVersion;
    j["type"] = to_string(record.type);
    j["sessionId"] = record.session_id;
    j["seq"] = record.seq;
    j["at"] = number(record.at);
    for (const auto& [key, value] : record.payload.items()) j[key] = value;
    return j;
}

EventRecord record_from_json(const Json& j) {
    EventRecord record;
    record.type = parse_record_type(j.at("type").get<std::string>());
    record.session_id = j.at("sessionId").get<std::string>();
    record.seq = j.at("seq").get<long long>();
    record.at = j.at("at").get<double>();
    for (const auto& [key, value] : j.items()) {
        if (key == "v" || key == "type" || key == "sessionId" || key == "seq" || key == "at") continue;
        record.payload[key] = value;
    }
    return record;
}

std::string_view to_string(TraineeGroup group) {
    return group == TraineeGroup::Control ? "Control" : "Experiment";
}

TraineeGroup parse_trainee_group(std::string_view text) {
    if (text == "Control") return TraineeGroup::Control;
    if (text == "Experiment") return TraineeGroup::Experiment;
    throw DomainError("unknown group '" + std::string(text) + "' (expected Control or Experiment)");
}

Json to_json(const TraineeProfile& profile) {
    Json j;
    j["traineeId"] = profile.trainee_id;
    j["displayName"] = profile.display_name;
    j["group"] = to_string(profile.group);
    j["sessions"] = profile.sessions;
    return j;
}

std::string utc_day(Seconds unix_time) {
    const std::time_t t = static_cast<std::time_t>(std::floor(unix_time));
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buffer[16];
    std::strftime(buffer, sizeof buffer, "%Y-%m-%d", &tm);
    return buffer;
}

SessionStore::SessionStore(fs::path data_dir, StoreOptions options)
    : data_dir_(std::move(data_dir)), options_(options) {
    fs::create_directories(data_dir_ / "events");
    fs::create_directories(data_dir_ / "scenarios");
    recover_and_index();
}

void SessionStore::recover_and_index() {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(data_dir_ / "events")) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::vector<EventRecord> records;
    for (const auto& file : files) {
        const auto lines = recover_lines(file);
        for (std::size_t i = 0; i < lines.size(); ++i) records.push_back(record_from_json(parse_line(lines[i], file, i + 1)));
    }
    std::map<std::string, std::vector<EventRecord>, std::less<>> grouped;
    for (auto& r : records) {
        if (!grouped.count(r.session_id)) session_order_.push_back(r.session_id);
        grouped[r.session_id].push_back(std::move(r));
    }
    for (auto& [id, list] : grouped) {
        // A session crossing midnight spans two files.
        std::sort(list.begin(), list.end(), [](const EventRecord& a, const EventRecord& b) { return a.seq < b.seq; });
        for (std::size_t i = 0; i < list.size(); ++i) {
            if (list[i].seq != static_cast<long long>(i + 1))
                throw OrderingError("stored session '" + id + "' has a sequence gap at " + std::to_string(i + 1));
        }
        sessions_.emplace(id, std::move(list));
    }

    const fs::path trainee_file = data_dir_ / "trainees.jsonl";
    if (fs::exists(trainee_file)) {
        const auto lines = recover_lines(trainee_file);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            const Json j = parse_line(lines[i], trainee_file, i + 1);
            TraineeProfile profile;
            profile.trainee_id = j.at("traineeId").get<std::string>();
            profile.display_name = j.value("displayName", profile.trainee_id);
            profile.group = parse_trainee_group(j.at("group").get<std::string>());
            if (!trainees_.count(profile.trainee_id)) trainee_order_.push_back(profile.trainee_id);
            trainees_[profile.trainee_id] = std::move(profile);
        }
    }
}

void SessionStore::write_line(const fs::path& file, const std::string& line) {
    const bool created = !fs::exists(file);
    const int fd = ::open(file.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) io_failure("cannot open", file);
    struct stat st {};
    ::fstat(fd, &st);
    const std::string data = line + "\n";
    std::size_t written = 0;
    while (written < data.size()) {
        const ssize_t n = ::write(fd, data.data() + written, data.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            const int saved = errno;
            (void)!::ftruncate(fd, st.st_size);
            ::close(fd);
            errno = saved;
            io_failure("cannot append to", file);
        }
        written += static_cast<std::size_t>(n);
    }
    if (options_.durable && ::fsync(fd) != 0) {
        ::close(fd);
        io_failure("cannot sync", file);
    }
    ::close(fd);
    if (created && options_.durable) fsync_directory(file.parent_path());
}

void SessionStore::append(const EventRecord& record) {
    std::unique_lock lock(mutex_);
    auto it = sessions_.find(record.session_id);
    const long long last = it == sessions_.end() ? 0 : static_cast<long long>(it->second.size());
    if (record.seq != last + 1)
        throw OrderingError("session '" + record.session_id + "' expects seq " + std::to_string(last + 1) +
                            ", got " + std::to_string(record.seq));
    if ((last == 0) != (record.type == RecordType::Started))
        throw StateError("a session log must begin with exactly one started record");
    if (last > 0 && record.type == RecordType::Event) {
        const auto finished = std::any_of(it->second.begin(), it->second.end(), [](const EventRecord& r) {
            return r.type == RecordType::Completed || r.type == RecordType::Failed;
        });
        if (finished) throw StateError("session '" + record.session_id + "' has already finished");
    }
    write_line(data_dir_ / "events" / (utc_day(record.at) + ".jsonl"), canonical_dump(to_json(record)));
    if (it == sessions_.end()) {
        session_order_.push_back(record.session_id);
        it = sessions_.emplace(record.session_id, std::vector<EventRecord>{}).first;
    }
    it->second.push_back(record);
}

std::vector<EventRecord> SessionStore::load_session(std::string_view session_id) const {
    std::shared_lock lock(mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw NotFoundError("unknown session '" + std::string(session_id) + "'");
    return it->second;
}

long long SessionStore::last_seq(std::string_view session_id) const {
    std::shared_lock lock(mutex_);
    auto it = sessions_.find(session_id);
    return it == sessions_.end() ? 0 : static_cast<long long>(it->second.size());
}

bool SessionStore::has_session(std::string_view session_id) const {
    std::shared_lock lock(mutex_);
    return sessions_.count(session_id) > 0;
}

std::vector<std::string> SessionStore::session_ids() const {
    std::shared_lock lock(mutex_);
    return session_order_;
}

TraineeProfile SessionStore::add_trainee(const TraineeProfile& profile) {
    if (profile.trainee_id.empty()) throw DomainError("trainee id must not be empty");
    {
        std::unique_lock lock(mutex_);
        auto it = trainees_.find(profile.trainee_id);
        if (it != trainees_.end()) {
            if (it->second.group != profile.group || it->second.display_name != profile.display_name)
                throw ConflictError("trainee '" + profile.trainee_id + "' already exists in group " +
                                    std::string(to_string(it->second.group)));
        } else {
            Json j;
            j["v"] = kLogVersion;
            j["type"] = "trainee";
            j["traineeId"] = profile.trainee_id;
            j["displayName"] = profile.display_name;
            j["group"] = to_string(profile.group);
            write_line(data_dir_ / "trainees.jsonl", canonical_dump(j));
            TraineeProfile stored = profile;
            stored.sessions.clear();
            trainees_.emplace(profile.trainee_id, std::move(stored));
            trainee_order_.push_back(profile.trainee_id);
        }
    }
    return *find_trainee(profile.trainee_id);
}

std::optional<TraineeProfile> SessionStore::find_trainee(std::string_view trainee_id) const {
    std::shared_lock lock(mutex_);
    auto it = trainees_.find(trainee_id);
    if (it == trainees_.end()) return std::nullopt;
    TraineeProfile profile = it->second;
    profile.sessions.clear();
    for (const auto& id : session_order_) {
        const auto& first = sessions_.find(id)->second.front();
        if (first.payload.value("traineeId", std::string{}) == trainee_id) profile.sessions.push_back(id);
    }
    return profile;
}

std::vector<TraineeProfile> SessionStore::trainees() const {
    std::vector<std::string> order;
    {
        std::shared_lock lock(mutex_);
        order = trainee_order_;
    }
    std::vector<TraineeProfile> out;
    for (const auto& id : order) out.push_back(*find_trainee(id));
    return out;
}

void SessionStore::save_scenario(const Scenario& scenario) {
    std::unique_lock lock(mutex_);
    const fs::path target = data_dir_ / "scenarios" / (lowercase(scenario.scenario_id) + ".json");
    const fs::path temp = target.string() + ".tmp";
    {
        std::ofstream out(temp, std::ios::binary | std::ios::trunc);
        out << serialize_scenario(scenario);
        if (!out) throw Error("cannot write " + temp.string());
    }
    fs::rename(temp, target);
    if (options_.durable) fsync_directory(target.parent_path());
}

std::vector<Scenario> SessionStore::load_scenarios() const {
    std::shared_lock lock(mutex_);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(data_dir_ / "scenarios")) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Scenario> out;
    for (const auto& file : files) out.push_back(load_scenario_file(file.string()));
    return out;
}

std::vector<ErrorFrequency> SessionStore::frequent_errors(std::string_view trainee_id,
                                                          const ScenarioRegistry& registry) const {
    std::shared_lock lock(mutex_);
    bool known = trainees_.count(trainee_id) > 0;
    std::map<std::pair<std::string, std::string>, ErrorFrequency> counts;
    for (const auto& id : session_order_) {
        const auto& records = sessions_.find(id)->second;
        if (records.front().payload.value("traineeId", std::string{}) != trainee_id) continue;
        known = true;
        const std::string scenario_id = records.front().payload.value("scenarioId", std::string{});
        const auto scenario = registry.find(scenario_id);
        for (const auto& record : records) {
            auto errors = record.payload.find("errorsAppended");
            if (errors == record.payload.end()) continue;
            for (const auto& e : *errors) {
                const std::string step = e.value("stepId", Json(nullptr)).is_null() ? std::string{}
                                                                                    : e["stepId"].get<std::string>();
                auto& entry = counts[{scenario_id, step}];
                entry.scenario_id = scenario_id;
                entry.step_id = step;
                const Step* s = scenario ? scenario->find_step(step) : nullptr;
                entry.ordinal = s ? s->ordinal : INT_MAX;
                ++entry.count;
            }
        }
    }
    if (!known) throw NotFoundError("unknown trainee '" + std::string(trainee_id) + "'");
    std::vector<ErrorFrequency> out;
    for (auto& [key, value] : counts) out.push_back(std::move(value));
    std::sort(out.begin(), out.end(), [](const ErrorFrequency& a, const ErrorFrequency& b) {
        if (a.count != b.count) return a.count > b.count;
        if (a.ordinal != b.ordinal) return a.ordinal < b.ordinal;
        if (a.scenario_id != b.scenario_id) return a.scenario_id < b.scenario_id;
        return a.step_id < b.step_id;
    });
    return out;
}

void SessionStore::sync() {
    std::unique_lock lock(mutex_);
    for (const auto& entry : fs::directory_iterator(data_dir_ / "events")) {
        const int fd = ::open(entry.path().c_str(), O_RDONLY | O_CLOEXEC);
        if (fd < 0) continue;
        ::fsync(fd);
        ::close(fd);
    }
    fsync_directory(data_dir_ / "events");
}

}  // namespace assist
