#pragma once

// Helpers shared by the unit tests and the acceptance binary: fixture paths,
// scratch directories, a brute-force signed-rank oracle and the generator of
// noisy utterance scripts.

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "assist/codec.hpp"

#include "assist/monitor.hpp"
#include "assist/scenario.hpp"
#include "assist/scoring.hpp"

namespace testing {

std::filesystem::path source_dir();
std::filesystem::path marchp_path();
std::shared_ptr<const assist::Scenario> marchp();
std::shared_ptr<const assist::ProcessMonitor> marchp_monitor();

// mkdtemp directory removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

// First pattern alternative of every step, in protocol order, spaced `gap`
// seconds apart starting at `first`.
assist::GroundTruthScript perfect_script(const assist::Scenario& scenario, double gap = 3, double first = 2);

// Two-tailed signed-rank p by listing all 2^m sign patterns of the nonzero
// Pratt ranks: min(1, 2 * min(P(W+ <= w), P(W+ >= w))).
double signed_rank_enumeration_p(const std::vector<double>& x, const std::vector<double>& y);

// A timed utterance script with text-level noise on top of a correct run:
// dropped, swapped, duplicated and garbled lines, stray chatter, negative
// replies and timing jitter that sometimes runs past the time limit. Text
// is non-empty ASCII letters and single spaces.
struct TimedLine {
    double offset = 0;
    std::string text;
};
std::vector<TimedLine> noisy_script(const assist::Scenario& scenario, std::mt19937_64& rng);

// Canonical bytes of a summary, the value compared across transports.
std::string summary_bytes(const assist::SessionSummary& summary);

// Server-sent events read on a background thread.
struct SseEvent {
    std::string event;
    std::string id;
    assist::Json data;
};

class SseReader {
public:
    SseReader(std::string host, int port, std::string path);
    ~SseReader();
    SseReader(const SseReader&) = delete;
    SseReader& operator=(const SseReader&) = delete;

    std::vector<SseEvent> events() const;
    // Waits until `done` holds for the events seen so far; false on timeout.
    bool wait_for(const std::function<bool(const std::vector<SseEvent>&)>& done, double seconds) const;
    // True once the stream has ended (server gone or closed).
    bool ended() const;
    void close();

private:
    void parse(std::string_view chunk);

    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    std::vector<SseEvent> events_;
    std::string buffer_;
    bool ended_ = false;
    bool closing_ = false;
    std::thread thread_;
};

}  // namespace testing
