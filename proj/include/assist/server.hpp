#pragma once

// HTTP front end. Routes (JSON bodies unless noted):
//
//   GET  /healthz
//   POST /trainees                     {traineeId, displayName?, group}
//   GET  /trainees
//   GET  /trainees/{id}/errors         most frequent error steps
//   POST /scenarios                    scenario document
//   GET  /scenarios, GET /scenarios/{id}
//   POST /sessions                     {traineeId, scenarioId, mode?, iteration?, clientTimestamp?}
//   GET  /sessions, GET /sessions/{id}
//   POST /sessions/{id}/utterances     {text, clientTimestamp?}
//   POST /sessions/{id}/assessment     {implementationErrorOrdinals}
//   GET  /reports?grouping=cohort|pooled&format=json|text|csv
//   GET  /live?traineeId=&sessionId=   server-sent events: snapshot, delta, heartbeat
//
// docs/api.md describes the payloads.

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "assist/codec.hpp"
#include "assist/monitor.hpp"
#include "assist/scenario.hpp"
#include "assist/store.hpp"

namespace httplib {
class Server;
}

namespace assist {

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::filesystem::path data_dir = "data";
    double fuzzy_threshold = kDefaultFuzzyThreshold;
    // Use clientTimestamp (Unix seconds) instead of the receive time. Meant
    // for replaying recorded sessions; it also disables the timeout watchdog.
    bool trust_client_clock = false;
    double heartbeat_seconds = 5;
    bool durable = true;
    int worker_threads = 64;
    // Scenario files registered (and saved to the data directory) at start.
    std::vector<std::filesystem::path> scenario_files;
    // Unix seconds; defaults to the system clock.
    std::function<Seconds()> clock;
};

class Server {
public:
    explicit Server(ServerOptions options);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds and serves on background threads; returns once listening.
    void start();
    // Blocks until stop() is called from another thread or a signal handler.
    void wait();
    void stop();
    int port() const { return port_; }

    std::size_t session_count() const;

private:
    struct LiveSession {
        std::mutex mutex;
        std::shared_ptr<const ProcessMonitor> monitor;
        Session session;
        long long seq = 0;
        std::optional<std::vector<int>> implementation_errors;
    };

    struct Frame {
        std::string session_id;
        std::string text;
    };

    struct Subscriber {
        std::mutex mutex;
        std::condition_variable cv;
        std::deque<Frame> frames;
        std::optional<std::string> trainee_filter;
        std::optional<std::string> session_filter;
        bool closed = false;
    };

    void restore();
    void routes();
    void watchdog_loop();

    Seconds now() const;
    std::shared_ptr<const ProcessMonitor> monitor_for(const std::string& scenario_id);
    std::shared_ptr<LiveSession> find_session(const std::string& session_id) const;

    Json live_view(const LiveSession& live) const;
    // Call with live.mutex held so deltas of a session leave in order.
    void publish(const LiveSession& live, std::string_view cause);
    std::shared_ptr<Subscriber> subscribe(std::optional<std::string> trainee, std::optional<std::string> session);
    void unsubscribe(const std::shared_ptr<Subscriber>& subscriber);

    ServerOptions options_;
    std::unique_ptr<httplib::Server> http_;
    SessionStore store_;
    ScenarioRegistry registry_;

    mutable std::mutex monitors_mutex_;
    std::map<std::string, std::shared_ptr<const ProcessMonitor>> monitors_;

    mutable std::mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<LiveSession>, std::less<>> sessions_;
    std::map<std::string, std::string, std::less<>> active_by_trainee_;
    long long next_session_number_ = 1;
    std::mutex create_mutex_;

    std::mutex subscribers_mutex_;
    std::vector<std::shared_ptr<Subscriber>> subscribers_;

    std::atomic<bool> stopping_{false};
    std::thread listener_;
    std::thread watchdog_;
    std::mutex stop_mutex_;
    std::condition_variable stop_cv_;
    int port_ = 0;
};

}  // namespace assist
