#include "assist/server.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>

#include <httplib.h>

#include "assist/error.hpp"
#include "assist/replay.hpp"
#include "assist/report.hpp"
#include "assist/scoring.hpp"

namespace assist {

namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump() + "\n", kJson);
}

void send_error(httplib::Response& res, int status, const std::string& message, Json extra = Json::object()) {
    Json body;
    body["error"] = message;
    for (const auto& [k, v] : extra.items()) body[k] = v;
    send_json(res, status, body);
}

// Runs a handler, turning library errors into HTTP status codes.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const ScenarioValidationError& e) {
        Json violations = Json::array();
        for (const auto& v : e.violations()) {
            Json item;
            item["stepId"] = v.step_id.empty() ? Json(nullptr) : Json(v.step_id);
            item["rule"] = to_string(v.rule);
            item["detail"] = v.detail;
            violations.push_back(std::move(item));
        }
        Json extra;
        extra["violations"] = std::move(violations);
        send_error(res, 422, e.what(), extra);
    } catch (const ParseError& e) {
        Json extra;
        extra["line"] = e.line();
        extra["column"] = e.column();
        extra["field"] = e.field();
        send_error(res, 400, e.what(), extra);
    } catch (const SchemaError& e) {
        send_error(res, 422, e.what());
    } catch (const NotFoundError& e) {
        send_error(res, 404, e.what());
    } catch (const ConflictError& e) {
        send_error(res, 409, e.what());
    } catch (const StateError& e) {
        send_error(res, 409, e.what());
    } catch (const DomainError& e) {
        send_error(res, 400, e.what());
    } catch (const Json::exception& e) {
        send_error(res, 400, std::string("bad request body: ") + e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, e.what());
    }
}

Json body_object(const httplib::Request& req) {
    Json j = parse_json_text(req.body.empty() ? std::string_view("{}") : std::string_view(req.body), "request body");
    if (!j.is_object()) throw DomainError("request body must be a JSON object");
    return j;
}

std::optional<Seconds> optional_number(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw DomainError(std::string("'") + key + "' must be a number");
    return it->get<double>();
}

std::string required_string(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string() || it->get<std::string>().empty())
        throw DomainError(std::string("'") + key + "' is required");
    return it->get<std::string>();
}

std::optional<std::string> query(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) return std::nullopt;
    return req.get_param_value(key);
}

bool finished(const Session& s) {
    return s.state == SessionState::Completed || s.state == SessionState::Failed;
}

std::string sse_frame(std::string_view event, const std::string& id, const Json& data) {
    std::string frame = "event: " + std::string(event) + "\n";
    if (!id.empty()) frame += "id: " + id + "\n";
    frame += "data: " + data.dump() + "\n\n";
    return frame;
}

}  // namespace

Server::Server(ServerOptions options)
    : options_(std::move(options)),
      http_(std::make_unique<httplib::Server>()),
      store_(options_.data_dir, StoreOptions{options_.durable}) {
    for (const auto& scenario : store_.load_scenarios()) registry_.add(scenario);
    for (const auto& file : options_.scenario_files) {
        Scenario scenario = load_scenario_file(file.string());
        registry_.add(scenario);
        store_.save_scenario(scenario);
    }
    restore();
    routes();
}

Server::~Server() {
    stop();
    if (listener_.joinable()) listener_.join();
    if (watchdog_.joinable()) watchdog_.join();
}

Seconds Server::now() const {
    if (options_.clock) return options_.clock();
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

std::shared_ptr<const ProcessMonitor> Server::monitor_for(const std::string& scenario_id) {
    const std::string key = lowercase(scenario_id);
    std::lock_guard lock(monitors_mutex_);
    auto it = monitors_.find(key);
    if (it != monitors_.end()) return it->second;
    auto scenario = registry_.find(key);
    if (!scenario) return nullptr;
    auto monitor = std::make_shared<const ProcessMonitor>(scenario, MonitorOptions{options_.fuzzy_threshold});
    monitors_.emplace(key, monitor);
    return monitor;
}

std::shared_ptr<Server::LiveSession> Server::find_session(const std::string& session_id) const {
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw NotFoundError("unknown session '" + session_id + "'");
    return it->second;
}

std::size_t Server::session_count() const {
    std::lock_guard lock(sessions_mutex_);
    return sessions_.size();
}

void Server::restore() {
    for (const auto& id : store_.session_ids()) {
        if (id.rfind("s-", 0) == 0) {
            try {
                next_session_number_ = std::max(next_session_number_, std::stoll(id.substr(2)) + 1);
            } catch (const std::exception&) {
            }
        }
        const auto records = store_.load_session(id);
        const std::string scenario_id = records.front().payload.value("scenarioId", std::string{});
        auto monitor = monitor_for(scenario_id);
        if (!monitor) {
            std::fprintf(stderr, "skipping session %s: scenario '%s' is not registered\n", id.c_str(),
                         scenario_id.c_str());
            continue;
        }
        auto live = std::make_shared<LiveSession>();
        StoredSession stored = replay_records(records, *monitor);
        live->monitor = monitor;
        live->session = std::move(stored.session);
        live->implementation_errors = std::move(stored.implementation_error_ordinals);
        live->seq = static_cast<long long>(records.size());
        if (live->session.state == SessionState::Active) active_by_trainee_[live->session.trainee_id] = id;
        sessions_.emplace(id, std::move(live));
    }
}

Json Server::live_view(const LiveSession& live) const {
    const Session& s = live.session;
    Json j = session_view(s, *live.monitor);
    Seconds reference = s.events.empty() ? s.started_at : s.events.back().at;
    if (s.ended_at)
        reference = *s.ended_at;
    else if (!options_.trust_client_clock)
        reference = std::max(now(), reference);
    j["seq"] = live.seq;
    j["elapsed"] = reference - s.started_at;
    j["idealTime"] = live.monitor->scenario().ideal_time;
    j["criticalWindow"] = {live.monitor->scenario().critical_window.min, live.monitor->scenario().critical_window.max};
    j["serverTime"] = now();
    return j;
}

void Server::publish(const LiveSession& live, std::string_view cause) {
    Json data = live_view(live);
    data["cause"] = cause;
    const std::string frame =
        sse_frame("delta", live.session.session_id + ":" + std::to_string(live.seq), data);
    std::lock_guard lock(subscribers_mutex_);
    for (const auto& sub : subscribers_) {
        if (sub->trainee_filter && *sub->trainee_filter != live.session.trainee_id) continue;
        if (sub->session_filter && *sub->session_filter != live.session.session_id) continue;
        {
            std::lock_guard sl(sub->mutex);
            sub->frames.push_back({live.session.session_id, frame});
        }
        sub->cv.notify_one();
    }
}

std::shared_ptr<Server::Subscriber> Server::subscribe(std::optional<std::string> trainee,
                                                      std::optional<std::string> session) {
    auto sub = std::make_shared<Subscriber>();
    sub->trainee_filter = std::move(trainee);
    sub->session_filter = std::move(session);
    {
        std::lock_guard lock(subscribers_mutex_);
        subscribers_.push_back(sub);
    }
    std::vector<std::shared_ptr<LiveSession>> live;
    {
        std::lock_guard lock(sessions_mutex_);
        for (const auto& [id, s] : sessions_) live.push_back(s);
    }
    for (const auto& s : live) {
        std::lock_guard lock(s->mutex);
        if (s->session.state != SessionState::Active) continue;
        if (sub->trainee_filter && *sub->trainee_filter != s->session.trainee_id) continue;
        if (sub->session_filter && *sub->session_filter != s->session.session_id) continue;
        const std::string frame =
            sse_frame("snapshot", s->session.session_id + ":" + std::to_string(s->seq), live_view(*s));
        std::lock_guard sl(sub->mutex);
        // Deltas queued before this point are covered by the snapshot.
        sub->frames.erase(std::remove_if(sub->frames.begin(), sub->frames.end(),
                                         [&](const Frame& f) { return f.session_id == s->session.session_id; }),
                          sub->frames.end());
        sub->frames.push_back({s->session.session_id, frame});
    }
    return sub;
}

void Server::unsubscribe(const std::shared_ptr<Subscriber>& subscriber) {
    std::lock_guard lock(subscribers_mutex_);
    subscribers_.erase(std::remove(subscribers_.begin(), subscribers_.end(), subscriber), subscribers_.end());
}

void Server::routes() {
    auto& svr = *http_;
    const int threads = options_.worker_threads;
    svr.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
    svr.set_default_headers({{"Access-Control-Allow-Origin", "*"}});

    svr.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
        Json j;
        j["status"] = "ok";
        j["sessions"] = session_count();
        send_json(res, 200, j);
    });

    svr.Post("/trainees", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const Json body = body_object(req);
            TraineeProfile profile;
            profile.trainee_id = required_string(body, "traineeId");
            profile.display_name = body.value("displayName", profile.trainee_id);
            profile.group = parse_trainee_group(required_string(body, "group"));
            const bool existed = store_.find_trainee(profile.trainee_id).has_value();
            send_json(res, existed ? 200 : 201, to_json(store_.add_trainee(profile)));
        });
    });

    svr.Get("/trainees", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            Json out = Json::array();
            for (const auto& t : store_.trainees()) out.push_back(to_json(t));
            send_json(res, 200, out);
        });
    });

    svr.Get(R"(/trainees/([^/]+)/errors)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            Json out = Json::array();
            for (const auto& e : store_.frequent_errors(req.matches[1].str(), registry_)) {
                Json item;
                item["scenarioId"] = e.scenario_id;
                item["stepId"] = e.step_id;
                item["ordinal"] = e.ordinal;
                item["count"] = e.count;
                out.push_back(std::move(item));
            }
            send_json(res, 200, out);
        });
    });

    svr.Post("/scenarios", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            Scenario scenario = parse_scenario_document(req.body);
            auto violations = validate_scenario(scenario);
            if (!violations.empty()) throw ScenarioValidationError(std::move(violations));
            const std::string key = lowercase(scenario.scenario_id);
            std::lock_guard create(create_mutex_);
            if (auto existing = registry_.find(key); existing && !(*existing == scenario)) {
                std::lock_guard lock(sessions_mutex_);
                for (const auto& [id, live] : sessions_) {
                    if (lowercase(live->monitor->scenario().scenario_id) == key)
                        throw ConflictError("scenario '" + scenario.scenario_id +
                                            "' already has sessions; upload it under a new id");
                }
            }
            registry_.add(scenario);
            store_.save_scenario(scenario);
            {
                std::lock_guard lock(monitors_mutex_);
                monitors_.erase(key);
            }
            Json out;
            out["scenarioId"] = scenario.scenario_id;
            out["title"] = scenario.title;
            out["stepCount"] = scenario.step_count();
            send_json(res, 201, out);
        });
    });

    svr.Get("/scenarios", [this](const httplib::Request&, httplib::Response& res) {
        Json out = Json::array();
        for (const auto& s : registry_.all()) {
            Json item;
            item["scenarioId"] = s->scenario_id;
            item["title"] = s->title;
            item["stepCount"] = s->step_count();
            out.push_back(std::move(item));
        }
        send_json(res, 200, out);
    });

    svr.Get(R"(/scenarios/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto s = registry_.get(req.matches[1].str());
            res.status = 200;
            res.set_content(serialize_scenario(*s), kJson);
        });
    });

    svr.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const Json body = body_object(req);
            const std::string trainee_id = required_string(body, "traineeId");
            const std::string scenario_id = required_string(body, "scenarioId");
            const Mode mode = parse_mode(body.value("mode", std::string("Training")));
            const int iteration = body.value("iteration", 1);
            if (iteration < 1) throw DomainError("'iteration' must be at least 1");
            const auto client_at = optional_number(body, "clientTimestamp");
            if (!store_.find_trainee(trainee_id)) throw NotFoundError("unknown trainee '" + trainee_id + "'");
            auto monitor = monitor_for(scenario_id);
            if (!monitor) throw NotFoundError("unknown scenario '" + scenario_id + "'");

            std::lock_guard create(create_mutex_);
            std::string id;
            {
                std::lock_guard lock(sessions_mutex_);
                if (auto active = active_by_trainee_.find(trainee_id); active != active_by_trainee_.end())
                    throw ConflictError("trainee '" + trainee_id + "' already has active session '" +
                                        active->second + "'");
                char buffer[32];
                std::snprintf(buffer, sizeof buffer, "s-%06lld", next_session_number_);
                id = buffer;
            }
            const Seconds start = options_.trust_client_clock && client_at ? *client_at : now();
            auto live = std::make_shared<LiveSession>();
            live->monitor = monitor;
            live->session = monitor->start(id, trainee_id, mode, start, iteration);
            EventRecord started = started_record(live->session);
            if (client_at) started.payload["clientAt"] = *client_at;
            store_.append(started);
            live->seq = 1;
            std::lock_guard session_lock(live->mutex);
            {
                std::lock_guard lock(sessions_mutex_);
                ++next_session_number_;
                sessions_.emplace(id, live);
                active_by_trainee_[trainee_id] = id;
            }
            publish(*live, "started");
            Json out = live_view(*live);
            send_json(res, 201, out);
        });
    });

    svr.Get("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto state = query(req, "state");
            const auto trainee = query(req, "traineeId");
            std::vector<std::shared_ptr<LiveSession>> all;
            {
                std::lock_guard lock(sessions_mutex_);
                for (const auto& [id, s] : sessions_) all.push_back(s);
            }
            Json out = Json::array();
            for (const auto& s : all) {
                std::lock_guard lock(s->mutex);
                if (state && *state != to_string(s->session.state)) continue;
                if (trainee && *trainee != s->session.trainee_id) continue;
                out.push_back(live_view(*s));
            }
            send_json(res, 200, out);
        });
    });

    svr.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto live = find_session(req.matches[1].str());
            std::lock_guard lock(live->mutex);
            const Session& s = live->session;
            Json out;
            out["session"] = live_view(*live);
            Json events = Json::array();
            for (const auto& e : s.events) events.push_back(to_json(e));
            out["events"] = std::move(events);
            out["errors"] = to_json(s.errors);
            out["implementationErrorOrdinals"] =
                live->implementation_errors ? Json(*live->implementation_errors) : Json(nullptr);
            if (finished(s)) {
                const SessionSummary summary = live->monitor->finalize(s);
                out["summary"] = to_json(summary);
                out["score"] = to_json(compute_pscore(summary, live->implementation_errors.value_or(std::vector<int>{}),
                                                      live->monitor->scenario()));
            } else {
                out["summary"] = nullptr;
                out["score"] = nullptr;
            }
            send_json(res, 200, out);
        });
    });

    svr.Post(R"(/sessions/([^/]+)/utterances)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const Json body = body_object(req);
            auto text_it = body.find("text");
            if (text_it == body.end() || !text_it->is_string()) throw DomainError("'text' is required");
            const std::string text = text_it->get<std::string>();
            const auto client_at = optional_number(body, "clientTimestamp");
            auto live = find_session(req.matches[1].str());

            std::lock_guard lock(live->mutex);
            if (finished(live->session)) {
                send_error(res, 410, "session '" + live->session.session_id + "' is " +
                                         std::string(to_string(live->session.state)));
                return;
            }
            Seconds at = options_.trust_client_clock && client_at ? *client_at : now();
            if (!options_.trust_client_clock) {
                const Seconds last = live->session.events.empty() ? live->session.started_at
                                                                  : live->session.events.back().at;
                at = std::max(at, last);
            }
            Session next = live->session;
            const UtteranceOutcome outcome = live->monitor->handle_utterance(next, text, at);
            const auto records = utterance_records(next, live->seq + 1, text, at, outcome, client_at);
            for (const auto& r : records) store_.append(r);

            live->session = std::move(next);
            live->seq += static_cast<long long>(records.size());
            if (finished(live->session)) {
                std::lock_guard sl(sessions_mutex_);
                auto active = active_by_trainee_.find(live->session.trainee_id);
                if (active != active_by_trainee_.end() && active->second == live->session.session_id)
                    active_by_trainee_.erase(active);
            }
            publish(*live, outcome.recorded ? "utterance" : "timeout");

            Json out;
            out["sessionId"] = live->session.session_id;
            out["kind"] = outcome.response ? Json(to_string(outcome.response->kind)) : Json(nullptr);
            out["text"] = outcome.response ? Json(outcome.response->text) : Json(nullptr);
            out["acceptedStep"] = outcome.accepted_step ? Json(*outcome.accepted_step) : Json(nullptr);
            out["advancedTo"] = outcome.advanced_to ? Json(*outcome.advanced_to) : Json(nullptr);
            out["errorsAppended"] = to_json(outcome.errors_appended);
            out["state"] = to_string(live->session.state);
            out["currentStepId"] =
                live->session.current_step_id ? Json(*live->session.current_step_id) : Json(nullptr);
            out["recorded"] = outcome.recorded;
            out["at"] = at;
            out["seq"] = live->seq;
            send_json(res, 200, out);
        });
    });

    svr.Post(R"(/sessions/([^/]+)/assessment)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const Json body = body_object(req);
            auto list = body.find("implementationErrorOrdinals");
            if (list == body.end() || !list->is_array())
                throw DomainError("'implementationErrorOrdinals' must be an array");
            auto live = find_session(req.matches[1].str());
            std::lock_guard lock(live->mutex);
            const int count = static_cast<int>(live->monitor->chain().size());
            std::vector<int> ordinals;
            for (const auto& o : *list) {
                if (!o.is_number_integer() || o.get<int>() < 1 || o.get<int>() > count)
                    throw DomainError("implementation error ordinals must be integers in 1.." + std::to_string(count));
                ordinals.push_back(o.get<int>());
            }
            const Session& s = live->session;
            const Seconds at = s.ended_at ? *s.ended_at
                                          : (s.events.empty() ? s.started_at : s.events.back().at);
            store_.append(assessment_record(s.session_id, live->seq + 1, at, ordinals));
            live->seq += 1;
            live->implementation_errors = ordinals;
            publish(*live, "assessment");
            Json out;
            out["sessionId"] = s.session_id;
            out["implementationErrorOrdinals"] = ordinals;
            out["seq"] = live->seq;
            if (finished(s)) {
                out["score"] = to_json(compute_pscore(live->monitor->finalize(s), ordinals, live->monitor->scenario()));
            } else {
                out["score"] = nullptr;
            }
            send_json(res, 200, out);
        });
    });

    svr.Get("/reports", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const Grouping grouping = parse_grouping(query(req, "grouping").value_or("cohort"));
            const std::string format = query(req, "format").value_or("json");
            const GroupReport report =
                group_report(collect_rows(store_, registry_, MonitorOptions{options_.fuzzy_threshold}), grouping);
            if (format == "json") {
                send_json(res, 200, to_json(report));
            } else if (format == "text") {
                res.set_content(render_text(report), "text/plain; charset=utf-8");
            } else if (format == "csv") {
                res.set_content(render_csv(report), "text/csv; charset=utf-8");
            } else {
                throw DomainError("unknown format '" + format + "' (expected json, text or csv)");
            }
        });
    });

    svr.Get("/live", [this](const httplib::Request& req, httplib::Response& res) {
        auto sub = subscribe(query(req, "traineeId"), query(req, "sessionId"));
        res.set_header("Cache-Control", "no-cache");
        const auto heartbeat = std::chrono::duration<double>(options_.heartbeat_seconds);
        res.set_chunked_content_provider(
            "text/event-stream",
            [this, sub, heartbeat](std::size_t, httplib::DataSink& sink) {
                std::deque<Frame> batch;
                {
                    std::unique_lock lock(sub->mutex);
                    sub->cv.wait_for(lock, heartbeat,
                                     [&] { return !sub->frames.empty() || sub->closed || stopping_; });
                    if (sub->closed || stopping_) {
                        lock.unlock();
                        sink.done();
                        return true;
                    }
                    batch.swap(sub->frames);
                }
                if (batch.empty()) {
                    Json beat;
                    beat["serverTime"] = now();
                    const std::string frame = sse_frame("heartbeat", "", beat);
                    return sink.write(frame.data(), frame.size());
                }
                for (const auto& f : batch) {
                    if (!sink.write(f.text.data(), f.text.size())) return false;
                }
                return true;
            },
            [this, sub](bool) { unsubscribe(sub); });
    });
}

void Server::watchdog_loop() {
    while (!stopping_) {
        {
            std::unique_lock lock(stop_mutex_);
            stop_cv_.wait_for(lock, std::chrono::milliseconds(250), [this] { return stopping_.load(); });
        }
        if (stopping_) break;
        std::vector<std::shared_ptr<LiveSession>> all;
        {
            std::lock_guard lock(sessions_mutex_);
            for (const auto& [trainee, session_id] : active_by_trainee_) {
                auto it = sessions_.find(session_id);
                if (it != sessions_.end()) all.push_back(it->second);
            }
        }
        for (const auto& live : all) {
            std::lock_guard lock(live->mutex);
            if (live->session.state != SessionState::Active) continue;
            Session next = live->session;
            const Seconds at = now();
            if (!live->monitor->check_timeout(next, at)) continue;
            try {
                store_.append(timeout_record(next, live->seq + 1, at));
            } catch (const std::exception& e) {
                std::fprintf(stderr, "cannot record timeout of %s: %s\n", next.session_id.c_str(), e.what());
                continue;
            }
            live->session = std::move(next);
            live->seq += 1;
            {
                std::lock_guard sl(sessions_mutex_);
                active_by_trainee_.erase(live->session.trainee_id);
            }
            publish(*live, "timeout");
        }
    }
}

void Server::start() {
    if (options_.port == 0) {
        port_ = http_->bind_to_any_port(options_.host);
    } else if (http_->bind_to_port(options_.host, options_.port)) {
        port_ = options_.port;
    } else {
        port_ = -1;
    }
    if (port_ <= 0) throw Error("cannot listen on " + options_.host + ":" + std::to_string(options_.port));
    listener_ = std::thread([this] { http_->listen_after_bind(); });
    if (!options_.trust_client_clock) watchdog_ = std::thread([this] { watchdog_loop(); });
    http_->wait_until_ready();
}

void Server::wait() {
    std::unique_lock lock(stop_mutex_);
    stop_cv_.wait(lock, [this] { return stopping_.load(); });
}

void Server::stop() {
    if (stopping_.exchange(true)) return;
    {
        std::lock_guard lock(subscribers_mutex_);
        for (const auto& sub : subscribers_) {
            std::lock_guard sl(sub->mutex);
            sub->closed = true;
            sub->cv.notify_all();
        }
    }
    {
        std::lock_guard lock(stop_mutex_);
        stop_cv_.notify_all();
    }
    http_->stop();
}

}  // namespace assist
