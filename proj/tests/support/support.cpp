#include "support.hpp"

#include <stdlib.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <httplib.h>

#include "assist/codec.hpp"

namespace testing {

namespace fs = std::filesystem;

fs::path source_dir() { return ASSIST_SOURCE_DIR; }

fs::path marchp_path() { return source_dir() / "scenarios" / "marchp_hemorrhage.json"; }

std::shared_ptr<const assist::Scenario> marchp() {
    static const auto scenario =
        std::make_shared<const assist::Scenario>(assist::load_scenario_file(marchp_path().string()));
    return scenario;
}

std::shared_ptr<const assist::ProcessMonitor> marchp_monitor() {
    static const auto monitor = std::make_shared<const assist::ProcessMonitor>(marchp());
    return monitor;
}

TempDir::TempDir() {
    std::string pattern = (fs::temp_directory_path() / "assist-test-XXXXXX").string();
    if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

assist::GroundTruthScript perfect_script(const assist::Scenario& scenario, double gap, double first) {
    assist::GroundTruthScript script;
    script.name = "perfect";
    double at = first;
    for (const assist::Step* step : assist::linearize(scenario)) {
        script.lines.push_back({at, step->pattern_alternatives().front(), true, std::nullopt});
        at += gap;
    }
    return script;
}

double signed_rank_enumeration_p(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = x[i] - y[i];
    // Pratt ranks by counting: everything strictly smaller, plus half of the
    // other members of the tie group.
    std::vector<double> ranks;
    std::vector<bool> positive;
    for (std::size_t i = 0; i < n; ++i) {
        if (d[i] == 0) continue;
        double smaller = 0;
        double equal = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (std::fabs(d[j]) < std::fabs(d[i])) smaller += 1;
            if (std::fabs(d[j]) == std::fabs(d[i])) equal += 1;
        }
        ranks.push_back(smaller + (equal + 1) / 2);
        positive.push_back(d[i] > 0);
    }
    const std::size_t m = ranks.size();
    if (m == 0) return 1.0;
    double observed = 0;
    for (std::size_t i = 0; i < m; ++i)
        if (positive[i]) observed += ranks[i];

    std::uint64_t at_most = 0;
    std::uint64_t at_least = 0;
    const std::uint64_t patterns = std::uint64_t{1} << m;
    for (std::uint64_t mask = 0; mask < patterns; ++mask) {
        double w = 0;
        for (std::size_t i = 0; i < m; ++i)
            if (mask >> i & 1) w += ranks[i];
        // Ranks are multiples of 1/2, so sums are exact in binary.
        if (w <= observed) ++at_most;
        if (w >= observed) ++at_least;
    }
    const double tail = static_cast<double>(std::min(at_most, at_least)) / static_cast<double>(patterns);
    return std::min(1.0, 2 * tail);
}

namespace {

const char* const kChatter[] = {"um",         "wait",          "hold on",      "what was next", "okay",
                                "sorry",      "let me check",  "the patient",  "bleeding",      "no",
                                "not yet",    "tourniquet",    "checking",     "right leg"};

std::string garble(std::string text, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> letter('a', 'z');
    std::uniform_int_distribution<std::size_t> pick(0, text.size() - 1);
    const int edits = 1 + static_cast<int>(rng() % 3);
    for (int e = 0; e < edits; ++e) {
        std::size_t i = pick(rng);
        if (text[i] != ' ') text[i] = static_cast<char>(letter(rng));
    }
    return text;
}

}  // namespace

std::vector<TimedLine> noisy_script(const assist::Scenario& scenario, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::string> base;
    for (const assist::Step* step : assist::linearize(scenario)) {
        const auto alternatives = step->pattern_alternatives();
        base.push_back(alternatives[rng() % alternatives.size()]);
    }
    // Swap a neighbouring pair now and then.
    for (std::size_t i = 0; i + 1 < base.size(); ++i)
        if (u(rng) < 0.05) std::swap(base[i], base[i + 1]);

    std::vector<std::string> texts;
    for (const auto& line : base) {
        const double r = u(rng);
        if (r < 0.07) continue;  // dropped
        if (r < 0.15) {
            texts.push_back(garble(line, rng));
            if (u(rng) < 0.6) texts.push_back(line);  // said again properly
            continue;
        }
        if (r < 0.20) {
            texts.push_back(kChatter[rng() % std::size(kChatter)]);
        }
        texts.push_back(line);
        if (u(rng) < 0.05) texts.push_back(line);  // duplicated
    }

    // Pace: mostly brisk, sometimes slow enough to run out of time. Offsets
    // are multiples of 1/4 s.
    const double pace = u(rng) < 0.15 ? 9.0 : 4.0;
    std::vector<TimedLine> lines;
    double at = 0;
    for (auto& text : texts) {
        at += 0.25 * static_cast<double>(1 + rng() % static_cast<std::uint64_t>(pace * 4));
        lines.push_back({at, std::move(text)});
    }
    return lines;
}

std::string summary_bytes(const assist::SessionSummary& summary) {
    return assist::canonical_dump(assist::to_json(summary));
}

SseReader::SseReader(std::string host, int port, std::string path) {
    thread_ = std::thread([this, host = std::move(host), port, path = std::move(path)] {
        httplib::Client client(host, port);
        client.set_read_timeout(60, 0);
        client.Get(path, [this](const char* data, std::size_t length) {
            parse(std::string_view(data, length));
            std::lock_guard lock(mutex_);
            return !closing_;
        });
        std::lock_guard lock(mutex_);
        ended_ = true;
        cv_.notify_all();
    });
}

SseReader::~SseReader() {
    close();
}

void SseReader::close() {
    {
        std::lock_guard lock(mutex_);
        closing_ = true;
    }
    if (thread_.joinable()) thread_.join();
}

void SseReader::parse(std::string_view chunk) {
    std::lock_guard lock(mutex_);
    buffer_ += chunk;
    std::size_t end;
    while ((end = buffer_.find("\n\n")) != std::string::npos) {
        const std::string frame = buffer_.substr(0, end);
        buffer_.erase(0, end + 2);
        SseEvent e;
        std::istringstream lines(frame);
        std::string line;
        while (std::getline(lines, line)) {
            if (line.rfind("event: ", 0) == 0) e.event = line.substr(7);
            else if (line.rfind("id: ", 0) == 0) e.id = line.substr(4);
            else if (line.rfind("data: ", 0) == 0) e.data = assist::Json::parse(line.substr(6));
        }
        events_.push_back(std::move(e));
    }
    cv_.notify_all();
}

std::vector<SseEvent> SseReader::events() const {
    std::lock_guard lock(mutex_);
    return events_;
}

bool SseReader::ended() const {
    std::lock_guard lock(mutex_);
    return ended_;
}

bool SseReader::wait_for(const std::function<bool(const std::vector<SseEvent>&)>& done, double seconds) const {
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, std::chrono::duration<double>(seconds), [&] { return done(events_) || ended_; }) &&
           done(events_);
}

}  // namespace testing
