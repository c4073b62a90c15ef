#include "bgm/world_sim.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <thread>

#include "bgm/error.hpp"

namespace bgm {
namespace {

using nlohmann::json;

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::ScenarioInvalid, what); }

// Portable [0, 1): std::uniform_real_distribution is not specified bit-exactly.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double step(std::mt19937_64& rng, double bound) { return (2.0 * unit(rng) - 1.0) * bound; }

void walk_step(SceneSnapshot& s, std::mt19937_64& rng) {
    s.temperature += step(rng, walk::kTemperatureStep);
    s.health = std::clamp(s.health + step(rng, walk::kHealthStep), 0.0, kMaxVital);
    for (const char* axis : {"x", "z"}) {
        const double delta = step(rng, walk::kPositionStep);
        auto it = s.position.find(axis);
        if (it != s.position.end()) {
            if (double* v = std::get_if<double>(&it->second)) *v += delta;
        }
    }
}

}  // namespace

SceneSnapshot default_world_state() {
    SceneSnapshot s;
    s.scene = "plains";
    s.time = "morning";
    s.weather = "clear";
    s.temperature = 0.8;
    s.health = kMaxVital;
    s.satiety = kMaxVital;
    s.status = {{"NotOnFire", true}, {"Wet", false}};
    s.movement = {{"NotRunning", true}, {"NotSneaking", true}, {"Speed", 0.1}};
    s.position = {{"x", 0.0}, {"y", 64.0}, {"z", 0.0}, {"OnGround", true}};
    return s;
}

SceneSnapshot apply_patch(const SceneSnapshot& state, const json& patch) {
    json merged = json(snapshot_to_json(state));
    for (const auto& [key, value] : patch.items()) {
        if (key == keys::kTimestamp) invalid("patches may not set Timestamp");
        merged[key] = value;
    }
    try {
        return snapshot_from_json(merged);
    } catch (const Error& e) {
        invalid(std::string("patch produces an invalid snapshot: ") + e.what());
    }
}

void Scenario::validate() const {
    if (emit_period_ms <= 0) invalid("emit_period_ms must be positive");
    if (duration_ms <= 0) invalid("duration_ms must be positive");
    if (biome_pool.empty()) invalid("biome_pool must not be empty");
    if (!initial.is_object()) invalid("initial must be an object");
    std::int64_t last = 0;
    for (const auto& e : events) {
        if (e.at_ms < 0) invalid("event times must be non-negative");
        if (e.at_ms < last) invalid("events must be sorted by at_ms");
        if (!e.patch.is_object()) invalid("event patch must be an object");
        last = e.at_ms;
    }
}

Scenario scenario_from_json(const json& doc) {
    if (!doc.is_object()) invalid("scenario must be a JSON object");
    Scenario s;
    try {
        s.seed = doc.value("seed", std::uint64_t{0});
        s.emit_period_ms = doc.at("emit_period_ms").get<std::int64_t>();
        s.duration_ms = doc.at("duration_ms").get<std::int64_t>();
        s.biome_pool = doc.at("biome_pool").get<std::vector<std::string>>();
        s.initial = doc.value("initial", json::object());
        for (const auto& e : doc.value("events", json::array())) {
            s.events.push_back({e.at("at_ms").get<std::int64_t>(), e.at("patch")});
        }
    } catch (const json::exception& e) {
        invalid(e.what());
    }
    s.validate();
    return s;
}

json scenario_to_json(const Scenario& s) {
    json events = json::array();
    for (const auto& e : s.events) events.push_back({{"at_ms", e.at_ms}, {"patch", e.patch}});
    return {
        {"seed", s.seed},
        {"emit_period_ms", s.emit_period_ms},
        {"duration_ms", s.duration_ms},
        {"biome_pool", s.biome_pool},
        {"initial", s.initial},
        {"events", events},
    };
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open scenario " + path.string(), path.string());
    try {
        return scenario_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        invalid(path.string() + ": " + e.what());
    }
}

std::vector<SceneSnapshot> simulate_stream(const Scenario& scenario) {
    scenario.validate();
    std::mt19937_64 rng(scenario.seed);
    SceneSnapshot state = default_world_state();
    state.scene = scenario.biome_pool[rng() % scenario.biome_pool.size()];
    state = apply_patch(state, scenario.initial);

    const std::int64_t count = scenario.duration_ms / scenario.emit_period_ms;
    std::vector<SceneSnapshot> out;
    out.reserve(static_cast<std::size_t>(count));
    auto next_event = scenario.events.begin();
    for (std::int64_t i = 0; i < count; ++i) {
        const std::int64_t t = i * scenario.emit_period_ms;
        if (i > 0) walk_step(state, rng);
        for (; next_event != scenario.events.end() && next_event->at_ms <= t; ++next_event) {
            state = apply_patch(state, next_event->patch);
        }
        state.timestamp_ms = t;
        out.push_back(state);
    }
    return out;
}

std::string to_jsonl(std::span<const SceneSnapshot> snapshots) {
    std::string out;
    for (const auto& s : snapshots) {
        out += serialize_snapshot(s);
        out += '\n';
    }
    return out;
}

json SendReport::to_json() const {
    return {{"sent", sent}, {"elapsed_ms", elapsed_ms}, {"max_skew_ms", max_skew_ms}, {"mean_skew_ms", mean_skew_ms}};
}

SendReport replay_snapshots(std::span<const SceneSnapshot> snapshots, const net::Endpoint& endpoint,
                            double time_scale) {
    using Clock = std::chrono::steady_clock;
    if (!(time_scale >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "time_scale must be >= 0", "time_scale");
    net::Socket socket = net::connect_tcp(endpoint);

    SendReport report;
    const auto start = Clock::now();
    const std::int64_t t0 = snapshots.empty() ? 0 : snapshots.front().timestamp_ms;
    double skew_sum = 0.0;
    for (const auto& s : snapshots) {
        const auto due = start + std::chrono::duration_cast<Clock::duration>(
                                     std::chrono::duration<double, std::milli>((s.timestamp_ms - t0) * time_scale));
        if (time_scale > 0.0) std::this_thread::sleep_until(due);
        const double skew = std::max(0.0, std::chrono::duration<double, std::milli>(Clock::now() - due).count());
        socket.write_all(serialize_snapshot(s) + "\n");
        ++report.sent;
        skew_sum += skew;
        report.max_skew_ms = std::max(report.max_skew_ms, skew);
    }
    report.elapsed_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    report.mean_skew_ms = report.sent ? skew_sum / static_cast<double>(report.sent) : 0.0;
    return report;
}

SendReport replay_to_collector(const Scenario& scenario, const net::Endpoint& endpoint, double time_scale) {
    const auto snapshots = simulate_stream(scenario);
    return replay_snapshots(snapshots, endpoint, time_scale);
}

}  // namespace bgm
