#pragma once
// Deterministic synthetic game-world stream. A scenario is data: a seed, an
// emission cadence and a list of timed patches applied to the player state.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bgm/net.hpp"
#include "bgm/scene.hpp"

namespace bgm {

// Random walk step bounds, applied once per emission after the first.
namespace walk {
inline constexpr double kTemperatureStep = 0.02;
inline constexpr double kHealthStep = 0.5;
inline constexpr double kPositionStep = 2.0;  // on "x" and "z" only
}  // namespace walk

struct ScenarioEvent {
    std::int64_t at_ms = 0;
    // Partial wire record; each present key replaces that field wholesale.
    nlohmann::json patch = nlohmann::json::object();
};

struct Scenario {
    std::uint64_t seed = 0;
    std::int64_t emit_period_ms = 1000;
    std::int64_t duration_ms = 10000;
    std::vector<std::string> biome_pool;
    nlohmann::json initial = nlohmann::json::object();
    std::vector<ScenarioEvent> events;

    // Throws Error{ScenarioInvalid}.
    void validate() const;
};

// Plains, morning, clear, full health and satiety, standing at the origin.
SceneSnapshot default_world_state();
// Each key in `patch` replaces that field wholesale. Throws Error{ScenarioInvalid}.
SceneSnapshot apply_patch(const SceneSnapshot& state, const nlohmann::json& patch);

Scenario scenario_from_json(const nlohmann::json& document);
nlohmann::json scenario_to_json(const Scenario& scenario);
Scenario load_scenario(const std::filesystem::path& path);

// Emits floor(duration / period) snapshots at t = 0, P, 2P, ...
std::vector<SceneSnapshot> simulate_stream(const Scenario& scenario);

// Writes one wire record per line.
std::string to_jsonl(std::span<const SceneSnapshot> snapshots);

struct SendReport {
    std::uint64_t sent = 0;
    double elapsed_ms = 0.0;
    double max_skew_ms = 0.0;
    double mean_skew_ms = 0.0;

    nlohmann::json to_json() const;
};

// Sends snapshots over one TCP connection, pacing record i at
// timestamp_i * time_scale after the first; time_scale 0 sends back-to-back.
// Throws Error{ConnectionRefused}.
SendReport replay_snapshots(std::span<const SceneSnapshot> snapshots, const net::Endpoint& endpoint,
                            double time_scale);
SendReport replay_to_collector(const Scenario& scenario, const net::Endpoint& endpoint, double time_scale);

}  // namespace bgm
