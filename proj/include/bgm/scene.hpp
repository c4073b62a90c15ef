#pragma once
// Scene snapshot schema and the data characterization pass that turns a raw
// snapshot into the compact, mode-dependent view fed to the narrative prompt.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace bgm {

// Wire key names. These are also the names used by the retention lists.
namespace keys {
inline constexpr std::string_view kTimestamp = "Timestamp";
inline constexpr std::string_view kScene = "Scene";
inline constexpr std::string_view kTime = "Time";
inline constexpr std::string_view kWeather = "Weather";
inline constexpr std::string_view kTemperature = "Temperature";
inline constexpr std::string_view kHealth = "Health";
inline constexpr std::string_view kSatiety = "Satiety";
inline constexpr std::string_view kStatus = "Status";
inline constexpr std::string_view kMovement = "Movement";
inline constexpr std::string_view kPosition = "Position";
inline constexpr std::string_view kHostileEntity = "Hostile Entity";
inline constexpr std::string_view kBeingAttacked = "Being Attacked";
}  // namespace keys

inline constexpr double kMaxVital = 20.0;

using Scalar = std::variant<bool, double, std::string>;
// Nested maps are kept key-sorted so serialization is order-stable.
using FlagMap = std::map<std::string, Scalar, std::less<>>;

struct SceneSnapshot {
    std::int64_t timestamp_ms = 0;
    std::string scene;
    std::string time;
    std::string weather;
    double temperature = 0.0;
    double health = kMaxVital;
    double satiety = kMaxVital;
    FlagMap status;
    FlagMap movement;
    FlagMap position;
    FlagMap hostile_entity;
    bool being_attacked = false;
    // Unknown top-level keys from the wire record, value kept as compact JSON text.
    std::map<std::string, std::string> extra;

    bool operator==(const SceneSnapshot&) const = default;
};

enum class ContextMode { Combat, Exploration };

std::string_view to_string(ContextMode mode);
ContextMode context_mode_from_string(std::string_view text);

using FieldValue = std::variant<bool, double, std::string, FlagMap>;

struct Field {
    std::string key;
    FieldValue value;

    bool operator==(const Field&) const = default;
};

struct CharacterizedData {
    std::vector<Field> entries;  // in retention-list order
    ContextMode mode = ContextMode::Exploration;

    const FieldValue* find(std::string_view key) const;
    bool operator==(const CharacterizedData&) const = default;
};

// Parses one wire record. Throws Error{MalformedJson} or Error{SchemaViolation};
// the latter's subject() names the offending key.
SceneSnapshot parse_snapshot(std::string_view raw);
SceneSnapshot snapshot_from_json(const nlohmann::json& object);
nlohmann::ordered_json snapshot_to_json(const SceneSnapshot& snapshot);
std::string serialize_snapshot(const SceneSnapshot& snapshot);

// Throws Error{SchemaViolation} if a constructed snapshot breaks the range rules.
void validate(const SceneSnapshot& snapshot);

// The eleven scene elements as a generic field list, wire order.
std::vector<Field> to_fields(const SceneSnapshot& snapshot);

// Combat iff the player is being attacked or any hostile is nearby.
ContextMode detect_mode(const SceneSnapshot& snapshot);

std::span<const std::string_view> retain_list(ContextMode mode);

// Round half away from zero to two decimal places.
double round2(double value);

// Drops nested keys containing "Not", rounds reals to two decimals and keeps
// only the mode's retained top-level fields (absent ones are skipped).
CharacterizedData characterize(std::span<const Field> fields, ContextMode mode);
CharacterizedData characterize(const SceneSnapshot& snapshot, ContextMode mode);

nlohmann::json characterized_to_json(const CharacterizedData& data);
CharacterizedData characterized_from_json(const nlohmann::json& object, ContextMode mode);

nlohmann::json scalar_to_json(const Scalar& value);
nlohmann::json field_value_to_json(const FieldValue& value);

}  // namespace bgm
