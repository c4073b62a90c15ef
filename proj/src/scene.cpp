#include "bgm/scene.hpp"

#include <array>
#include <cmath>

#include "bgm/error.hpp"

namespace bgm {
namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 8> kCombatRetain = {
    keys::kScene, keys::kHealth, keys::kSatiety, keys::kStatus,
    keys::kMovement, keys::kPosition, keys::kHostileEntity, keys::kBeingAttacked,
};

constexpr std::array<std::string_view, 7> kExplorationRetain = {
    keys::kScene, keys::kTime, keys::kWeather, keys::kTemperature,
    keys::kStatus, keys::kMovement, keys::kPosition,
};

constexpr std::array<std::string_view, 12> kWireKeys = {
    keys::kTimestamp, keys::kScene, keys::kTime, keys::kWeather,
    keys::kTemperature, keys::kHealth, keys::kSatiety, keys::kStatus,
    keys::kMovement, keys::kPosition, keys::kHostileEntity, keys::kBeingAttacked,
};

[[noreturn]] void violation(std::string_view key, const std::string& what) {
    throw Error(ErrorCode::SchemaViolation, std::string(key) + ": " + what, std::string(key));
}

const json& require(const json& object, std::string_view key) {
    auto it = object.find(key);
    if (it == object.end()) violation(key, "required element missing");
    return *it;
}

std::string require_string(const json& object, std::string_view key) {
    const json& v = require(object, key);
    if (!v.is_string()) violation(key, "expected a string");
    return v.get<std::string>();
}

double require_number(const json& object, std::string_view key) {
    const json& v = require(object, key);
    if (!v.is_number()) violation(key, "expected a number");
    return v.get<double>();
}

enum class Allow { BoolOrNumber, StringOrNumber };

FlagMap require_map(const json& object, std::string_view key, Allow allow) {
    const json& v = require(object, key);
    if (!v.is_object()) violation(key, "expected an object");
    FlagMap out;
    for (const auto& [inner_key, inner] : v.items()) {
        const std::string path = std::string(key) + "." + inner_key;
        if (inner.is_number()) {
            out.emplace(inner_key, inner.get<double>());
        } else if (inner.is_boolean() && allow == Allow::BoolOrNumber) {
            out.emplace(inner_key, inner.get<bool>());
        } else if (inner.is_string() && allow == Allow::StringOrNumber) {
            out.emplace(inner_key, inner.get<std::string>());
        } else {
            violation(path, allow == Allow::BoolOrNumber ? "expected a boolean or number"
                                                         : "expected a string or number");
        }
    }
    return out;
}

bool is_wire_key(std::string_view key) {
    for (auto k : kWireKeys) {
        if (k == key) return true;
    }
    return false;
}

bool has_not(std::string_view key) { return key.find("Not") != std::string_view::npos; }

Scalar round_scalar(const Scalar& v) {
    if (const double* d = std::get_if<double>(&v)) return round2(*d);
    return v;
}

FieldValue characterize_value(const FieldValue& v) {
    if (const FlagMap* map = std::get_if<FlagMap>(&v)) {
        FlagMap kept;
        for (const auto& [inner_key, inner] : *map) {
            if (has_not(inner_key)) continue;
            kept.emplace(inner_key, round_scalar(inner));
        }
        return kept;
    }
    if (const double* d = std::get_if<double>(&v)) return round2(*d);
    return v;
}

Scalar scalar_from_json(const json& v, std::string_view path) {
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) return v.get<std::string>();
    violation(path, "expected a scalar");
}

}  // namespace

std::string_view to_string(ContextMode mode) {
    return mode == ContextMode::Combat ? "Combat" : "Exploration";
}

ContextMode context_mode_from_string(std::string_view text) {
    if (text == "Combat") return ContextMode::Combat;
    if (text == "Exploration") return ContextMode::Exploration;
    throw Error(ErrorCode::SchemaViolation, "unknown context mode '" + std::string(text) + "'", "mode");
}

const FieldValue* CharacterizedData::find(std::string_view key) const {
    for (const auto& f : entries) {
        if (f.key == key) return &f.value;
    }
    return nullptr;
}

void validate(const SceneSnapshot& s) {
    if (s.timestamp_ms < 0) violation(keys::kTimestamp, "must be non-negative");
    if (!std::isfinite(s.temperature)) violation(keys::kTemperature, "must be finite");
    if (!(s.health >= 0.0 && s.health <= kMaxVital)) violation(keys::kHealth, "must lie in [0, 20]");
    if (!(s.satiety >= 0.0 && s.satiety <= kMaxVital)) violation(keys::kSatiety, "must lie in [0, 20]");
}

SceneSnapshot snapshot_from_json(const json& object) {
    if (!object.is_object()) throw Error(ErrorCode::SchemaViolation, "snapshot must be a JSON object");

    SceneSnapshot s;
    const json& ts = require(object, keys::kTimestamp);
    if (!ts.is_number_integer()) violation(keys::kTimestamp, "expected an integer (ms)");
    s.timestamp_ms = ts.get<std::int64_t>();
    s.scene = require_string(object, keys::kScene);
    s.time = require_string(object, keys::kTime);
    s.weather = require_string(object, keys::kWeather);
    s.temperature = require_number(object, keys::kTemperature);
    s.health = require_number(object, keys::kHealth);
    s.satiety = require_number(object, keys::kSatiety);
    s.status = require_map(object, keys::kStatus, Allow::BoolOrNumber);
    s.movement = require_map(object, keys::kMovement, Allow::BoolOrNumber);
    s.position = require_map(object, keys::kPosition, Allow::BoolOrNumber);
    s.hostile_entity = require_map(object, keys::kHostileEntity, Allow::StringOrNumber);
    const json& attacked = require(object, keys::kBeingAttacked);
    if (!attacked.is_boolean()) violation(keys::kBeingAttacked, "expected a boolean");
    s.being_attacked = attacked.get<bool>();

    for (const auto& [key, value] : object.items()) {
        if (!is_wire_key(key)) s.extra.emplace(key, value.dump());
    }
    validate(s);
    return s;
}

SceneSnapshot parse_snapshot(std::string_view raw) {
    json object;
    try {
        object = json::parse(raw);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedJson, e.what());
    }
    if (!object.is_object()) throw Error(ErrorCode::MalformedJson, "expected a single JSON object");
    return snapshot_from_json(object);
}

json scalar_to_json(const Scalar& value) {
    return std::visit([](const auto& v) { return json(v); }, value);
}

json field_value_to_json(const FieldValue& value) {
    return std::visit(
        [](const auto& v) -> json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, FlagMap>) {
                json out = json::object();
                for (const auto& [k, inner] : v) out[k] = scalar_to_json(inner);
                return out;
            } else {
                return json(v);
            }
        },
        value);
}

nlohmann::ordered_json snapshot_to_json(const SceneSnapshot& s) {
    auto map_json = [](const FlagMap& m) {
        nlohmann::ordered_json out = nlohmann::ordered_json::object();
        for (const auto& [k, v] : m) {
            std::visit([&](const auto& x) { out[k] = x; }, v);
        }
        return out;
    };
    nlohmann::ordered_json out;
    out[keys::kTimestamp] = s.timestamp_ms;
    out[keys::kScene] = s.scene;
    out[keys::kTime] = s.time;
    out[keys::kWeather] = s.weather;
    out[keys::kTemperature] = s.temperature;
    out[keys::kHealth] = s.health;
    out[keys::kSatiety] = s.satiety;
    out[keys::kStatus] = map_json(s.status);
    out[keys::kMovement] = map_json(s.movement);
    out[keys::kPosition] = map_json(s.position);
    out[keys::kHostileEntity] = map_json(s.hostile_entity);
    out[keys::kBeingAttacked] = s.being_attacked;
    for (const auto& [k, raw] : s.extra) out[k] = nlohmann::ordered_json::parse(raw);
    return out;
}

std::string serialize_snapshot(const SceneSnapshot& snapshot) { return snapshot_to_json(snapshot).dump(); }

std::vector<Field> to_fields(const SceneSnapshot& s) {
    return {
        {std::string(keys::kScene), s.scene},
        {std::string(keys::kTime), s.time},
        {std::string(keys::kWeather), s.weather},
        {std::string(keys::kTemperature), s.temperature},
        {std::string(keys::kHealth), s.health},
        {std::string(keys::kSatiety), s.satiety},
        {std::string(keys::kStatus), s.status},
        {std::string(keys::kMovement), s.movement},
        {std::string(keys::kPosition), s.position},
        {std::string(keys::kHostileEntity), s.hostile_entity},
        {std::string(keys::kBeingAttacked), s.being_attacked},
    };
}

ContextMode detect_mode(const SceneSnapshot& snapshot) {
    return snapshot.being_attacked || !snapshot.hostile_entity.empty() ? ContextMode::Combat
                                                                       : ContextMode::Exploration;
}

std::span<const std::string_view> retain_list(ContextMode mode) {
    if (mode == ContextMode::Combat) return kCombatRetain;
    return kExplorationRetain;
}

double round2(double value) {
    if (!std::isfinite(value)) return value;
    const double scaled = value * 100.0;
    // Past 2^52 the scaled value has no fractional part left to round.
    if (std::fabs(scaled) >= 4503599627370496.0) return value;
    const double r = std::round(scaled) / 100.0;
    return r == 0.0 ? 0.0 : r;  // no negative zero
}

CharacterizedData characterize(std::span<const Field> fields, ContextMode mode) {
    CharacterizedData out;
    out.mode = mode;
    for (std::string_view name : retain_list(mode)) {
        for (const Field& f : fields) {
            if (f.key == name) {
                out.entries.push_back({f.key, characterize_value(f.value)});
                break;
            }
        }
    }
    return out;
}

CharacterizedData characterize(const SceneSnapshot& snapshot, ContextMode mode) {
    const auto fields = to_fields(snapshot);
    return characterize(fields, mode);
}

json characterized_to_json(const CharacterizedData& data) {
    json out = json::object();
    for (const auto& f : data.entries) out[f.key] = field_value_to_json(f.value);
    return out;
}

CharacterizedData characterized_from_json(const json& object, ContextMode mode) {
    if (!object.is_object()) throw Error(ErrorCode::SchemaViolation, "characterized data must be an object");
    CharacterizedData out;
    out.mode = mode;
    for (std::string_view name : retain_list(mode)) {
        auto it = object.find(name);
        if (it == object.end()) continue;
        if (it->is_object()) {
            FlagMap map;
            for (const auto& [k, v] : it->items()) map.emplace(k, scalar_from_json(v, std::string(name) + "." + k));
            out.entries.push_back({std::string(name), std::move(map)});
        } else {
            out.entries.push_back({std::string(name), std::visit([](auto&& s) -> FieldValue { return s; },
                                                                 scalar_from_json(*it, name))});
        }
    }
    return out;
}

}  // namespace bgm
