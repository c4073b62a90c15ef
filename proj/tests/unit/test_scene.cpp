#include <doctest.h>

#include <random>

#include "bgm/error.hpp"
#include "bgm/scene.hpp"
#include "bgm/text_util.hpp"

using namespace bgm;
using nlohmann::json;

namespace {

json full_record() {
    return json::parse(R"({
        "Timestamp": 1200,
        "Scene": "gravel hills",
        "Time": "midday",
        "Weather": "clear",
        "Temperature": 0.2345,
        "Health": 20.0,
        "Satiety": 18.5,
        "Status": {"NotOnFire": true, "Wet": false},
        "Movement": {"NotRunning": true, "NotSneaking": true, "Speed": 0.1},
        "Position": {"x": 10.5, "y": 64.0, "z": -3.25, "OnGround": true},
        "Hostile Entity": {},
        "Being Attacked": false
    })");
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::IoFailure;
}

std::string subject_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.subject();
    }
    return "";
}

}  // namespace

TEST_CASE("complete record parses with every field populated") {
    const SceneSnapshot s = snapshot_from_json(full_record());
    CHECK(s.timestamp_ms == 1200);
    CHECK(s.scene == "gravel hills");
    CHECK(s.time == "midday");
    CHECK(s.weather == "clear");
    CHECK(s.temperature == doctest::Approx(0.2345));
    CHECK(s.health == 20.0);
    CHECK(s.satiety == 18.5);
    CHECK(s.status.size() == 2);
    CHECK(std::get<bool>(s.status.at("NotOnFire")));
    CHECK(std::get<double>(s.movement.at("Speed")) == doctest::Approx(0.1));
    CHECK(std::get<double>(s.position.at("z")) == -3.25);
    CHECK(s.hostile_entity.empty());
    CHECK_FALSE(s.being_attacked);
    CHECK(s.extra.empty());
}

TEST_CASE("serialize then parse is the identity") {
    const SceneSnapshot s = snapshot_from_json(full_record());
    CHECK(parse_snapshot(serialize_snapshot(s)) == s);
}

TEST_CASE("unknown top-level keys survive a round trip") {
    json doc = full_record();
    doc["Dimension"] = "overworld";
    doc["Inventory"] = {{"torch", 12}};
    const SceneSnapshot s = snapshot_from_json(doc);
    REQUIRE(s.extra.size() == 2);
    CHECK(s.extra.at("Dimension") == "\"overworld\"");
    CHECK(parse_snapshot(serialize_snapshot(s)) == s);
}

TEST_CASE("missing key is a schema violation naming the key") {
    json doc = full_record();
    doc.erase("Scene");
    const auto fn = [&] { snapshot_from_json(doc); };
    CHECK(code_of(fn) == ErrorCode::SchemaViolation);
    CHECK(subject_of(fn) == "Scene");
}

TEST_CASE("range and type violations") {
    SUBCASE("health above 20") {
        json doc = full_record();
        doc["Health"] = 25.0;
        CHECK(code_of([&] { snapshot_from_json(doc); }) == ErrorCode::SchemaViolation);
        CHECK(subject_of([&] { snapshot_from_json(doc); }) == "Health");
    }
    SUBCASE("negative satiety") {
        json doc = full_record();
        doc["Satiety"] = -0.5;
        CHECK(code_of([&] { snapshot_from_json(doc); }) == ErrorCode::SchemaViolation);
    }
    SUBCASE("string where a number belongs") {
        json doc = full_record();
        doc["Temperature"] = "warm";
        CHECK(code_of([&] { snapshot_from_json(doc); }) == ErrorCode::SchemaViolation);
    }
    SUBCASE("fractional timestamp") {
        json doc = full_record();
        doc["Timestamp"] = 12.5;
        CHECK(code_of([&] { snapshot_from_json(doc); }) == ErrorCode::SchemaViolation);
    }
    SUBCASE("string flag inside Status") {
        json doc = full_record();
        doc["Status"]["Wet"] = "yes";
        CHECK(code_of([&] { snapshot_from_json(doc); }) == ErrorCode::SchemaViolation);
    }
    SUBCASE("hostile entity values may be strings or numbers") {
        json doc = full_record();
        doc["Hostile Entity"] = {{"Zombie", 3.0}, {"Boss", "Wither"}};
        CHECK(snapshot_from_json(doc).hostile_entity.size() == 2);
    }
}

TEST_CASE("malformed input") {
    CHECK(code_of([] { parse_snapshot("{\"Scene\": "); }) == ErrorCode::MalformedJson);
    CHECK(code_of([] { parse_snapshot("[1, 2]"); }) == ErrorCode::MalformedJson);
    CHECK(code_of([] { parse_snapshot(""); }) == ErrorCode::MalformedJson);
}

TEST_CASE("detect_mode") {
    SceneSnapshot s = snapshot_from_json(full_record());
    CHECK(detect_mode(s) == ContextMode::Exploration);
    s.being_attacked = true;
    CHECK(detect_mode(s) == ContextMode::Combat);
    s.being_attacked = false;
    s.hostile_entity = {{"Zombie", 3.0}};
    CHECK(detect_mode(s) == ContextMode::Combat);
}

TEST_CASE("round2 rounds half away from zero") {
    CHECK(round2(20.123456) == 20.12);
    CHECK(round2(0.125) == 0.13);
    CHECK(round2(-0.125) == -0.13);
    CHECK(round2(2.5) == 2.5);
    CHECK(round2(1.005) == doctest::Approx(1.0).epsilon(1e-12));  // 1.005 is stored below the midpoint
    CHECK(std::signbit(round2(-0.001)) == false);
}

TEST_CASE("combat characterization drops Not-keys and rounds") {
    SceneSnapshot s = snapshot_from_json(full_record());
    s.health = 20.123456;
    const CharacterizedData c = characterize(s, ContextMode::Combat);
    REQUIRE(c.find("Status") != nullptr);
    const auto& status = std::get<FlagMap>(*c.find("Status"));
    CHECK(status.size() == 1);
    CHECK(std::get<bool>(status.at("Wet")) == false);
    CHECK(std::get<double>(*c.find("Health")) == 20.12);
    CHECK(c.find("Weather") == nullptr);
    CHECK(c.find("Time") == nullptr);

    std::vector<std::string> keys;
    for (const auto& f : c.entries) keys.push_back(f.key);
    CHECK(keys == std::vector<std::string>{"Scene", "Health", "Satiety", "Status", "Movement", "Position",
                                           "Hostile Entity", "Being Attacked"});
}

TEST_CASE("exploration characterization keeps the environment and drops combat fields") {
    SceneSnapshot s = snapshot_from_json(full_record());
    s.hostile_entity = {{"Zombie", 3.0}};
    const CharacterizedData c = characterize(s, ContextMode::Exploration);
    std::vector<std::string> keys;
    for (const auto& f : c.entries) keys.push_back(f.key);
    CHECK(keys == std::vector<std::string>{"Scene", "Time", "Weather", "Temperature", "Status", "Movement", "Position"});
    CHECK(std::get<double>(*c.find("Temperature")) == 0.23);
    const auto& movement = std::get<FlagMap>(*c.find("Movement"));
    CHECK(movement.size() == 1);
    CHECK(movement.count("Speed") == 1);
}

TEST_CASE("empty nested maps stay as empty maps") {
    SceneSnapshot s = snapshot_from_json(full_record());
    s.status.clear();
    s.movement.clear();
    s.position.clear();
    const CharacterizedData c = characterize(s, ContextMode::Exploration);
    CHECK(std::get<FlagMap>(*c.find("Status")).empty());
    CHECK(std::get<FlagMap>(*c.find("Movement")).empty());
    CHECK(std::get<FlagMap>(*c.find("Position")).empty());
    CHECK(std::get<std::string>(*c.find("Scene")) == "gravel hills");
}

TEST_CASE("Not matching is a case-sensitive substring rule") {
    std::vector<Field> fields = {
        {"Status", FlagMap{{"IsNotWet", true}, {"nothing", 1.0}, {"NOTE", false}, {"Knot", true}}},
    };
    const CharacterizedData c = characterize(fields, ContextMode::Exploration);
    const auto& status = std::get<FlagMap>(*c.find("Status"));
    CHECK(status.count("IsNotWet") == 0);
    CHECK(status.count("nothing") == 1);
    CHECK(status.count("NOTE") == 1);
    CHECK(status.count("Knot") == 1);
}

TEST_CASE("missing retained fields are omitted") {
    std::vector<Field> fields = {{"Scene", std::string("forest")}, {"Health", 19.999}};
    const CharacterizedData c = characterize(fields, ContextMode::Combat);
    REQUIRE(c.entries.size() == 2);
    CHECK(std::get<double>(*c.find("Health")) == 20.0);
}

TEST_CASE("characterize is idempotent and json round-trips") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> vital(0.0, 20.0);
    for (int i = 0; i < 200; ++i) {
        SceneSnapshot s = snapshot_from_json(full_record());
        s.health = vital(rng);
        s.temperature = vital(rng) - 10.0;
        s.position["x"] = vital(rng) * 100.0;
        s.being_attacked = i % 3 == 0;
        for (ContextMode mode : {ContextMode::Combat, ContextMode::Exploration}) {
            const CharacterizedData once = characterize(s, mode);
            const CharacterizedData twice = characterize(once.entries, mode);
            CHECK(once == twice);
            CHECK(characterized_from_json(characterized_to_json(once), mode) == once);
        }
    }
}

TEST_CASE("context mode names") {
    CHECK(context_mode_from_string(to_string(ContextMode::Combat)) == ContextMode::Combat);
    CHECK(context_mode_from_string("Exploration") == ContextMode::Exploration);
    CHECK(code_of([] { context_mode_from_string("combat"); }) == ErrorCode::SchemaViolation);
}

TEST_CASE("text helpers") {
    CHECK(text::word_count("  a  b\tc\n") == 3);
    CHECK(text::word_count("") == 0);
    CHECK(text::collapse_whitespace("  one \n two\t\tthree ") == "one two three");
    CHECK(text::format_fixed2(-0.001) == "0.00");
    CHECK(text::format_fixed2(4.9) == "4.90");
    CHECK(text::to_lower_ascii("MiXeD") == "mixed");
}
