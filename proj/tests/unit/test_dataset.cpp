#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include "backends.hpp"
#include "bgm/dataset.hpp"
#include "bgm/error.hpp"
#include "bgm/text_util.hpp"
#include "bgm/world_sim.hpp"

using namespace bgm;
using namespace bgm::testing;
using nlohmann::json;

namespace {

const std::string kTemplates = BGM_DATA_DIR "/templates/";

SynthesisTemplates synthesis_templates() {
    return {load_template(kTemplates + "narrative.json"), load_template(kTemplates + "music.json")};
}

ReverseTemplates reverse_templates() {
    return {load_template(kTemplates + "scene_match.json"), load_template(kTemplates + "music.json")};
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("bgm_dataset_" + std::to_string(::getpid()) + "_" + name);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream(path, std::ios::binary) << content;
}

std::vector<CharacterizedData> pool(std::size_t n) {
    std::vector<CharacterizedData> out;
    for (std::size_t i = 0; i < n; ++i) {
        SceneSnapshot s = default_world_state();
        s.scene = i % 2 ? "desert" : "snowy taiga";
        out.push_back(characterize(s, detect_mode(s)));
    }
    return out;
}

}  // namespace

TEST_CASE("grid size and expansion order") {
    ScenarioGrid grid = load_grid(BGM_DATA_DIR "/grids/small.json");
    CHECK(grid.size() == 8);
    const auto points = expand_grid(grid);
    REQUIRE(points.size() == 8);
    CHECK(points[0].scene == "forest");
    CHECK(points[0].time == "morning");
    CHECK(points[0].weather == "clear");
    CHECK(points[1].weather == "rain");
    CHECK(points[2].time == "night");
    CHECK(points[4].scene == "desert");

    grid.player_states = {json{{"Being Attacked", true}}, json{{"Health", 3.0}}};
    CHECK(grid.size() == 16);
    const auto with_states = expand_grid(grid);
    CHECK(with_states[0].being_attacked);
    CHECK(with_states[1].health == 3.0);

    grid.limit = 5;
    CHECK(grid.size() == 5);
    CHECK(expand_grid(grid).size() == 5);
}

TEST_CASE("grid validation") {
    const auto code = [](const json& doc) {
        try {
            grid_from_json(doc).validate();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::IoFailure;
    };
    CHECK(code({{"scenes", json::array()}, {"times", {"day"}}, {"weathers", {"clear"}}}) == ErrorCode::ConfigInvalid);
    CHECK(code({{"scenes", {"a"}}, {"times", {"day"}}, {"weathers", {"clear"}}, {"limit", 0}}) ==
          ErrorCode::ConfigInvalid);
    CHECK_THROWS_AS(load_grid("/nonexistent/grid.json"), Error);
}

TEST_CASE("the full-scale grid yields 433 scene points") {
    const ScenarioGrid grid = load_grid(BGM_DATA_DIR "/grids/full_scale.json");
    CHECK(grid.size() == 433);
    CHECK(expand_grid(grid).size() == 433);
}

TEST_CASE("synthesis emits two pairs per point, deterministically") {
    const ScenarioGrid grid = load_grid(BGM_DATA_DIR "/grids/small.json");
    MockBackend mock;
    const auto pairs = synthesize_pairs(grid, mock, synthesis_templates());
    REQUIRE(pairs.size() == 16);
    std::size_t to_narrative = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const TrainingPair& p = pairs[i];
        CHECK(p.provenance == Provenance::Synthesized);
        CHECK(p.kind == (i % 2 == 0 ? PairKind::SceneToNarrative : PairKind::NarrativeToMusic));
        if (p.kind == PairKind::SceneToNarrative) {
            ++to_narrative;
            CHECK(p.input.rfind("Scene: ", 0) == 0);
            CHECK(pairs[i + 1].input == p.output);
        } else {
            CHECK(text::word_count(p.output) <= kMaxDescriptionWords);
        }
        CHECK_NOTHROW(p.validate());
    }
    CHECK(to_narrative == 8);

    MockBackend again;
    CHECK(synthesize_pairs(grid, again, synthesis_templates()) == pairs);
}

TEST_CASE("reverse pairing accepts matches and records rejections") {
    const std::vector<std::string> captions = {"calm flute by a river", "pounding war drums", "   ",
                                               "soft rain piano", "bright festival brass"};
    const auto scenes = pool(3);
    ScriptedBackend scripted([](const GenerationRequest& req, std::size_t) -> std::string {
        if (req.prompt.find("pounding war drums") != std::string::npos) return "NO_MATCH";
        return "A traveler rests in the snowy taiga at dusk.";
    });
    const ReversePairing out = reverse_pair(captions, scenes, scripted, reverse_templates());
    CHECK(out.pairs.size() == 3);
    REQUIRE(out.rejections.size() == 2);
    CHECK(out.rejections[0].index == 1);
    CHECK(out.rejections[0].reason == "no matching scene");
    CHECK(out.rejections[1].index == 2);
    for (const auto& p : out.pairs) {
        CHECK(p.kind == PairKind::NarrativeToMusic);
        CHECK(p.provenance == Provenance::ReversePaired);
        CHECK(p.input == "A traveler rests in the snowy taiga at dusk.");
    }
    CHECK(out.pairs[0].output == "calm flute by a river");

    // Every candidate scene is offered to the matcher.
    const auto requests = scripted.requests();
    REQUIRE_FALSE(requests.empty());
    CHECK(requests[0].prompt.find("[1] ") != std::string::npos);
    CHECK(requests[0].prompt.find("snowy taiga") != std::string::npos);
    CHECK(requests[0].task == GenerationTask::SceneMatch);

    ScriptedBackend silent([](const GenerationRequest&, std::size_t) { return std::string(); });
    StageConfig fast;
    fast.retry.initial_backoff = std::chrono::milliseconds(1);
    const std::vector<std::string> one = {"quiet strings"};
    const ReversePairing none = reverse_pair(one, scenes, silent, reverse_templates(), fast);
    CHECK(none.pairs.empty());
    CHECK(none.rejections.at(0).reason == "empty reply");

    CHECK_THROWS_AS(reverse_pair({}, scenes, silent, reverse_templates()), Error);
    CHECK_THROWS_AS(reverse_pair(one, {}, silent, reverse_templates()), Error);
}

TEST_CASE("export and import round trip") {
    const ScenarioGrid grid = load_grid(BGM_DATA_DIR "/grids/small.json");
    MockBackend mock;
    const auto pairs = synthesize_pairs(grid, mock, synthesis_templates());
    const auto path = temp_path("pairs.jsonl");
    CHECK(export_pairs(pairs, path) == 16);
    CHECK(import_pairs(path) == pairs);

    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    CHECK(first.rfind("{\"instruction\":", 0) == 0);
    const json doc = json::parse(first);
    CHECK(doc.at("kind") == "scene_to_narrative");
    CHECK(doc.at("provenance") == "synthesized");

    CHECK(export_pairs({}, path) == 0);
    CHECK(import_pairs(path).empty());
    std::filesystem::remove(path);

    try {
        export_pairs(pairs, "/nonexistent/dir/pairs.jsonl");
        FAIL("expected IoFailure");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IoFailure);
    }
    TrainingPair blank = pairs[0];
    blank.output.clear();
    CHECK_THROWS_AS(blank.validate(), Error);
}

TEST_CASE("caption and scene pool loaders") {
    const auto text_path = temp_path("captions.txt");
    write_file(text_path, "first caption\n\n  second caption  \n");
    CHECK(load_captions(text_path) == std::vector<std::string>{"first caption", "second caption"});

    const auto jsonl_path = temp_path("captions.jsonl");
    write_file(jsonl_path, "{\"id\": 1, \"caption\": \"a\"}\n{\"id\": 2, \"caption\": \"b\"}\n");
    CHECK(load_captions(jsonl_path) == std::vector<std::string>{"a", "b"});
    write_file(jsonl_path, "{\"id\": 1}\n");
    CHECK_THROWS_AS(load_captions(jsonl_path), Error);

    const auto pool_path = temp_path("pool.jsonl");
    SceneSnapshot combat = default_world_state();
    combat.being_attacked = true;
    write_file(pool_path, serialize_snapshot(default_world_state()) + "\n" + serialize_snapshot(combat) + "\n");
    const auto scenes = load_scene_pool(pool_path);
    REQUIRE(scenes.size() == 2);
    CHECK(scenes[0].find("Weather") != nullptr);
    CHECK(scenes[1].find("Weather") == nullptr);

    for (const auto& p : {text_path, jsonl_path, pool_path}) std::filesystem::remove(p);
}
