#include "bgm/dataset.hpp"

#include <fstream>
#include <sstream>

#include "bgm/error.hpp"
#include "bgm/text_util.hpp"
#include "bgm/world_sim.hpp"

namespace bgm {

namespace {

using nlohmann::json;

[[noreturn]] void bad_grid(const std::string& what) { throw Error(ErrorCode::ConfigInvalid, "grid: " + what, "grid"); }

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string(), path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <typename Fn>
void for_each_line(const std::string& content, Fn&& fn) {
    std::istringstream in(content);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        fn(line, line_no);
    }
}

PairKind pair_kind_from_string(std::string_view s) {
    if (s == "scene_to_narrative") return PairKind::SceneToNarrative;
    if (s == "narrative_to_music") return PairKind::NarrativeToMusic;
    throw Error(ErrorCode::SchemaViolation, "unknown pair kind '" + std::string(s) + "'", "kind");
}

Provenance provenance_from_string(std::string_view s) {
    if (s == "synthesized") return Provenance::Synthesized;
    if (s == "reverse_paired") return Provenance::ReversePaired;
    throw Error(ErrorCode::SchemaViolation, "unknown provenance '" + std::string(s) + "'", "provenance");
}

std::string scene_list(std::span<const CharacterizedData> pool) {
    std::string out;
    for (std::size_t k = 0; k < pool.size(); ++k) {
        if (k) out += '\n';
        out += "[" + std::to_string(k + 1) + "] " + to_info_str(pool[k]);
    }
    return out;
}

}  // namespace

std::string_view to_string(PairKind kind) {
    return kind == PairKind::SceneToNarrative ? "scene_to_narrative" : "narrative_to_music";
}

std::string_view to_string(Provenance provenance) {
    return provenance == Provenance::Synthesized ? "synthesized" : "reverse_paired";
}

void TrainingPair::validate() const {
    if (text::trim(instruction).empty()) throw Error(ErrorCode::SchemaViolation, "pair instruction is empty", "instruction");
    if (text::trim(input).empty()) throw Error(ErrorCode::SchemaViolation, "pair input is empty", "input");
    if (text::trim(output).empty()) throw Error(ErrorCode::SchemaViolation, "pair output is empty", "output");
}

std::size_t ScenarioGrid::size() const {
    const std::size_t full =
        scenes.size() * times.size() * weathers.size() * std::max<std::size_t>(1, player_states.size());
    return limit ? std::min(full, *limit) : full;
}

void ScenarioGrid::validate() const {
    if (scenes.empty()) bad_grid("scenes must not be empty");
    if (times.empty()) bad_grid("times must not be empty");
    if (weathers.empty()) bad_grid("weathers must not be empty");
    if (!base.is_object()) bad_grid("base must be an object");
    for (const auto& p : player_states) {
        if (!p.is_object()) bad_grid("player_states entries must be objects");
    }
    if (limit && *limit == 0) bad_grid("limit must be positive");
}

ScenarioGrid grid_from_json(const json& doc) {
    ScenarioGrid g;
    try {
        g.scenes = doc.at("scenes").get<std::vector<std::string>>();
        g.times = doc.at("times").get<std::vector<std::string>>();
        g.weathers = doc.at("weathers").get<std::vector<std::string>>();
        if (doc.contains("player_states")) g.player_states = doc["player_states"].get<std::vector<json>>();
        if (doc.contains("base")) g.base = doc["base"];
        if (doc.contains("limit") && !doc["limit"].is_null()) g.limit = doc["limit"].get<std::size_t>();
    } catch (const json::exception& e) {
        bad_grid(e.what());
    }
    g.validate();
    return g;
}

ScenarioGrid load_grid(const std::filesystem::path& path) {
    try {
        return grid_from_json(json::parse(read_text(path)));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ConfigInvalid, path.string() + ": " + e.what(), path.string());
    }
}

std::vector<SceneSnapshot> expand_grid(const ScenarioGrid& grid) {
    grid.validate();
    const std::vector<json> states = grid.player_states.empty() ? std::vector<json>{json::object()} : grid.player_states;
    std::vector<SceneSnapshot> out;
    const std::size_t wanted = grid.size();
    try {
        const SceneSnapshot base = apply_patch(default_world_state(), grid.base);
        for (const auto& scene : grid.scenes) {
            for (const auto& time : grid.times) {
                for (const auto& weather : grid.weathers) {
                    for (const auto& state : states) {
                        if (out.size() == wanted) return out;
                        SceneSnapshot s = apply_patch(base, state);
                        s.scene = scene;
                        s.time = time;
                        s.weather = weather;
                        out.push_back(std::move(s));
                    }
                }
            }
        }
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ScenarioInvalid) throw;
        bad_grid(e.what());
    }
    return out;
}

std::vector<TrainingPair> synthesize_pairs(const ScenarioGrid& grid, TextBackend& backend,
                                           const SynthesisTemplates& templates, const StageConfig& config) {
    std::vector<TrainingPair> pairs;
    const auto points = expand_grid(grid);
    pairs.reserve(points.size() * 2);
    std::uint64_t index = 0;
    for (const SceneSnapshot& snapshot : points) {
        const CharacterizedData data = characterize(snapshot, detect_mode(snapshot));
        const auto narrative = generate_narrative(data, index, templates.narrative, backend, config);
        const auto music =
            generate_music_description(narrative.value, std::nullopt, templates.music, backend, config);
        pairs.push_back({templates.narrative.fine_tuning_instruction(), to_info_str(data), narrative.value.text,
                         PairKind::SceneToNarrative, Provenance::Synthesized});
        pairs.push_back({templates.music.fine_tuning_instruction(), narrative.value.text, music.value.text,
                         PairKind::NarrativeToMusic, Provenance::Synthesized});
        ++index;
    }
    return pairs;
}

ReversePairing reverse_pair(std::span<const std::string> captions, std::span<const CharacterizedData> scene_pool,
                            TextBackend& backend, const ReverseTemplates& templates, const StageConfig& config) {
    if (captions.empty()) throw Error(ErrorCode::ConfigInvalid, "no captions to pair", "captions");
    if (scene_pool.empty()) throw Error(ErrorCode::ConfigInvalid, "scene pool is empty", "scenes");
    const std::string scenes = scene_list(scene_pool);
    ReversePairing out;
    for (std::size_t i = 0; i < captions.size(); ++i) {
        const std::string caption = text::collapse_whitespace(captions[i]);
        if (caption.empty()) {
            out.rejections.push_back({i, captions[i], "caption is blank"});
            continue;
        }
        const std::string prompt = render_prompt(templates.match, {{"caption", caption}, {"scenes", scenes}});
        const GenerationRequest request{templates.match.role_preamble, prompt, config.params, GenerationTask::SceneMatch};
        std::string reply;
        try {
            reply = text::collapse_whitespace(complete_with_retry(backend, request, config.retry).text);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::EmptyGeneration) throw;
        }
        if (reply.empty()) {
            out.rejections.push_back({i, caption, "empty reply"});
        } else if (reply.find(kNoMatchReply) != std::string::npos) {
            out.rejections.push_back({i, caption, "no matching scene"});
        } else {
            out.pairs.push_back({templates.music.fine_tuning_instruction(), reply, caption, PairKind::NarrativeToMusic,
                                 Provenance::ReversePaired});
        }
    }
    return out;
}

nlohmann::ordered_json pair_to_json(const TrainingPair& p) {
    nlohmann::ordered_json out;
    out["instruction"] = p.instruction;
    out["input"] = p.input;
    out["output"] = p.output;
    out["kind"] = std::string(to_string(p.kind));
    out["provenance"] = std::string(to_string(p.provenance));
    return out;
}

TrainingPair pair_from_json(const json& doc) {
    TrainingPair p;
    try {
        p.instruction = doc.at("instruction").get<std::string>();
        p.input = doc.at("input").get<std::string>();
        p.output = doc.at("output").get<std::string>();
        p.kind = pair_kind_from_string(doc.at("kind").get<std::string>());
        p.provenance = provenance_from_string(doc.at("provenance").get<std::string>());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("training pair: ") + e.what());
    }
    p.validate();
    return p;
}

std::size_t export_pairs(std::span<const TrainingPair> pairs, const std::filesystem::path& path) {
    for (const auto& p : pairs) p.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string(), path.string());
    for (const auto& p : pairs) out << pair_to_json(p).dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::IoFailure, "write to " + path.string() + " failed", path.string());
    return pairs.size();
}

std::vector<TrainingPair> import_pairs(const std::filesystem::path& path) {
    std::vector<TrainingPair> pairs;
    for_each_line(read_text(path), [&](const std::string& line, std::size_t line_no) {
        if (text::trim(line).empty()) return;
        try {
            pairs.push_back(pair_from_json(json::parse(line)));
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::SchemaViolation, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    });
    return pairs;
}

std::vector<std::string> load_captions(const std::filesystem::path& path) {
    const std::string content = read_text(path);
    const auto first = text::trim(content);
    const bool jsonl = !first.empty() && first.front() == '{';
    std::vector<std::string> captions;
    for_each_line(content, [&](const std::string& line, std::size_t line_no) {
        if (text::trim(line).empty()) return;
        if (!jsonl) {
            captions.emplace_back(text::trim(line));
            return;
        }
        try {
            captions.push_back(json::parse(line).at("caption").get<std::string>());
        } catch (const json::exception& e) {
            throw Error(ErrorCode::SchemaViolation, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    });
    return captions;
}

std::vector<CharacterizedData> load_scene_pool(const std::filesystem::path& path) {
    std::vector<CharacterizedData> pool;
    for_each_line(read_text(path), [&](const std::string& line, std::size_t) {
        if (text::trim(line).empty()) return;
        const SceneSnapshot s = parse_snapshot(line);
        pool.push_back(characterize(s, detect_mode(s)));
    });
    return pool;
}

}  // namespace bgm
