#pragma once
// Instruction-input-output pairs for fine-tuning: synthesized from a grid of
// scene variations, or reverse-paired from existing music captions.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bgm/genstage.hpp"

namespace bgm {

enum class PairKind { SceneToNarrative, NarrativeToMusic };
enum class Provenance { Synthesized, ReversePaired };

std::string_view to_string(PairKind kind);
std::string_view to_string(Provenance provenance);

struct TrainingPair {
    std::string instruction;
    std::string input;
    std::string output;
    PairKind kind = PairKind::SceneToNarrative;
    Provenance provenance = Provenance::Synthesized;

    // Throws Error{SchemaViolation} on an empty text.
    void validate() const;
    bool operator==(const TrainingPair&) const = default;
};

// The cartesian product scenes x times x weathers x player_states, each point
// applied as a patch over `base`. An empty player_states counts as one state.
struct ScenarioGrid {
    std::vector<std::string> scenes;
    std::vector<std::string> times;
    std::vector<std::string> weathers;
    std::vector<nlohmann::json> player_states;  // partial wire records
    nlohmann::json base = nlohmann::json::object();
    std::optional<std::size_t> limit;           // keep the first N points

    std::size_t size() const;
    // Throws Error{ConfigInvalid}.
    void validate() const;
};

ScenarioGrid grid_from_json(const nlohmann::json& document);
ScenarioGrid load_grid(const std::filesystem::path& path);

// Grid points in row-major order (scene slowest, player state fastest).
std::vector<SceneSnapshot> expand_grid(const ScenarioGrid& grid);

struct SynthesisTemplates {
    PromptTemplate narrative;
    PromptTemplate music;
};

// Two pairs per grid point, in grid order: scene->narrative, then
// narrative->music. Throws the backend's Error.
std::vector<TrainingPair> synthesize_pairs(const ScenarioGrid& grid, TextBackend& backend,
                                           const SynthesisTemplates& templates, const StageConfig& config = {});

struct ReverseTemplates {
    PromptTemplate match;  // placeholders {caption} and {scenes}
    PromptTemplate music;  // supplies the pair instruction
};

struct Rejection {
    std::size_t index = 0;  // caption position
    std::string caption;
    std::string reason;
};

struct ReversePairing {
    std::vector<TrainingPair> pairs;
    std::vector<Rejection> rejections;
};

inline constexpr std::string_view kNoMatchReply = "NO_MATCH";

// One NarrativeToMusic pair per accepted caption; a NO_MATCH or empty reply
// becomes a Rejection. Throws Error{ConfigInvalid} on empty inputs and the
// backend's Error on transport failure.
ReversePairing reverse_pair(std::span<const std::string> captions, std::span<const CharacterizedData> scene_pool,
                            TextBackend& backend, const ReverseTemplates& templates, const StageConfig& config = {});

nlohmann::ordered_json pair_to_json(const TrainingPair& pair);
TrainingPair pair_from_json(const nlohmann::json& document);

// Returns the number of lines written. Throws Error{IoFailure}.
std::size_t export_pairs(std::span<const TrainingPair> pairs, const std::filesystem::path& path);
std::vector<TrainingPair> import_pairs(const std::filesystem::path& path);

// Plain text (one caption per line) or JSONL {"id", "caption"}, by content.
std::vector<std::string> load_captions(const std::filesystem::path& path);
// JSONL of wire snapshots, each characterized in its detected mode.
std::vector<CharacterizedData> load_scene_pool(const std::filesystem::path& path);

}  // namespace bgm
