#pragma once
// Two-stage generation: characterized scene data -> narrative text -> short
// music description, with the previous description carried in as an anchor.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "bgm/backend.hpp"
#include "bgm/prompt.hpp"
#include "bgm/scene.hpp"

namespace bgm {

inline constexpr std::size_t kMaxDescriptionWords = 20;
// Bound to {anchor} when there is no previous description.
inline constexpr std::string_view kNoAnchor = "none";

namespace placeholder {
inline constexpr std::string_view kInfoStr = "info_str";
inline constexpr std::string_view kScene = "scene";
inline constexpr std::string_view kAnchor = "anchor";
}  // namespace placeholder

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{250};
};

struct StageConfig {
    GenerationParams params;
    RetryPolicy retry;
};

struct NarrativeText {
    std::string text;
    std::uint64_t source_window = 0;

    bool operator==(const NarrativeText&) const = default;
};

struct MusicDescription {
    std::string text;
    std::size_t word_count = 0;
    std::optional<std::uint64_t> anchor_of;  // window whose description was the anchor

    bool operator==(const MusicDescription&) const = default;
};

struct Anchor {
    std::string text;
    std::uint64_t window = 0;
};

// What one stage sent and how long the backend took, retries and backoff included.
struct StageTrace {
    std::string prompt;
    double backend_ms = 0.0;
    int attempts = 0;
    std::size_t length = 0;
};

template <typename T>
struct Generated {
    T value;
    StageTrace trace;
};

// "Key: value" pairs joined by "; ", nested maps as "Key: (k1=v1, k2=v2)",
// reals with two decimals, in retention order.
std::string to_info_str(const CharacterizedData& data);

// Identity when `text` has at most `limit` whitespace tokens; otherwise keeps
// the first `limit` tokens and strips trailing punctuation other than a period.
std::string enforce_word_limit(std::string_view text, std::size_t limit);

// Calls the backend, retrying transport failures and empty replies with
// exponential backoff. Throws the last Error, or Error{EmptyGeneration}.
GenerationResult complete_with_retry(TextBackend& backend, const GenerationRequest& request,
                                     const RetryPolicy& retry, int* attempts_used = nullptr);

Generated<NarrativeText> generate_narrative(const CharacterizedData& data, std::uint64_t window,
                                            const PromptTemplate& tmpl, TextBackend& backend,
                                            const StageConfig& config);

Generated<MusicDescription> generate_music_description(const NarrativeText& narrative,
                                                       const std::optional<Anchor>& anchor,
                                                       const PromptTemplate& tmpl, TextBackend& backend,
                                                       const StageConfig& config);

}  // namespace bgm
