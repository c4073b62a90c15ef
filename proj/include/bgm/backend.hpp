#pragma once
// Text-generation backends. A backend maps a conditioning prompt (plus model
// id and sampling parameters) to one generated string and its length.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "bgm/error.hpp"

namespace bgm {

// Which pipeline step issued the request. Remote backends ignore it; the mock
// uses it to pick a response shape.
enum class GenerationTask { Narrative, MusicDescription, SceneMatch, Freeform };

std::string_view to_string(GenerationTask task);

struct GenerationParams {
    std::string model;
    double temperature = 0.7;
    int max_tokens = 256;
    std::optional<std::uint64_t> seed;
};

struct GenerationRequest {
    std::string system;  // role preamble, sent as the system message
    std::string prompt;
    GenerationParams params;
    GenerationTask task = GenerationTask::Freeform;

    // Throws Error{ConfigInvalid}.
    void validate() const;
};

struct GenerationResult {
    std::string text;
    // Token count reported by the backend, else whitespace word count.
    std::size_t length = 0;
    bool length_from_backend = false;
    double latency_ms = 0.0;
};

class TextBackend {
public:
    virtual ~TextBackend() = default;
    // Throws Error{BackendUnavailable} or Error{ResponseMalformed}. Must be
    // safe to call concurrently.
    virtual GenerationResult complete(const GenerationRequest& request) = 0;
    virtual std::string model_id() const = 0;
};

// Deterministic stand-in for a language model: output is a pure function of
// (task, prompt, seed, model id). Fills fixed sentence frames with values it
// finds in the prompt ("Scene: ...; Time: ..." lists, mood words).
class MockBackend final : public TextBackend {
public:
    explicit MockBackend(std::string model = "mock-1", std::uint64_t default_seed = 0);

    GenerationResult complete(const GenerationRequest& request) override;
    std::string model_id() const override { return model_; }

    // Reply used for scene-match prompts with no candidate scenes.
    static constexpr std::string_view kNoMatch = "NO_MATCH";

private:
    std::string model_;
    std::uint64_t default_seed_;
};

struct RemoteBackendConfig {
    // e.g. "http://127.0.0.1:8000/v1"; requests go to <base_url>/chat/completions.
    std::string base_url;
    std::string model;
    std::string api_key_env = "BGM_API_KEY";
    std::chrono::milliseconds timeout{30000};

    static RemoteBackendConfig from_json(const nlohmann::json& document);
};

// Chat-completion HTTP client. Transport failures and non-2xx replies raise
// BackendUnavailable (http_status() carries the status); replies without
// choices[0].message.content raise ResponseMalformed.
class RemoteBackend final : public TextBackend {
public:
    explicit RemoteBackend(RemoteBackendConfig config);

    GenerationResult complete(const GenerationRequest& request) override;
    std::string model_id() const override { return config_.model; }

private:
    RemoteBackendConfig config_;
    std::string scheme_host_port_;
    std::string path_prefix_;
    std::string api_key_;
};

// Whether a failed call may be retried: transport errors, 429 and 5xx.
bool is_transient(const Error& error);

}  // namespace bgm
