#pragma once

#include <atomic>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bgm/backend.hpp"
#include "bgm/ingestion.hpp"
#include "bgm/scheduler.hpp"

namespace bgm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFatal = 1;
inline constexpr int kExitUsage = 2;

enum class SourceKind { Simulate, Collector };

struct BackendSelection {
    std::string kind = "mock";  // "mock" or "remote"
    std::string model = "mock-1";
    std::optional<RemoteBackendConfig> remote;
};

// A full pipeline run. Relative paths resolve against the config file's
// directory; flags applied afterwards win.
struct RunConfig {
    SourceKind source = SourceKind::Simulate;
    std::filesystem::path scenario;  // simulate source
    CollectorConfig collector;       // collector source
    double window_seconds = 10.0;
    std::optional<std::uint64_t> max_segments;
    std::optional<std::uint64_t> seed;  // simulator and mock backend
    BackendSelection backend;
    GenerationParams params;
    RetryPolicy retry;
    std::filesystem::path narrative_template;
    std::filesystem::path music_template;
    std::vector<SinkSpec> sinks;
    FailurePolicy failure_policy = FailurePolicy::ReuseLast;

    // Throws Error{FatalConfig}.
    void validate() const;
};

// Directory holding the shipped templates, scenarios and grids; the
// BGM_DATA_DIR environment variable overrides the built-in location.
std::filesystem::path data_dir();

// Throws Error{FatalConfig}.
RunConfig run_config_from_json(const nlohmann::json& document, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

std::unique_ptr<TextBackend> make_backend(const BackendSelection& selection, std::optional<std::uint64_t> seed);

// Runs the pipeline described by `config`; Stdout sinks write to `out`.
RunSummary execute_run(const RunConfig& config, std::ostream& out, std::ostream& err,
                       const std::atomic<bool>* stop = nullptr);

// Entry point behind the scenebgm executable. Data goes to `out`, logs and
// usage errors to `err`.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Set by SIGINT/SIGTERM once install_signal_handlers() has run.
const std::atomic<bool>& stop_requested();
void install_signal_handlers();

}  // namespace bgm::cli
