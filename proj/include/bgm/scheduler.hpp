#pragma once
// The segment loop: window close -> aggregate -> characterize -> narrative ->
// music description -> sinks, with each description anchoring the next.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bgm/genstage.hpp"
#include "bgm/ingestion.hpp"

namespace bgm {

inline constexpr int kRecordSchemaVersion = 1;

struct SegmentRecord {
    std::uint64_t window_index = 0;
    std::int64_t t_start_ms = 0;
    std::int64_t t_end_ms = 0;
    std::optional<SceneSnapshot> aggregated_snapshot;  // absent when no data has arrived yet
    CharacterizedData characterized;
    ContextMode mode = ContextMode::Exploration;
    NarrativeText narrative;
    MusicDescription description;
    std::optional<std::uint64_t> anchor_window;
    std::string narrative_prompt;
    std::string music_prompt;
    std::map<std::string, double> stage_latencies_ms;
    std::optional<std::string> error;
    bool degraded = false;

    bool operator==(const SegmentRecord&) const = default;
};

nlohmann::json record_to_json(const SegmentRecord& record, bool include_timings = true);
// Throws Error{SchemaViolation}.
SegmentRecord record_from_json(const nlohmann::json& document);
// Sorted keys, no whitespace, shortest round-trip floats.
std::string canonical_json(const SegmentRecord& record, bool include_timings = true);

enum class SinkKind { JsonlFile, HttpPost, Stdout };

struct SinkSpec {
    SinkKind kind = SinkKind::Stdout;
    std::string target;     // file path or URL; unused for Stdout
    bool timings = true;    // include stage_latencies_ms in emitted records
    bool truncate = false;  // JsonlFile: start from an empty file

    // {"kind": "jsonl"|"http"|"stdout", "target": ..., "timings": bool, "truncate": bool}
    static SinkSpec from_json(const nlohmann::json& document);
    nlohmann::json to_json() const;
    // Throws Error{FatalConfig}.
    void validate() const;
};

class Sink {
public:
    virtual ~Sink() = default;
    // Throws Error{SinkUnavailable}.
    virtual void emit(const SegmentRecord& record) = 0;
    virtual const SinkSpec& spec() const = 0;
};

// `out` receives Stdout sink output.
std::unique_ptr<Sink> open_sink(const SinkSpec& spec, std::ostream& out);

inline void emit(Sink& sink, const SegmentRecord& record) { sink.emit(record); }

// Yields consecutive windows; nullopt ends the run.
class SegmentSource {
public:
    virtual ~SegmentSource() = default;
    virtual std::optional<SegmentBatch> next() = 0;
};

// Live windows from a collector. Polls so `stop` is honored within ~100 ms.
class CollectorSource final : public SegmentSource {
public:
    explicit CollectorSource(Collector& collector, const std::atomic<bool>* stop = nullptr)
        : collector_(collector), stop_(stop) {}
    std::optional<SegmentBatch> next() override;

private:
    Collector& collector_;
    const std::atomic<bool>* stop_;
};

// Offline windows over a recorded or simulated stream, by event time.
class ReplaySource final : public SegmentSource {
public:
    // Windows start at the earliest timestamp. `end_ms`, measured from there,
    // extends the run with trailing empty windows.
    ReplaySource(std::vector<SceneSnapshot> snapshots, std::int64_t window_ms,
                 std::optional<std::int64_t> end_ms = std::nullopt);
    std::optional<SegmentBatch> next() override;

private:
    WindowAssembler assembler_;
    std::int64_t origin_ms_ = 0;
    std::optional<std::uint64_t> last_window_;
};

struct PipelineTemplates {
    PromptTemplate narrative;
    PromptTemplate music;
};

enum class FailurePolicy {
    ReuseLast,  // a failed segment re-emits the previous description
    Empty,      // a failed segment emits an empty description
};

FailurePolicy failure_policy_from_string(std::string_view text);
std::string_view to_string(FailurePolicy policy);

struct PipelineConfig {
    StageConfig stage;
    std::optional<std::uint64_t> max_segments;
    FailurePolicy failure_policy = FailurePolicy::ReuseLast;
    // Used in place of a previous snapshot when the first windows are empty.
    std::optional<SceneSnapshot> default_snapshot;
    const std::atomic<bool>* stop = nullptr;
    std::size_t handoff_capacity = 4;
    // Diagnostics such as sink failures; defaults to standard error.
    std::function<void(std::string_view)> log;
};

struct LatencyStats {
    std::size_t count = 0;
    double p50 = 0.0;
    double p95 = 0.0;
    double max = 0.0;
};

LatencyStats latency_stats(std::vector<double> samples);

struct RunSummary {
    std::uint64_t segments = 0;
    std::uint64_t degraded = 0;
    std::uint64_t sink_failures = 0;
    std::map<std::string, LatencyStats> stage_latency_ms;
    // Per-segment wall time minus backend time, emission included.
    LatencyStats overhead_ms;
    // Live sources only: window delivery delay past the ideal boundary.
    LatencyStats boundary_skew_ms;
    double elapsed_ms = 0.0;

    nlohmann::json to_json() const;
};

// Throws Error{FatalConfig} before the loop starts; per-segment failures
// become degraded records and never stop the run.
RunSummary run_pipeline(SegmentSource& source, TextBackend& backend, const PipelineTemplates& templates,
                        std::span<const std::unique_ptr<Sink>> sinks, const PipelineConfig& config);

}  // namespace bgm
