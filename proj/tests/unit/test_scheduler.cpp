#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "backends.hpp"
#include "bgm/error.hpp"
#include "bgm/scheduler.hpp"
#include "bgm/world_sim.hpp"
#include "stub_server.hpp"

using namespace bgm;
using namespace bgm::testing;
using nlohmann::json;

namespace {

PipelineTemplates templates() {
    const std::string dir = BGM_DATA_DIR "/templates/";
    return {load_template(dir + "narrative.json"), load_template(dir + "music.json")};
}

class CaptureSink final : public Sink {
public:
    void emit(const SegmentRecord& record) override { records.push_back(record); }
    const SinkSpec& spec() const override { return spec_; }
    std::vector<SegmentRecord> records;

private:
    SinkSpec spec_;
};

std::vector<SceneSnapshot> stream(int windows, std::int64_t window_ms) {
    std::vector<SceneSnapshot> out;
    for (int w = 0; w < windows; ++w) {
        SceneSnapshot s = default_world_state();
        s.timestamp_ms = w * window_ms + window_ms / 2;
        s.scene = w % 2 ? "desert" : "forest";
        out.push_back(s);
    }
    return out;
}

PipelineConfig quiet_config() {
    PipelineConfig c;
    c.stage.retry.initial_backoff = std::chrono::milliseconds(1);
    c.log = [](std::string_view) {};
    return c;
}

struct Run {
    std::vector<SegmentRecord> records;
    RunSummary summary;
};

Run run(std::vector<SceneSnapshot> snapshots, TextBackend& backend, const PipelineConfig& config,
        std::optional<std::int64_t> end_ms = std::nullopt) {
    ReplaySource source(std::move(snapshots), 1000, end_ms);
    auto capture = std::make_unique<CaptureSink>();
    CaptureSink* raw = capture.get();
    std::vector<std::unique_ptr<Sink>> sinks;
    sinks.push_back(std::move(capture));
    Run r;
    r.summary = run_pipeline(source, backend, templates(), sinks, config);
    r.records = raw->records;
    return r;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("bgm_sched_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST_CASE("record json round trip, with and without timings") {
    MockBackend mock;
    const auto records = run(stream(2, 1000), mock, quiet_config()).records;
    REQUIRE(records.size() == 2);
    for (const auto& r : records) {
        const json doc = record_to_json(r);
        CHECK(doc.at("schema_version") == kRecordSchemaVersion);
        CHECK(record_from_json(doc) == r);
        CHECK(record_from_json(json::parse(canonical_json(r))) == r);
        const json bare = record_to_json(r, false);
        CHECK_FALSE(bare.contains("stage_latencies_ms"));
        CHECK(canonical_json(r, false).find('\n') == std::string::npos);
    }
    json broken = record_to_json(records[0]);
    broken.erase("description");
    CHECK_THROWS_AS(record_from_json(broken), Error);
}

TEST_CASE("each description anchors the next") {
    MockBackend mock;
    const auto records = run(stream(4, 1000), mock, quiet_config()).records;
    REQUIRE(records.size() == 4);
    CHECK_FALSE(records[0].anchor_window.has_value());
    CHECK(records[0].music_prompt.find("Previous music description: none") != std::string::npos);
    for (std::size_t k = 1; k < records.size(); ++k) {
        CHECK(records[k].anchor_window == k - 1);
        CHECK(records[k].description.anchor_of == k - 1);
        CHECK(records[k].music_prompt.find(records[k - 1].description.text) != std::string::npos);
        CHECK(records[k].music_prompt.find(records[k].narrative.text) != std::string::npos);
    }
    for (const auto& r : records) {
        CHECK(r.description.word_count <= kMaxDescriptionWords);
        CHECK_FALSE(r.degraded);
        CHECK(r.narrative.source_window == r.window_index);
    }
}

TEST_CASE("empty windows reuse the previous snapshot") {
    MockBackend mock;
    auto snapshots = stream(1, 1000);
    const auto records = run(snapshots, mock, quiet_config(), 3000).records;
    REQUIRE(records.size() == 3);
    CHECK(records[1].aggregated_snapshot == records[0].aggregated_snapshot);
    CHECK_FALSE(records[2].degraded);
}

TEST_CASE("no data at all degrades unless a default snapshot is given") {
    MockBackend mock;
    PipelineConfig config = quiet_config();
    const auto bare = run({}, mock, config, 2000).records;
    REQUIRE(bare.size() == 2);
    CHECK(bare[0].degraded);
    CHECK_FALSE(bare[0].aggregated_snapshot.has_value());
    REQUIRE(bare[0].error.has_value());
    CHECK(bare[0].error->find("NoDataEver") != std::string::npos);

    config.default_snapshot = default_world_state();
    const auto seeded = run({}, mock, config, 2000).records;
    CHECK_FALSE(seeded[0].degraded);
}

TEST_CASE("degraded segments follow the failure policy and the run continues") {
    MockBackend mock;
    FaultInjectingBackend flaky(mock, {1});
    const Run reuse = run(stream(3, 1000), flaky, quiet_config());
    REQUIRE(reuse.records.size() == 3);
    CHECK(reuse.summary.degraded == 1);
    CHECK(reuse.records[1].degraded);
    CHECK(reuse.records[1].description.text == reuse.records[0].description.text);
    CHECK(reuse.records[1].description.anchor_of == 0u);
    CHECK(reuse.records[1].error->find("injected fault") != std::string::npos);
    CHECK_FALSE(reuse.records[2].degraded);
    CHECK(reuse.records[2].anchor_window == 1u);

    FaultInjectingBackend flaky2(mock, {1});
    PipelineConfig config = quiet_config();
    config.failure_policy = FailurePolicy::Empty;
    const Run empty = run(stream(3, 1000), flaky2, config);
    CHECK(empty.records[1].description.text.empty());
    CHECK(empty.records[1].description.word_count == 0);
    CHECK(empty.records[2].music_prompt.find("Previous music description: none") != std::string::npos);

    CHECK(failure_policy_from_string(to_string(FailurePolicy::Empty)) == FailurePolicy::Empty);
    CHECK_THROWS_AS(failure_policy_from_string("skip"), Error);
}

TEST_CASE("configuration errors are fatal before the loop") {
    MockBackend mock;
    ReplaySource source(stream(1, 1000), 1000);
    std::vector<std::unique_ptr<Sink>> none;
    const auto code = [&](const std::function<void()>& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::IoFailure;
    };
    CHECK(code([&] { run_pipeline(source, mock, templates(), none, quiet_config()); }) == ErrorCode::FatalConfig);

    std::vector<std::unique_ptr<Sink>> sinks;
    sinks.push_back(std::make_unique<CaptureSink>());
    PipelineTemplates bad = templates();
    bad.music.body = "Scene: {scene}";
    bad.music.placeholders = {"scene"};
    CHECK(code([&] { run_pipeline(source, mock, bad, sinks, quiet_config()); }) == ErrorCode::FatalConfig);

    PipelineConfig config = quiet_config();
    config.stage.params.max_tokens = 0;
    CHECK(code([&] { run_pipeline(source, mock, templates(), sinks, config); }) == ErrorCode::FatalConfig);

    SinkSpec spec;
    spec.kind = SinkKind::HttpPost;
    spec.target = "not a url";
    CHECK(code([&] { spec.validate(); }) == ErrorCode::FatalConfig);
    CHECK(code([] { SinkSpec::from_json({{"kind", "kafka"}}); }) == ErrorCode::FatalConfig);
}

TEST_CASE("max_segments bounds the run") {
    MockBackend mock;
    PipelineConfig config = quiet_config();
    config.max_segments = 2;
    CHECK(run(stream(5, 1000), mock, config).records.size() == 2);
}

TEST_CASE("jsonl sink appends one canonical line per record") {
    MockBackend mock;
    const auto path = temp_path("out.jsonl");
    std::filesystem::remove(path);
    SinkSpec spec{SinkKind::JsonlFile, path.string(), false, true};
    CHECK(SinkSpec::from_json(spec.to_json()).target == spec.target);
    std::ostringstream unused;
    {
        auto sink = open_sink(spec, unused);
        const auto records = run(stream(3, 1000), mock, quiet_config()).records;
        for (const auto& r : records) emit(*sink, r);
    }
    std::ifstream in(path);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    REQUIRE(lines.size() == 3);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const SegmentRecord r = record_from_json(json::parse(lines[i]));
        CHECK(r.window_index == i);
        CHECK(canonical_json(r, false) == lines[i]);
    }
    std::filesystem::remove(path);

    const SinkSpec unwritable{SinkKind::JsonlFile, "/nonexistent/dir/out.jsonl"};
    CHECK_THROWS_AS(open_sink(unwritable, unused), Error);
}

TEST_CASE("http sink posts records and treats 2xx as acknowledgement") {
    StubServer server;
    server.post("/segments", [](const httplib::Request&, httplib::Response& res) { res.status = 202; });
    server.post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    server.start();
    MockBackend mock;
    const auto records = run(stream(1, 1000), mock, quiet_config()).records;
    std::ostringstream unused;

    auto ok = open_sink({SinkKind::HttpPost, server.url("/segments")}, unused);
    emit(*ok, records[0]);
    REQUIRE(server.bodies().size() == 1);
    CHECK(record_from_json(json::parse(server.bodies()[0])) == records[0]);

    auto broken = open_sink({SinkKind::HttpPost, server.url("/broken")}, unused);
    try {
        emit(*broken, records[0]);
        FAIL("expected SinkUnavailable");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SinkUnavailable);
        CHECK(e.http_status() == 503);
    }
}

TEST_CASE("an unreachable sink is counted and does not stop the run") {
    MockBackend mock;
    ReplaySource source(stream(3, 1000), 1000);
    std::ostringstream text;
    std::vector<std::unique_ptr<Sink>> sinks;
    sinks.push_back(open_sink({SinkKind::HttpPost, "http://127.0.0.1:1/segments"}, text));
    sinks.push_back(open_sink({SinkKind::Stdout}, text));
    std::vector<std::string> logged;
    PipelineConfig config = quiet_config();
    config.log = [&](std::string_view line) { logged.emplace_back(line); };
    const RunSummary summary = run_pipeline(source, mock, templates(), sinks, config);
    CHECK(summary.segments == 3);
    CHECK(summary.sink_failures == 3);
    CHECK(logged.size() == 3);
    std::istringstream lines(text.str());
    int n = 0;
    for (std::string line; std::getline(lines, line);) ++n;
    CHECK(n == 3);
}

TEST_CASE("replay source restores absolute timestamps") {
    auto snapshots = stream(2, 1000);
    for (auto& s : snapshots) s.timestamp_ms += 1'700'000'000'000;
    ReplaySource source(snapshots, 1000, 5000);
    std::vector<SegmentBatch> batches;
    while (auto b = source.next()) batches.push_back(*b);
    REQUIRE(batches.size() == 5);
    CHECK(batches[0].t_start_ms == 1'700'000'000'500);
    CHECK(batches[0].snapshots[0].timestamp_ms == 1'700'000'000'500);
    CHECK(batches[1].t_start_ms == batches[0].t_end_ms);
    CHECK(batches[4].snapshots.empty());
}

TEST_CASE("latency statistics use nearest rank") {
    std::vector<double> samples;
    for (int i = 1; i <= 100; ++i) samples.push_back(i);
    const LatencyStats s = latency_stats(samples);
    CHECK(s.count == 100);
    CHECK(s.p50 == 50);
    CHECK(s.p95 == 95);
    CHECK(s.max == 100);
    const LatencyStats one = latency_stats({7.0});
    CHECK(one.p50 == 7.0);
    CHECK(one.p95 == 7.0);
    CHECK(latency_stats({}).count == 0);
}

TEST_CASE("summary reports every stage") {
    MockBackend mock;
    const RunSummary summary = run(stream(3, 1000), mock, quiet_config()).summary;
    for (const char* stage : {"aggregate", "characterize", "narrative", "music", "emit"}) {
        REQUIRE(summary.stage_latency_ms.count(stage) == 1);
        CHECK(summary.stage_latency_ms.at(stage).count == 3);
    }
    CHECK(summary.overhead_ms.count == 3);
    CHECK(summary.boundary_skew_ms.count == 0);
    CHECK(summary.to_json().at("segments") == 3);
}
