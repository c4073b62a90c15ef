#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include "bgm/cli.hpp"
#include "bgm/error.hpp"
#include "bgm/world_sim.hpp"

#ifndef BGM_DATA_DIR
#define BGM_DATA_DIR "data"
#endif

namespace bgm::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void fatal(const std::string& what, const std::string& subject = "") {
    throw Error(ErrorCode::FatalConfig, what, subject);
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

CollectorConfig collector_from_json(const json& doc) {
    CollectorConfig c;
    if (doc.contains("bind")) c.bind = net::parse_endpoint(doc["bind"].get<std::string>());
    if (doc.contains("http_bind")) {
        if (doc["http_bind"].is_null()) {
            c.http_bind.reset();
        } else {
            c.http_bind = net::parse_endpoint(doc["http_bind"].get<std::string>());
        }
    }
    c.queue_capacity = doc.value("queue_capacity", c.queue_capacity);
    c.max_message_bytes = doc.value("max_message_bytes", c.max_message_bytes);
    if (doc.contains("close_grace_ms")) c.close_grace = std::chrono::milliseconds(doc["close_grace_ms"].get<long>());
    c.parse_workers = doc.value("parse_workers", c.parse_workers);
    if (doc.contains("timestamps")) {
        const auto mode = doc["timestamps"].get<std::string>();
        if (mode == "event") {
            c.timestamps = TimestampMode::Event;
        } else if (mode == "arrival") {
            c.timestamps = TimestampMode::Arrival;
        } else {
            fatal("collector.timestamps must be 'event' or 'arrival'", "timestamps");
        }
    }
    return c;
}

}  // namespace

fs::path data_dir() {
    if (const char* env = std::getenv("BGM_DATA_DIR"); env && *env) return env;
    return BGM_DATA_DIR;
}

void RunConfig::validate() const {
    if (!(window_seconds > 0.0)) fatal("window_seconds must be positive", "window_seconds");
    if (max_segments && *max_segments == 0) fatal("max_segments must be positive", "max_segments");
    if (source == SourceKind::Simulate && !fs::exists(scenario)) {
        fatal("scenario file not found: " + scenario.string(), "scenario");
    }
    if (!fs::exists(narrative_template)) fatal("template not found: " + narrative_template.string(), "templates");
    if (!fs::exists(music_template)) fatal("template not found: " + music_template.string(), "templates");
    if (backend.kind != "mock" && backend.kind != "remote") {
        fatal("backend must be 'mock' or 'remote', got '" + backend.kind + "'", "backend");
    }
    if (backend.kind == "remote" && !backend.remote) fatal("remote backend needs base_url and model", "backend");
    if (sinks.empty()) fatal("at least one sink is required", "sinks");
    for (const auto& s : sinks) s.validate();
    if (retry.attempts < 1) fatal("retry.attempts must be >= 1", "retry");
    try {
        GenerationRequest{"", "", params, GenerationTask::Freeform}.validate();
        CollectorConfig c = collector;
        c.window_seconds = window_seconds;
        c.validate();
    } catch (const Error& e) {
        fatal(e.what(), e.subject());
    }
}

RunConfig run_config_from_json(const json& doc, const fs::path& base_dir) {
    if (!doc.is_object()) fatal("run config must be a JSON object");
    RunConfig c;
    try {
        const std::string source = doc.value("source", std::string("simulate"));
        if (source == "simulate") {
            c.source = SourceKind::Simulate;
        } else if (source == "collector") {
            c.source = SourceKind::Collector;
        } else {
            fatal("source must be 'simulate' or 'collector', got '" + source + "'", "source");
        }
        if (doc.contains("scenario")) c.scenario = resolve(base_dir, doc["scenario"].get<std::string>());
        if (doc.contains("collector")) c.collector = collector_from_json(doc["collector"]);
        c.window_seconds = doc.value("window_seconds", c.window_seconds);
        if (doc.contains("max_segments") && !doc["max_segments"].is_null()) {
            c.max_segments = doc["max_segments"].get<std::uint64_t>();
        }
        if (doc.contains("seed") && !doc["seed"].is_null()) c.seed = doc["seed"].get<std::uint64_t>();

        if (doc.contains("backend")) {
            const json& b = doc["backend"];
            c.backend.kind = b.value("kind", c.backend.kind);
            c.backend.model = b.value("model", c.backend.kind == "mock" ? std::string("mock-1") : std::string());
            if (c.backend.kind == "remote") c.backend.remote = RemoteBackendConfig::from_json(b);
        }
        if (doc.contains("generation")) {
            const json& g = doc["generation"];
            c.params.temperature = g.value("temperature", c.params.temperature);
            c.params.max_tokens = g.value("max_tokens", c.params.max_tokens);
        }
        if (doc.contains("retry")) {
            const json& r = doc["retry"];
            c.retry.attempts = r.value("attempts", c.retry.attempts);
            c.retry.initial_backoff =
                std::chrono::milliseconds(r.value("initial_backoff_ms", static_cast<long>(c.retry.initial_backoff.count())));
        }

        const fs::path templates = data_dir() / "templates";
        c.narrative_template = templates / "narrative.json";
        c.music_template = templates / "music.json";
        if (doc.contains("templates")) {
            const json& t = doc["templates"];
            if (t.contains("narrative")) c.narrative_template = resolve(base_dir, t["narrative"].get<std::string>());
            if (t.contains("music")) c.music_template = resolve(base_dir, t["music"].get<std::string>());
        }
        if (doc.contains("sinks")) {
            for (const json& s : doc["sinks"]) {
                SinkSpec spec = SinkSpec::from_json(s);
                if (spec.kind == SinkKind::JsonlFile) spec.target = resolve(base_dir, spec.target).string();
                c.sinks.push_back(std::move(spec));
            }
        }
        if (doc.contains("failure_policy")) {
            c.failure_policy = failure_policy_from_string(doc["failure_policy"].get<std::string>());
        }
    } catch (const json::exception& e) {
        fatal(std::string("run config: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::FatalConfig) throw;
        fatal(e.what(), e.subject());
    }
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fatal("cannot read run config " + path.string(), path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        fatal(path.string() + ": " + e.what(), path.string());
    }
    return run_config_from_json(doc, path.parent_path());
}

std::unique_ptr<TextBackend> make_backend(const BackendSelection& selection, std::optional<std::uint64_t> seed) {
    if (selection.kind == "remote") {
        if (!selection.remote) fatal("remote backend needs base_url and model", "backend");
        try {
            return std::make_unique<RemoteBackend>(*selection.remote);
        } catch (const Error& e) {
            fatal(e.what(), e.subject());
        }
    }
    if (selection.kind != "mock") fatal("backend must be 'mock' or 'remote', got '" + selection.kind + "'", "backend");
    return std::make_unique<MockBackend>(selection.model.empty() ? "mock-1" : selection.model, seed.value_or(0));
}

RunSummary execute_run(const RunConfig& config, std::ostream& out, std::ostream& err, const std::atomic<bool>* stop) {
    config.validate();
    PipelineTemplates templates;
    try {
        templates.narrative = load_template(config.narrative_template);
        templates.music = load_template(config.music_template);
    } catch (const Error& e) {
        fatal(e.what(), e.subject());
    }
    auto backend = make_backend(config.backend, config.seed);

    std::vector<std::unique_ptr<Sink>> sinks;
    for (const auto& spec : config.sinks) {
        try {
            sinks.push_back(open_sink(spec, out));
        } catch (const Error& e) {
            fatal(e.what(), e.subject());
        }
    }

    PipelineConfig pipeline;
    pipeline.stage.params = config.params;
    pipeline.stage.params.model = config.backend.kind == "remote" ? config.backend.remote->model : config.backend.model;
    pipeline.stage.retry = config.retry;
    pipeline.max_segments = config.max_segments;
    pipeline.failure_policy = config.failure_policy;
    pipeline.stop = stop;
    pipeline.log = [&err](std::string_view line) { err << line << '\n'; };

    const auto window_ms = static_cast<std::int64_t>(config.window_seconds * 1000.0);
    if (config.source == SourceKind::Simulate) {
        Scenario scenario;
        try {
            scenario = load_scenario(config.scenario);
        } catch (const Error& e) {
            fatal(e.what(), e.subject());
        }
        if (config.seed) scenario.seed = *config.seed;
        ReplaySource source(simulate_stream(scenario), window_ms, scenario.duration_ms);
        return run_pipeline(source, *backend, templates, sinks, pipeline);
    }

    CollectorConfig cc = config.collector;
    cc.window_seconds = config.window_seconds;
    CollectorHandle collector;
    try {
        collector = start_collector(cc);
    } catch (const Error& e) {
        fatal(e.what(), e.subject());
    }
    err << json({{"event", "collector_started"},
                 {"tcp_port", collector->tcp_port()},
                 {"http_port", collector->http_port() ? json(*collector->http_port()) : json(nullptr)}})
               .dump()
        << std::endl;
    CollectorSource source(*collector, stop);
    RunSummary summary = run_pipeline(source, *backend, templates, sinks, pipeline);
    collector->stop();
    return summary;
}

}  // namespace bgm::cli
