#include "bgm/cli.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "bgm/dataset.hpp"
#include "bgm/error.hpp"
#include "bgm/eval.hpp"
#include "bgm/text_util.hpp"
#include "bgm/world_sim.hpp"

namespace bgm::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

void log_summary(std::ostream& err, std::string_view command, json summary) {
    err << json({{"command", std::string(command)}, {"summary", std::move(summary)}}).dump() << std::endl;
}

// Writes to `path`, or to `out` when the path is empty or "-".
class DataOutput {
public:
    DataOutput(const std::string& path, std::ostream& out) {
        if (path.empty() || path == "-") {
            stream_ = &out;
            return;
        }
        file_.open(path, std::ios::binary | std::ios::trunc);
        if (!file_) throw Error(ErrorCode::IoFailure, "cannot write " + path, path);
        stream_ = &file_;
    }
    std::ostream& stream() { return *stream_; }

private:
    std::ofstream file_;
    std::ostream* stream_ = nullptr;
};

struct BackendFlags {
    std::string kind = "mock";
    std::string model = "mock-1";
    std::string config_path;
    std::optional<std::uint64_t> seed;

    void add_to(CLI::App& cmd) {
        cmd.add_option("--backend", kind, "Text backend")->check(CLI::IsMember({"mock", "remote"}));
        cmd.add_option("--model", model, "Model id (mock or remote)");
        cmd.add_option("--backend-config", config_path,
                       "JSON with base_url, model, api_key_env, timeout_seconds (remote backend)")
            ->check(CLI::ExistingFile);
        cmd.add_option("--seed", seed, "Seed for the mock backend");
    }

    std::unique_ptr<TextBackend> make() const {
        BackendSelection selection;
        selection.kind = kind;
        selection.model = model;
        if (kind == "remote") {
            if (config_path.empty()) throw Error(ErrorCode::FatalConfig, "--backend remote needs --backend-config", "backend");
            std::ifstream in(config_path);
            try {
                selection.remote = RemoteBackendConfig::from_json(json::parse(in));
            } catch (const json::exception& e) {
                throw Error(ErrorCode::FatalConfig, config_path + ": " + e.what(), config_path);
            } catch (const Error& e) {
                throw Error(ErrorCode::FatalConfig, e.what(), e.subject());
            }
        }
        return make_backend(selection, seed);
    }
};

PromptTemplate template_or_fatal(const fs::path& path) {
    try {
        return load_template(path);
    } catch (const Error& e) {
        throw Error(ErrorCode::FatalConfig, e.what(), e.subject());
    }
}

std::string template_path(const std::string& flag, std::string_view default_name) {
    return flag.empty() ? (data_dir() / "templates" / default_name).string() : flag;
}

int cmd_serve(std::ostream& out, std::ostream& err, CollectorConfig config, std::optional<std::uint64_t> max_segments) {
    CollectorHandle collector = start_collector(config);
    err << json({{"event", "collector_started"},
                 {"tcp_port", collector->tcp_port()},
                 {"http_port", collector->http_port() ? json(*collector->http_port()) : json(nullptr)}})
               .dump()
        << std::endl;
    CollectorSource source(*collector, &g_stop);
    std::optional<SceneSnapshot> previous;
    std::uint64_t windows = 0;
    while (!max_segments || windows < *max_segments) {
        auto batch = source.next();
        if (!batch) break;
        ++windows;
        json line = {{"window_index", batch->window_index},
                     {"t_start", batch->t_start_ms},
                     {"t_end", batch->t_end_ms},
                     {"count", batch->snapshots.size()}};
        try {
            previous = aggregate(*batch, previous);
            const ContextMode mode = detect_mode(*previous);
            line["aggregated_snapshot"] = json(snapshot_to_json(*previous));
            line["mode"] = std::string(to_string(mode));
            line["characterized"] = characterized_to_json(characterize(*previous, mode));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NoDataEver) throw;
            line["aggregated_snapshot"] = nullptr;
        }
        out << line.dump() << std::endl;
    }
    collector->stop();
    const CollectorStats s = collector->stats();
    log_summary(err, "serve",
                {{"windows", windows},
                 {"received", s.received},
                 {"accepted", s.accepted},
                 {"delivered", s.delivered},
                 {"dropped_invalid", s.dropped_invalid},
                 {"dropped_overflow", s.dropped_overflow},
                 {"dropped_late", s.dropped_late},
                 {"connections", s.connections}});
    return kExitOk;
}

std::vector<SceneSnapshot> read_snapshot_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path, path);
    std::vector<SceneSnapshot> snapshots;
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        snapshots.push_back(parse_snapshot(line));
    }
    return snapshots;
}

void print_help_for(const CLI::App& app, std::ostream& err) {
    const CLI::App* target = &app;
    for (;;) {
        auto subs = target->get_subcommands();
        if (subs.empty()) break;
        target = subs.front();
    }
    err << target->help();
}

}  // namespace

const std::atomic<bool>& stop_requested() { return g_stop; }

void install_signal_handlers() {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
#ifdef SIGPIPE
    std::signal(SIGPIPE, SIG_IGN);
#endif
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Scene-driven background music description pipeline", "scenebgm"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    // serve
    CollectorConfig serve_cfg;
    std::string serve_bind = "127.0.0.1:7070";
    std::string serve_http = "127.0.0.1:7071";
    std::string serve_timestamps = "event";
    long serve_grace_ms = serve_cfg.close_grace.count();
    std::optional<std::uint64_t> serve_max;
    auto* serve = app.add_subcommand("serve", "Run the collector and print one aggregated window per line");
    serve->add_option("--bind", serve_bind, "TCP endpoint for newline-delimited JSON")->capture_default_str();
    serve->add_option("--http-bind", serve_http, "HTTP endpoint; 'off' disables it")->capture_default_str();
    serve->add_option("--window-seconds", serve_cfg.window_seconds, "Window length")->capture_default_str();
    serve->add_option("--queue-capacity", serve_cfg.queue_capacity, "Raw message queue bound")->capture_default_str();
    serve->add_option("--max-message-bytes", serve_cfg.max_message_bytes, "Largest accepted record")
        ->capture_default_str();
    serve->add_option("--close-grace-ms", serve_grace_ms, "Wait past each boundary for stragglers")
        ->capture_default_str();
    serve->add_option("--timestamps", serve_timestamps, "Window placement clock")
        ->check(CLI::IsMember({"event", "arrival"}))
        ->capture_default_str();
    serve->add_option("--max-segments", serve_max, "Stop after this many windows");

    // simulate
    std::string sim_scenario;
    std::string sim_out;
    std::optional<std::uint64_t> sim_seed;
    auto* simulate = app.add_subcommand("simulate", "Write a scenario's snapshot stream as JSONL");
    simulate->add_option("--scenario", sim_scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    simulate->add_option("--seed", sim_seed, "Override the scenario seed");
    simulate->add_option("--out", sim_out, "Output file (default: standard output)");

    // replay
    std::string replay_scenario;
    std::string replay_input;
    std::string replay_to;
    double replay_scale = 1.0;
    std::optional<std::uint64_t> replay_seed;
    auto* replay = app.add_subcommand("replay", "Send a scenario or recorded JSONL stream to a collector");
    auto* replay_src_scenario = replay->add_option("--scenario", replay_scenario, "Scenario file")->check(CLI::ExistingFile);
    auto* replay_src_input = replay->add_option("--input", replay_input, "Recorded JSONL snapshots")->check(CLI::ExistingFile);
    replay_src_scenario->excludes(replay_src_input);
    replay->add_option("--endpoint,--to", replay_to, "Collector TCP endpoint host:port")->required();
    replay->add_option("--time-scale", replay_scale, "Pacing factor; 0 sends as fast as possible")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    replay->add_option("--seed", replay_seed, "Override the scenario seed");

    // run
    std::string run_config_path;
    std::optional<std::uint64_t> run_max;
    std::optional<std::uint64_t> run_seed;
    std::optional<double> run_window;
    std::string run_backend;
    std::string run_out;
    std::string run_policy;
    std::string run_source;
    auto* run = app.add_subcommand("run", "Run the full pipeline from a config file");
    run->add_option("--config", run_config_path, "Run config JSON")->required()->check(CLI::ExistingFile);
    run->add_option("--max-segments", run_max, "Stop after this many windows");
    run->add_option("--seed", run_seed, "Seed for the simulator and the mock backend");
    run->add_option("--window-seconds", run_window, "Window length");
    run->add_option("--backend", run_backend, "Backend selection")->check(CLI::IsMember({"mock", "remote"}));
    run->add_option("--out", run_out, "JSONL output; replaces the first jsonl sink's target");
    run->add_option("--failure-policy", run_policy, "On a failed segment")->check(CLI::IsMember({"reuse_last", "empty"}));
    run->add_option("--source", run_source, "Segment source")->check(CLI::IsMember({"simulate", "collector"}));

    // eval
    std::vector<std::string> eval_hyps;
    std::vector<std::string> eval_names;
    std::string eval_ref;
    std::vector<std::string> eval_pairs;
    std::string eval_aggregation = "sentence";
    std::string eval_format = "table";
    double eval_beta = eval::kDefaultRougeBeta;
    auto* ev = app.add_subcommand("eval", "Score hypotheses with BLEU-1..4, METEOR and ROUGE-L");
    auto* ev_hyp = ev->add_option("--hyp", eval_hyps, "Hypothesis file, one per line (repeat for several systems)")
                       ->check(CLI::ExistingFile);
    auto* ev_ref = ev->add_option("--ref", eval_ref, "Reference file aligned with --hyp; ' ||| ' separates references")
                       ->check(CLI::ExistingFile);
    auto* ev_pairs = ev->add_option("--pairs", eval_pairs, "JSONL {id, hypothesis, references} (repeatable)")
                         ->check(CLI::ExistingFile);
    ev_hyp->needs(ev_ref);
    ev_ref->needs(ev_hyp);
    ev_pairs->excludes(ev_hyp);
    ev->add_option("--name", eval_names, "System names, in the order of --hyp/--pairs");
    ev->add_option("--aggregation", eval_aggregation, "BLEU pooling")
        ->check(CLI::IsMember({"sentence", "corpus"}))
        ->capture_default_str();
    ev->add_option("--format", eval_format, "Report format")
        ->check(CLI::IsMember({"table", "csv", "json"}))
        ->capture_default_str();
    ev->add_option("--beta", eval_beta, "ROUGE-L recall weight")->check(CLI::PositiveNumber)->capture_default_str();

    // dataset
    auto* dataset = app.add_subcommand("dataset", "Build instruction-input-output training pairs");
    dataset->require_subcommand(1);

    std::string synth_grid;
    std::string synth_out;
    std::string synth_narrative;
    std::string synth_music;
    BackendFlags synth_backend;
    auto* synth = dataset->add_subcommand("synth", "Synthesize pairs over a scenario grid");
    synth->add_option("--grid", synth_grid, "Grid JSON")->required()->check(CLI::ExistingFile);
    synth->add_option("--out", synth_out, "Output JSONL (default: standard output)");
    synth->add_option("--narrative-template", synth_narrative, "Narrative template");
    synth->add_option("--music-template", synth_music, "Music description template");
    synth_backend.add_to(*synth);

    std::string rev_captions;
    std::string rev_scenes;
    std::string rev_out;
    std::string rev_report;
    std::string rev_match;
    std::string rev_music;
    BackendFlags rev_backend;
    auto* reverse = dataset->add_subcommand("reverse", "Pair music captions with matching scene narratives");
    reverse->add_option("--captions", rev_captions, "Captions: text lines or JSONL {id, caption}")
        ->required()
        ->check(CLI::ExistingFile);
    reverse->add_option("--scenes", rev_scenes, "Scene pool: JSONL wire snapshots")->required()->check(CLI::ExistingFile);
    reverse->add_option("--out", rev_out, "Output JSONL (default: standard output)");
    reverse->add_option("--report", rev_report, "Rejection report JSONL (default: diagnostic stream)");
    reverse->add_option("--match-template", rev_match, "Scene matching template");
    reverse->add_option("--music-template", rev_music, "Template supplying the pair instruction");
    rev_backend.add_to(*reverse);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        print_help_for(app, err);
        return kExitUsage;
    }

    try {
        if (*serve) {
            serve_cfg.bind = net::parse_endpoint(serve_bind);
            if (serve_http == "off") {
                serve_cfg.http_bind.reset();
            } else {
                serve_cfg.http_bind = net::parse_endpoint(serve_http);
            }
            serve_cfg.close_grace = std::chrono::milliseconds(serve_grace_ms);
            serve_cfg.timestamps = serve_timestamps == "arrival" ? TimestampMode::Arrival : TimestampMode::Event;
            return cmd_serve(out, err, serve_cfg, serve_max);
        }

        if (*simulate) {
            Scenario scenario = load_scenario(sim_scenario);
            if (sim_seed) scenario.seed = *sim_seed;
            const auto snapshots = simulate_stream(scenario);
            DataOutput sink(sim_out, out);
            sink.stream() << to_jsonl(snapshots);
            sink.stream().flush();
            log_summary(err, "simulate", {{"snapshots", snapshots.size()}, {"seed", scenario.seed}});
            return kExitOk;
        }

        if (*replay) {
            if (replay_scenario.empty() == replay_input.empty()) {
                err << "error: replay needs exactly one of --scenario or --input\n\n" << replay->help();
                return kExitUsage;
            }
            std::vector<SceneSnapshot> snapshots;
            if (!replay_scenario.empty()) {
                Scenario scenario = load_scenario(replay_scenario);
                if (replay_seed) scenario.seed = *replay_seed;
                snapshots = simulate_stream(scenario);
            } else {
                snapshots = read_snapshot_file(replay_input);
            }
            const SendReport report = replay_snapshots(snapshots, net::parse_endpoint(replay_to), replay_scale);
            log_summary(err, "replay", report.to_json());
            return kExitOk;
        }

        if (*run) {
            RunConfig config = load_run_config(run_config_path);
            if (run_max) config.max_segments = *run_max;
            if (run_seed) config.seed = *run_seed;
            if (run_window) config.window_seconds = *run_window;
            if (!run_backend.empty()) {
                config.backend.kind = run_backend;
                if (run_backend == "mock" && config.backend.model.empty()) config.backend.model = "mock-1";
            }
            if (!run_policy.empty()) config.failure_policy = failure_policy_from_string(run_policy);
            if (!run_source.empty()) config.source = run_source == "collector" ? SourceKind::Collector : SourceKind::Simulate;
            if (!run_out.empty()) {
                auto it = std::find_if(config.sinks.begin(), config.sinks.end(),
                                       [](const SinkSpec& s) { return s.kind == SinkKind::JsonlFile; });
                if (it == config.sinks.end()) {
                    config.sinks.push_back(SinkSpec{SinkKind::JsonlFile, run_out, true, true});
                } else {
                    it->target = run_out;
                    it->truncate = true;
                }
            }
            const RunSummary summary = execute_run(config, out, err, &g_stop);
            log_summary(err, "run", summary.to_json());
            return kExitOk;
        }

        if (*ev) {
            eval::EvalOptions options;
            options.aggregation = eval::aggregation_from_string(eval_aggregation);
            options.rouge_beta = eval_beta;
            std::vector<eval::SystemInput> systems;
            if (!eval_pairs.empty()) {
                for (const auto& p : eval_pairs) systems.push_back({fs::path(p).stem().string(), eval::load_pairs_jsonl(p)});
            } else if (!eval_hyps.empty()) {
                for (const auto& h : eval_hyps) systems.push_back({fs::path(h).stem().string(), eval::load_pairs(h, eval_ref)});
            } else {
                err << "error: eval needs --hyp and --ref, or --pairs\n\n" << ev->help();
                return kExitUsage;
            }
            if (!eval_names.empty()) {
                if (eval_names.size() != systems.size()) {
                    err << "error: --name given " << eval_names.size() << " times for " << systems.size()
                        << " systems\n\n"
                        << ev->help();
                    return kExitUsage;
                }
                for (std::size_t i = 0; i < systems.size(); ++i) systems[i].name = eval_names[i];
            }
            const eval::EvalReport report = eval::evaluate_systems(systems, options);
            if (eval_format == "csv") {
                out << eval::render_csv(report);
            } else if (eval_format == "json") {
                out << eval::report_to_json(report).dump(2) << '\n';
            } else {
                out << eval::render_table(report);
            }
            out.flush();
            json summary = {{"systems", report.systems.size()}, {"n_pairs", report.n_pairs}};
            std::size_t empty = 0;
            for (const auto& s : report.systems) empty += s.empty_hypotheses;
            summary["empty_hypotheses"] = empty;
            log_summary(err, "eval", summary);
            return kExitOk;
        }

        if (*synth) {
            const ScenarioGrid grid = load_grid(synth_grid);
            SynthesisTemplates templates{template_or_fatal(template_path(synth_narrative, "narrative.json")),
                                         template_or_fatal(template_path(synth_music, "music.json"))};
            auto backend = synth_backend.make();
            StageConfig stage;
            stage.params.model = backend->model_id();
            const auto pairs = synthesize_pairs(grid, *backend, templates, stage);
            DataOutput sink(synth_out, out);
            for (const auto& p : pairs) sink.stream() << pair_to_json(p).dump() << '\n';
            sink.stream().flush();
            log_summary(err, "dataset synth", {{"scenarios", grid.size()}, {"pairs", pairs.size()}});
            return kExitOk;
        }

        if (*reverse) {
            const auto captions = load_captions(rev_captions);
            const auto pool = load_scene_pool(rev_scenes);
            ReverseTemplates templates{template_or_fatal(template_path(rev_match, "scene_match.json")),
                                       template_or_fatal(template_path(rev_music, "music.json"))};
            auto backend = rev_backend.make();
            StageConfig stage;
            stage.params.model = backend->model_id();
            const ReversePairing result = reverse_pair(captions, pool, *backend, templates, stage);
            DataOutput sink(rev_out, out);
            for (const auto& p : result.pairs) sink.stream() << pair_to_json(p).dump() << '\n';
            sink.stream().flush();
            if (result.pairs.empty()) err << "warning: no caption was paired" << std::endl;
            std::unique_ptr<DataOutput> report_sink;
            std::ostream* report = &err;
            if (!rev_report.empty()) {
                report_sink = std::make_unique<DataOutput>(rev_report, out);
                report = &report_sink->stream();
            }
            for (const auto& r : result.rejections) {
                *report << json({{"index", r.index}, {"caption", r.caption}, {"reason", r.reason}}).dump() << '\n';
            }
            report->flush();
            log_summary(err, "dataset reverse",
                        {{"captions", captions.size()},
                         {"pairs", result.pairs.size()},
                         {"rejections", result.rejections.size()}});
            return kExitOk;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << std::endl;
        return kExitFatal;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << std::endl;
        return kExitFatal;
    }
    print_help_for(app, err);
    return kExitUsage;
}

}  // namespace bgm::cli
