#include "bgm/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iostream>
#include <thread>

#include "bgm/bounded_queue.hpp"
#include "bgm/error.hpp"

namespace bgm {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void require_placeholders(const PromptTemplate& tmpl, std::initializer_list<std::string_view> names) {
    std::vector<std::string> referenced;
    try {
        tmpl.validate();
        referenced = tmpl.referenced();
    } catch (const Error& e) {
        throw Error(ErrorCode::FatalConfig, "template '" + tmpl.id + "': " + e.what(), tmpl.id);
    }
    for (std::string_view name : names) {
        if (std::find(referenced.begin(), referenced.end(), name) == referenced.end()) {
            throw Error(ErrorCode::FatalConfig, "template '" + tmpl.id + "' must reference {" + std::string(name) + "}",
                        tmpl.id);
        }
    }
}

nlohmann::json stats_json(const LatencyStats& s) {
    return {{"count", s.count}, {"p50", s.p50}, {"p95", s.p95}, {"max", s.max}};
}

}  // namespace

FailurePolicy failure_policy_from_string(std::string_view text) {
    if (text == "reuse_last") return FailurePolicy::ReuseLast;
    if (text == "empty") return FailurePolicy::Empty;
    throw Error(ErrorCode::FatalConfig, "failure_policy must be 'reuse_last' or 'empty', got '" + std::string(text) + "'",
                "failure_policy");
}

std::string_view to_string(FailurePolicy policy) {
    return policy == FailurePolicy::ReuseLast ? "reuse_last" : "empty";
}

LatencyStats latency_stats(std::vector<double> samples) {
    LatencyStats out;
    out.count = samples.size();
    if (samples.empty()) return out;
    std::sort(samples.begin(), samples.end());
    // Nearest rank.
    const auto rank = [&](double q) {
        const auto r = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size())));
        return samples[std::clamp<std::size_t>(r, 1, samples.size()) - 1];
    };
    out.p50 = rank(0.50);
    out.p95 = rank(0.95);
    out.max = samples.back();
    return out;
}

nlohmann::json RunSummary::to_json() const {
    nlohmann::json stages = nlohmann::json::object();
    for (const auto& [name, s] : stage_latency_ms) stages[name] = stats_json(s);
    return {
        {"segments", segments},
        {"degraded", degraded},
        {"sink_failures", sink_failures},
        {"stage_latency_ms", stages},
        {"overhead_ms", stats_json(overhead_ms)},
        {"boundary_skew_ms", stats_json(boundary_skew_ms)},
        {"elapsed_ms", elapsed_ms},
    };
}

std::optional<SegmentBatch> CollectorSource::next() {
    for (;;) {
        if (stop_ && stop_->load()) return std::nullopt;
        try {
            return collector_.next_segment(Clock::now() + std::chrono::milliseconds(100));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::TimedOut) continue;
            if (e.code() == ErrorCode::CollectorStopped) return std::nullopt;
            throw;
        }
    }
}

ReplaySource::ReplaySource(std::vector<SceneSnapshot> snapshots, std::int64_t window_ms,
                           std::optional<std::int64_t> end_ms)
    : assembler_(window_ms) {
    if (!snapshots.empty()) {
        origin_ms_ = std::min_element(snapshots.begin(), snapshots.end(), [](const auto& a, const auto& b) {
                         return a.timestamp_ms < b.timestamp_ms;
                     })->timestamp_ms;
    }
    for (auto& s : snapshots) {
        s.timestamp_ms -= origin_ms_;
        assembler_.add(std::move(s));
    }
    last_window_ = assembler_.last_pending_window();
    if (end_ms && *end_ms > 0) {
        const std::uint64_t end_window = assembler_.window_of(*end_ms - 1);
        last_window_ = last_window_ ? std::max(*last_window_, end_window) : end_window;
    }
}

std::optional<SegmentBatch> ReplaySource::next() {
    if (!last_window_ || assembler_.next_index() > *last_window_) return std::nullopt;
    SegmentBatch batch = assembler_.close_next();
    batch.t_start_ms += origin_ms_;
    batch.t_end_ms += origin_ms_;
    for (auto& s : batch.snapshots) s.timestamp_ms += origin_ms_;
    return batch;
}

RunSummary run_pipeline(SegmentSource& source, TextBackend& backend, const PipelineTemplates& templates,
                        std::span<const std::unique_ptr<Sink>> sinks, const PipelineConfig& config) {
    if (sinks.empty()) throw Error(ErrorCode::FatalConfig, "at least one sink is required", "sinks");
    for (const auto& sink : sinks) {
        if (!sink) throw Error(ErrorCode::FatalConfig, "null sink", "sinks");
    }
    require_placeholders(templates.narrative, {placeholder::kInfoStr});
    require_placeholders(templates.music, {placeholder::kScene, placeholder::kAnchor});
    try {
        GenerationRequest{"", "", config.stage.params, GenerationTask::Freeform}.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::FatalConfig, e.what(), e.subject());
    }

    const auto log = [&](std::string_view line) {
        if (config.log) {
            config.log(line);
        } else {
            std::cerr << line << '\n';
        }
    };

    const auto run_start = Clock::now();
    BoundedQueue<SegmentBatch> handoff(std::max<std::size_t>(1, config.handoff_capacity),
                                       BoundedQueue<SegmentBatch>::OverflowPolicy::Block);
    std::exception_ptr source_error;

    // Collection of window k+1 overlaps generation for window k.
    std::thread producer([&] {
        try {
            std::uint64_t pulled = 0;
            while (!config.max_segments || pulled < *config.max_segments) {
                if (config.stop && config.stop->load()) break;
                auto batch = source.next();
                if (!batch) break;
                ++pulled;
                handoff.push(std::move(*batch));
            }
        } catch (...) {
            source_error = std::current_exception();
        }
        handoff.close();
    });

    RunSummary summary;
    std::map<std::string, std::vector<double>> stage_samples;
    std::vector<double> overhead_samples;
    std::vector<double> skew_samples;
    std::optional<SceneSnapshot> previous = config.default_snapshot;
    std::optional<MusicDescription> last_description;
    std::optional<std::uint64_t> last_window;

    while (auto batch = handoff.pop()) {
        const auto segment_start = Clock::now();
        double backend_ms = 0.0;
        SegmentRecord record;
        record.window_index = batch->window_index;
        record.t_start_ms = batch->t_start_ms;
        record.t_end_ms = batch->t_end_ms;
        record.narrative.source_window = batch->window_index;
        if (last_window) record.anchor_window = *last_window;
        if (batch->close_skew_ms) skew_samples.push_back(*batch->close_skew_ms);

        std::optional<Anchor> anchor;
        if (last_description && last_window) {
            anchor = Anchor{last_description->text.empty() ? std::string(kNoAnchor) : last_description->text,
                            *last_window};
        }

        try {
            auto t = Clock::now();
            SceneSnapshot snapshot = aggregate(*batch, previous);
            previous = snapshot;
            record.aggregated_snapshot = snapshot;
            record.stage_latencies_ms["aggregate"] = ms_since(t);

            t = Clock::now();
            record.mode = detect_mode(snapshot);
            record.characterized = characterize(snapshot, record.mode);
            record.stage_latencies_ms["characterize"] = ms_since(t);

            auto narrative =
                generate_narrative(record.characterized, record.window_index, templates.narrative, backend, config.stage);
            record.narrative_prompt = narrative.trace.prompt;
            record.narrative = narrative.value;
            record.stage_latencies_ms["narrative"] = narrative.trace.backend_ms;
            backend_ms += narrative.trace.backend_ms;

            auto music = generate_music_description(record.narrative, anchor, templates.music, backend, config.stage);
            record.music_prompt = music.trace.prompt;
            record.description = music.value;
            record.stage_latencies_ms["music"] = music.trace.backend_ms;
            backend_ms += music.trace.backend_ms;
        } catch (const std::exception& e) {
            record.degraded = true;
            record.error = e.what();
            record.description = MusicDescription{};
            if (config.failure_policy == FailurePolicy::ReuseLast && last_description) {
                record.description.text = last_description->text;
                record.description.word_count = last_description->word_count;
            }
            if (anchor) record.description.anchor_of = anchor->window;
            log("segment " + std::to_string(record.window_index) + " degraded: " + e.what());
        }

        for (const auto& [stage, ms] : record.stage_latencies_ms) stage_samples[stage].push_back(ms);

        const auto emit_start = Clock::now();
        for (const auto& sink : sinks) {
            try {
                sink->emit(record);
            } catch (const std::exception& e) {
                ++summary.sink_failures;
                log(std::string("sink failure: ") + e.what());
            }
        }
        stage_samples["emit"].push_back(ms_since(emit_start));
        overhead_samples.push_back(std::max(0.0, ms_since(segment_start) - backend_ms));

        ++summary.segments;
        if (record.degraded) ++summary.degraded;
        last_description = record.description;
        last_window = record.window_index;
    }
    producer.join();

    for (auto& [stage, samples] : stage_samples) summary.stage_latency_ms[stage] = latency_stats(std::move(samples));
    summary.overhead_ms = latency_stats(std::move(overhead_samples));
    summary.boundary_skew_ms = latency_stats(std::move(skew_samples));
    summary.elapsed_ms = ms_since(run_start);
    if (source_error) std::rethrow_exception(source_error);
    return summary;
}

}  // namespace bgm
