#include "bgm/error.hpp"
#include "bgm/scheduler.hpp"

namespace bgm {

using nlohmann::json;

namespace {

template <typename T>
json optional_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const json& doc, const char* key) {
    if (!doc.contains(key) || doc.at(key).is_null()) return std::nullopt;
    return doc.at(key).get<T>();
}

}  // namespace

json record_to_json(const SegmentRecord& r, bool include_timings) {
    json out = {
        {"schema_version", kRecordSchemaVersion},
        {"window_index", r.window_index},
        {"t_start", r.t_start_ms},
        {"t_end", r.t_end_ms},
        {"mode", std::string(to_string(r.mode))},
        {"aggregated_snapshot", r.aggregated_snapshot ? json(snapshot_to_json(*r.aggregated_snapshot)) : json(nullptr)},
        {"characterized", characterized_to_json(r.characterized)},
        {"narrative", {{"text", r.narrative.text}, {"source_window", r.narrative.source_window}}},
        {"description",
         {{"text", r.description.text},
          {"word_count", r.description.word_count},
          {"anchor_of", optional_json(r.description.anchor_of)}}},
        {"anchor_window", optional_json(r.anchor_window)},
        {"prompts", {{"narrative", r.narrative_prompt}, {"music", r.music_prompt}}},
        {"error", optional_json(r.error)},
        {"degraded", r.degraded},
    };
    if (include_timings) out["stage_latencies_ms"] = r.stage_latencies_ms;
    return out;
}

SegmentRecord record_from_json(const json& doc) {
    SegmentRecord r;
    try {
        const int version = doc.at("schema_version").get<int>();
        if (version != kRecordSchemaVersion) {
            throw Error(ErrorCode::SchemaViolation, "unsupported record schema_version " + std::to_string(version),
                        "schema_version");
        }
        r.window_index = doc.at("window_index").get<std::uint64_t>();
        r.t_start_ms = doc.at("t_start").get<std::int64_t>();
        r.t_end_ms = doc.at("t_end").get<std::int64_t>();
        r.mode = context_mode_from_string(doc.at("mode").get<std::string>());
        if (const json& snap = doc.at("aggregated_snapshot"); !snap.is_null()) r.aggregated_snapshot = snapshot_from_json(snap);
        r.characterized = characterized_from_json(doc.at("characterized"), r.mode);
        const json& narrative = doc.at("narrative");
        r.narrative.text = narrative.at("text").get<std::string>();
        r.narrative.source_window = narrative.at("source_window").get<std::uint64_t>();
        const json& description = doc.at("description");
        r.description.text = description.at("text").get<std::string>();
        r.description.word_count = description.at("word_count").get<std::size_t>();
        r.description.anchor_of = optional_from<std::uint64_t>(description, "anchor_of");
        r.anchor_window = optional_from<std::uint64_t>(doc, "anchor_window");
        r.narrative_prompt = doc.at("prompts").at("narrative").get<std::string>();
        r.music_prompt = doc.at("prompts").at("music").get<std::string>();
        if (doc.contains("stage_latencies_ms")) {
            r.stage_latencies_ms = doc["stage_latencies_ms"].get<std::map<std::string, double>>();
        }
        r.error = optional_from<std::string>(doc, "error");
        r.degraded = doc.at("degraded").get<bool>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("segment record: ") + e.what());
    }
    return r;
}

std::string canonical_json(const SegmentRecord& record, bool include_timings) {
    return record_to_json(record, include_timings).dump();
}

}  // namespace bgm
