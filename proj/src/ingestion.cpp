#include "bgm/ingestion.hpp"

#include <algorithm>
#include <cmath>

#include "bgm/error.hpp"

namespace bgm {

std::int64_t CollectorConfig::window_ms() const {
    return static_cast<std::int64_t>(std::llround(window_seconds * 1000.0));
}

std::chrono::milliseconds CollectorConfig::effective_grace() const {
    const auto cap = std::chrono::milliseconds(window_ms() / 40);
    return std::max(std::chrono::milliseconds(0), std::min(close_grace, cap));
}

void CollectorConfig::validate() const {
    if (!(window_seconds > 0.0) || !std::isfinite(window_seconds) || window_ms() < 1) {
        throw Error(ErrorCode::ConfigInvalid, "window_seconds must be positive (>= 1 ms)", "window_seconds");
    }
    if (queue_capacity < 1) throw Error(ErrorCode::ConfigInvalid, "queue_capacity must be >= 1", "queue_capacity");
    if (max_message_bytes < 1) {
        throw Error(ErrorCode::ConfigInvalid, "max_message_bytes must be >= 1", "max_message_bytes");
    }
    if (parse_workers < 1) throw Error(ErrorCode::ConfigInvalid, "parse_workers must be >= 1", "parse_workers");
    if (close_grace.count() < 0) throw Error(ErrorCode::ConfigInvalid, "close_grace must be >= 0", "close_grace");
}

WindowAssembler::WindowAssembler(std::int64_t window_ms) : window_ms_(window_ms) {
    if (window_ms_ < 1) throw Error(ErrorCode::ConfigInvalid, "window length must be >= 1 ms", "window_ms");
}

std::uint64_t WindowAssembler::window_of(std::int64_t timestamp_ms) const {
    if (timestamp_ms < 0) return 0;
    return static_cast<std::uint64_t>(timestamp_ms / window_ms_);
}

WindowAssembler::Admit WindowAssembler::add(SceneSnapshot snapshot) {
    const auto index = window_of(snapshot.timestamp_ms);
    if (index < next_index_) return Admit::Late;
    pending_[index].push_back(std::move(snapshot));
    ++pending_count_;
    return Admit::Accepted;
}

SegmentBatch WindowAssembler::close_next() {
    SegmentBatch batch;
    batch.window_index = next_index_;
    batch.t_start_ms = static_cast<std::int64_t>(next_index_) * window_ms_;
    batch.t_end_ms = batch.t_start_ms + window_ms_;
    if (auto it = pending_.find(next_index_); it != pending_.end()) {
        batch.snapshots = std::move(it->second);
        pending_.erase(it);
        pending_count_ -= batch.snapshots.size();
        std::stable_sort(batch.snapshots.begin(), batch.snapshots.end(),
                         [](const SceneSnapshot& a, const SceneSnapshot& b) { return a.timestamp_ms < b.timestamp_ms; });
    }
    ++next_index_;
    return batch;
}

std::optional<std::uint64_t> WindowAssembler::last_pending_window() const {
    if (pending_.empty()) return std::nullopt;
    return pending_.rbegin()->first;
}

SceneSnapshot aggregate(const SegmentBatch& batch, const std::optional<SceneSnapshot>& previous) {
    if (batch.snapshots.empty()) {
        if (previous) return *previous;
        throw Error(ErrorCode::NoDataEver, "window " + std::to_string(batch.window_index) +
                                               " is empty and no earlier snapshot exists");
    }
    SceneSnapshot out = batch.snapshots.back();
    out.hostile_entity.clear();
    out.being_attacked = false;
    for (const auto& s : batch.snapshots) {
        out.being_attacked = out.being_attacked || s.being_attacked;
        for (const auto& [name, value] : s.hostile_entity) out.hostile_entity.insert_or_assign(name, value);
    }
    return out;
}

}  // namespace bgm
