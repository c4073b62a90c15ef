#pragma once
// Snapshot collection: a TCP/HTTP endpoint that parses wire records off the
// accept path and partitions them into contiguous fixed-length windows.

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "bgm/net.hpp"
#include "bgm/scene.hpp"

namespace bgm {

// How a snapshot is placed on the collector's stream clock.
//   Event:   the record's own Timestamp, shifted so the first accepted record
//            lines up with its arrival time.
//   Arrival: the Timestamp is replaced by the arrival time.
enum class TimestampMode { Event, Arrival };

struct CollectorConfig {
    net::Endpoint bind{"127.0.0.1", 0};
    // HTTP route host; nullopt disables it.
    std::optional<net::Endpoint> http_bind = net::Endpoint{"127.0.0.1", 0};
    double window_seconds = 10.0;
    std::size_t queue_capacity = 4096;
    std::size_t max_message_bytes = 64 * 1024;
    // Extra wait after a window boundary for in-flight records; capped at 2.5%
    // of the window. Delivery may additionally wait up to this long for
    // records still being parsed.
    std::chrono::milliseconds close_grace{50};
    unsigned parse_workers = 2;
    TimestampMode timestamps = TimestampMode::Event;

    std::int64_t window_ms() const;
    std::chrono::milliseconds effective_grace() const;
    // Throws Error{ConfigInvalid}.
    void validate() const;
};

struct SegmentBatch {
    std::uint64_t window_index = 0;
    std::int64_t t_start_ms = 0;
    std::int64_t t_end_ms = 0;
    std::vector<SceneSnapshot> snapshots;  // sorted by timestamp
    // Delay between the ideal window boundary and delivery, live collection only.
    std::optional<double> close_skew_ms;
};

// Event-time window partitioning. Window k covers [k*W, (k+1)*W).
// Not thread-safe.
class WindowAssembler {
public:
    enum class Admit { Accepted, Late };

    explicit WindowAssembler(std::int64_t window_ms);

    Admit add(SceneSnapshot snapshot);
    // Closes the oldest open window, empty or not.
    SegmentBatch close_next();

    std::uint64_t next_index() const noexcept { return next_index_; }
    std::uint64_t window_of(std::int64_t timestamp_ms) const;
    std::int64_t window_ms() const noexcept { return window_ms_; }
    std::size_t pending() const noexcept { return pending_count_; }
    // Highest window index holding data, if any.
    std::optional<std::uint64_t> last_pending_window() const;

private:
    std::int64_t window_ms_;
    std::uint64_t next_index_ = 0;
    std::size_t pending_count_ = 0;
    std::map<std::uint64_t, std::vector<SceneSnapshot>> pending_;
};

// One snapshot per window: last write wins per field, except Being Attacked
// (true if any record had it) and Hostile Entity (union, later entries win).
// An empty batch returns `previous`; throws Error{NoDataEver} without one.
SceneSnapshot aggregate(const SegmentBatch& batch, const std::optional<SceneSnapshot>& previous);

struct CollectorStats {
    std::uint64_t received = 0;
    std::uint64_t accepted = 0;
    std::uint64_t delivered = 0;
    std::uint64_t dropped_invalid = 0;
    std::uint64_t dropped_overflow = 0;
    std::uint64_t dropped_late = 0;
    std::uint64_t windows_closed = 0;
    std::uint64_t connections = 0;

    std::uint64_t dropped() const noexcept { return dropped_invalid + dropped_overflow + dropped_late; }
};

// Network collector. Many producers, one consumer: next_segment() rejects a
// second concurrent caller with Error{ConsumerBusy}.
class Collector {
public:
    // Throws Error{ConfigInvalid} or Error{BindFailure}.
    static std::unique_ptr<Collector> start(CollectorConfig config);

    ~Collector();
    Collector(const Collector&) = delete;
    Collector& operator=(const Collector&) = delete;

    // Blocks until the current window closes. If it closes after `deadline`,
    // waits until `deadline` and throws Error{TimedOut} without consuming the
    // window. Throws Error{CollectorStopped} after stop().
    SegmentBatch next_segment(std::chrono::steady_clock::time_point deadline);
    SegmentBatch next_segment() { return next_segment(std::chrono::steady_clock::time_point::max()); }

    // Feeds one raw message through the same path as network input.
    void submit(std::string message);

    void stop();
    bool stopped() const;

    CollectorStats stats() const;
    std::uint16_t tcp_port() const;
    std::optional<std::uint16_t> http_port() const;
    const CollectorConfig& config() const;

private:
    struct Impl;
    explicit Collector(std::unique_ptr<Impl> impl);
    std::unique_ptr<Impl> impl_;
};

using CollectorHandle = std::unique_ptr<Collector>;

inline CollectorHandle start_collector(CollectorConfig config) { return Collector::start(std::move(config)); }

}  // namespace bgm
