#include <doctest.h>

#include <future>
#include <thread>

#include <httplib.h>

#include "bgm/error.hpp"
#include "bgm/ingestion.hpp"
#include "bgm/world_sim.hpp"

using namespace bgm;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

SceneSnapshot make_snapshot(std::int64_t ts) {
    SceneSnapshot s = default_world_state();
    s.timestamp_ms = ts;
    return s;
}

std::string wire(std::int64_t ts, int tag = 0) {
    SceneSnapshot s = make_snapshot(ts);
    s.extra["Seq"] = std::to_string(tag);
    return serialize_snapshot(s);
}

CollectorConfig quick_config(double window_seconds = 0.4) {
    CollectorConfig c;
    c.window_seconds = window_seconds;
    c.close_grace = 10ms;
    return c;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::IoFailure;
}

}  // namespace

TEST_CASE("collector config validation") {
    CollectorConfig c;
    c.window_seconds = 0;
    CHECK(code_of([&] { c.validate(); }) == ErrorCode::ConfigInvalid);
    CHECK(code_of([&] { Collector::start(c); }) == ErrorCode::ConfigInvalid);
    c = CollectorConfig{};
    c.queue_capacity = 0;
    CHECK(code_of([&] { c.validate(); }) == ErrorCode::ConfigInvalid);
    c = CollectorConfig{};
    c.window_seconds = 10;
    CHECK(c.window_ms() == 10000);
    CHECK(c.effective_grace() == 50ms);
    c.window_seconds = 1;
    CHECK(c.effective_grace() == 25ms);
}

TEST_CASE("window assembler partitions by event time") {
    WindowAssembler a(1000);
    CHECK(a.add(make_snapshot(999)) == WindowAssembler::Admit::Accepted);
    CHECK(a.add(make_snapshot(1000)) == WindowAssembler::Admit::Accepted);  // exactly t_end of window 0
    CHECK(a.add(make_snapshot(0)) == WindowAssembler::Admit::Accepted);
    CHECK(a.add(make_snapshot(2500)) == WindowAssembler::Admit::Accepted);
    CHECK(a.last_pending_window() == 2u);

    SegmentBatch w0 = a.close_next();
    CHECK(w0.window_index == 0);
    CHECK(w0.t_start_ms == 0);
    CHECK(w0.t_end_ms == 1000);
    REQUIRE(w0.snapshots.size() == 2);
    CHECK(w0.snapshots[0].timestamp_ms == 0);
    CHECK(w0.snapshots[1].timestamp_ms == 999);

    CHECK(a.add(make_snapshot(500)) == WindowAssembler::Admit::Late);

    SegmentBatch w1 = a.close_next();
    REQUIRE(w1.snapshots.size() == 1);
    CHECK(w1.snapshots[0].timestamp_ms == 1000);
    CHECK(a.close_next().snapshots.size() == 1);
    SegmentBatch idle = a.close_next();
    CHECK(idle.window_index == 3);
    CHECK(idle.snapshots.empty());
    CHECK(a.pending() == 0);
}

TEST_CASE("aggregate: last write wins, any-true combat, hostile union") {
    SegmentBatch batch;
    SceneSnapshot first = make_snapshot(0);
    first.being_attacked = true;
    first.hostile_entity = {{"Zombie", 3.0}};
    first.scene = "forest";
    SceneSnapshot last = make_snapshot(10);
    last.being_attacked = false;
    last.hostile_entity = {{"Skeleton", 5.0}};
    last.scene = "desert";
    last.health = 12.0;
    batch.snapshots = {first, last};

    const SceneSnapshot agg = aggregate(batch, std::nullopt);
    CHECK(agg.being_attacked);
    CHECK(agg.scene == "desert");
    CHECK(agg.health == 12.0);
    CHECK(agg.hostile_entity.size() == 2);
    CHECK(agg.timestamp_ms == 10);

    SegmentBatch single;
    single.snapshots = {last};
    CHECK(aggregate(single, std::nullopt) == last);

    SegmentBatch empty;
    CHECK(aggregate(empty, first) == first);
    CHECK(code_of([&] { aggregate(empty, std::nullopt); }) == ErrorCode::NoDataEver);
}

TEST_CASE("collector delivers TCP snapshots in window order") {
    auto collector = Collector::start(quick_config());
    std::this_thread::sleep_for(50ms);  // keep mapped timestamps clear of the clamp at 0
    {
        net::Socket sock = net::connect_tcp({"127.0.0.1", collector->tcp_port()});
        sock.write_all(wire(20, 3) + "\n" + wire(0, 1) + "\r\n" + wire(10, 2) + "\n");
    }
    SegmentBatch w0 = collector->next_segment();
    CHECK(w0.window_index == 0);
    REQUIRE(w0.snapshots.size() == 3);
    CHECK(w0.snapshots[0].extra.at("Seq") == "1");
    CHECK(w0.snapshots[2].extra.at("Seq") == "3");
    REQUIRE(w0.close_skew_ms.has_value());
    CHECK(*w0.close_skew_ms >= 0.0);

    SegmentBatch w1 = collector->next_segment();
    CHECK(w1.window_index == 1);
    CHECK(w1.snapshots.empty());
    CHECK(w1.t_start_ms == w0.t_end_ms);

    const CollectorStats s = collector->stats();
    CHECK(s.received == 3);
    CHECK(s.delivered == 3);
    CHECK(s.dropped() == 0);
    CHECK(s.connections == 1);
}

TEST_CASE("invalid and oversized messages are counted, never fatal") {
    CollectorConfig c = quick_config();
    c.max_message_bytes = 2048;
    auto collector = Collector::start(c);
    {
        net::Socket sock = net::connect_tcp({"127.0.0.1", collector->tcp_port()});
        sock.write_all("not json\n{\"Scene\": \"x\"}\n" + std::string(5000, 'x') + "\n" + wire(0) + "\n");
    }
    SegmentBatch w0 = collector->next_segment();
    CHECK(w0.snapshots.size() == 1);
    const CollectorStats s = collector->stats();
    CHECK(s.received == 4);
    CHECK(s.dropped_invalid == 3);
    CHECK(s.received == s.delivered + s.dropped());
}

TEST_CASE("HTTP routes") {
    auto collector = Collector::start(quick_config());
    REQUIRE(collector->http_port().has_value());
    httplib::Client client("127.0.0.1", *collector->http_port());
    auto res = client.Post("/v1/snapshot", wire(0), "application/json");
    REQUIRE(res);
    CHECK(res->status == 202);
    auto bad = client.Post("/v1/snapshot", "{}", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 202);  // validation happens off the request path
    auto health = client.Get("/v1/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(json::parse(health->body).at("status") == "ok");

    SegmentBatch w0 = collector->next_segment();
    CHECK(w0.snapshots.size() == 1);
    CHECK(collector->stats().dropped_invalid == 1);
}

TEST_CASE("bind conflicts and timeouts") {
    auto first = Collector::start(quick_config());
    CollectorConfig c = quick_config();
    c.bind.port = first->tcp_port();
    CHECK(code_of([&] { Collector::start(c); }) == ErrorCode::BindFailure);

    const auto before = std::chrono::steady_clock::now();
    CHECK(code_of([&] { first->next_segment(std::chrono::steady_clock::now() + 30ms); }) == ErrorCode::TimedOut);
    CHECK(std::chrono::steady_clock::now() - before >= 25ms);
    // The window was not consumed by the timeout.
    CHECK(first->next_segment().window_index == 0);
}

TEST_CASE("single consumer is enforced") {
    auto collector = Collector::start(quick_config(0.5));
    auto pending = std::async(std::launch::async, [&] { return collector->next_segment(); });
    std::this_thread::sleep_for(100ms);
    CHECK(code_of([&] { collector->next_segment(); }) == ErrorCode::ConsumerBusy);
    CHECK(pending.get().window_index == 0);
}

TEST_CASE("stop wakes the consumer") {
    auto collector = Collector::start(quick_config(5.0));
    auto pending = std::async(std::launch::async, [&] {
        return code_of([&] { collector->next_segment(); });
    });
    std::this_thread::sleep_for(50ms);
    collector->stop();
    CHECK(pending.get() == ErrorCode::CollectorStopped);
    CHECK(collector->stopped());
    CHECK(code_of([&] { collector->next_segment(); }) == ErrorCode::CollectorStopped);
}

TEST_CASE("arrival timestamps replace record timestamps") {
    CollectorConfig c = quick_config();
    c.timestamps = TimestampMode::Arrival;
    auto collector = Collector::start(c);
    collector->submit(wire(99999999));
    SegmentBatch w0 = collector->next_segment();
    REQUIRE(w0.snapshots.size() == 1);
    CHECK(w0.snapshots[0].timestamp_ms < w0.t_end_ms);
}

TEST_CASE("records behind a closed window are dropped as late") {
    auto collector = Collector::start(quick_config(0.2));
    collector->submit(wire(1000));      // fixes the stream offset
    collector->next_segment();
    collector->submit(wire(0));         // 1 s before the first record: window already closed
    collector->next_segment();
    const CollectorStats s = collector->stats();
    CHECK(s.dropped_late == 1);
    CHECK(s.received == s.delivered + s.dropped());
}

TEST_CASE("overflow drops the oldest and conservation holds") {
    CollectorConfig c = quick_config(0.3);
    c.queue_capacity = 2;
    c.parse_workers = 1;
    auto collector = Collector::start(c);
    for (int i = 0; i < 500; ++i) collector->submit(wire(i % 50, i));
    std::uint64_t delivered = 0;
    for (int w = 0; w < 3; ++w) delivered += collector->next_segment().snapshots.size();
    const CollectorStats s = collector->stats();
    CHECK(s.received == 500);
    CHECK(delivered == s.delivered);
    CHECK(s.received == s.delivered + s.dropped());
}
