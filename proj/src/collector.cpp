#include <atomic>
#include <condition_variable>
#include <list>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "bgm/bounded_queue.hpp"
#include "bgm/error.hpp"
#include "bgm/ingestion.hpp"
#include "bgm/text_util.hpp"

namespace bgm {
namespace {

using Clock = std::chrono::steady_clock;

struct RawMessage {
    std::string text;
    std::int64_t arrival_ms = 0;
};

struct Connection {
    std::thread thread;
    std::shared_ptr<net::Socket> socket;
    std::shared_ptr<std::atomic<bool>> done;
};

class ConsumerGuard {
public:
    explicit ConsumerGuard(std::atomic<bool>& flag) : flag_(flag) {
        if (flag_.exchange(true)) {
            throw Error(ErrorCode::ConsumerBusy, "next_segment is already being called from another thread");
        }
    }
    ~ConsumerGuard() { flag_.store(false); }

private:
    std::atomic<bool>& flag_;
};

}  // namespace

struct Collector::Impl {
    CollectorConfig config;
    Clock::time_point origin = Clock::now();
    net::TcpListener listener;
    std::unique_ptr<httplib::Server> http;
    std::optional<std::uint16_t> http_port;
    BoundedQueue<RawMessage> queue;

    std::atomic<bool> stopping{false};
    std::atomic<bool> consumer_busy{false};

    // Guards everything below.
    mutable std::mutex mu;
    std::condition_variable cv;
    WindowAssembler assembler;
    std::optional<std::int64_t> offset_ms;
    CollectorStats stats;
    std::uint64_t in_flight = 0;

    std::thread accept_thread;
    std::thread http_thread;
    std::vector<std::thread> workers;
    std::mutex conn_mu;
    std::list<Connection> connections;

    explicit Impl(CollectorConfig c)
        : config(std::move(c)), queue(config.queue_capacity), assembler(config.window_ms()) {}

    std::int64_t now_ms() const {
        return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - origin).count();
    }

    void count_invalid_unqueued() {
        std::lock_guard lock(mu);
        ++stats.received;
        ++stats.dropped_invalid;
    }

    void enqueue(std::string text) {
        {
            std::lock_guard lock(mu);
            ++stats.received;
            ++in_flight;
        }
        if (auto evicted = queue.push(RawMessage{std::move(text), now_ms()})) {
            std::lock_guard lock(mu);
            ++stats.dropped_overflow;
            --in_flight;
            cv.notify_all();
        }
    }

    void handle_line(std::string_view line) {
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (text::trim(line).empty()) return;
        if (line.size() > config.max_message_bytes) {
            count_invalid_unqueued();
            return;
        }
        enqueue(std::string(line));
    }

    void serve_connection(std::shared_ptr<net::Socket> socket, std::shared_ptr<std::atomic<bool>> done) {
        std::string buffer;
        bool discarding = false;
        char chunk[8192];
        for (;;) {
            const long n = net::read_some(*socket, chunk, sizeof chunk, std::chrono::milliseconds(200));
            if (n < 0) {
                if (stopping) break;
                continue;
            }
            if (n == 0) break;
            buffer.append(chunk, static_cast<std::size_t>(n));
            std::size_t start = 0;
            for (std::size_t nl; (nl = buffer.find('\n', start)) != std::string::npos; start = nl + 1) {
                if (discarding) {
                    discarding = false;
                    continue;
                }
                handle_line(std::string_view(buffer).substr(start, nl - start));
            }
            buffer.erase(0, start);
            if (buffer.size() > config.max_message_bytes) {
                if (!discarding) count_invalid_unqueued();
                discarding = true;
                buffer.clear();
            }
        }
        if (!discarding && !buffer.empty()) handle_line(buffer);
        done->store(true);
    }

    void reap_connections(bool all) {
        std::lock_guard lock(conn_mu);
        for (auto it = connections.begin(); it != connections.end();) {
            if (all) it->socket->shutdown();
            if (all || it->done->load()) {
                if (it->thread.joinable()) it->thread.join();
                it = connections.erase(it);
            } else {
                ++it;
            }
        }
    }

    void accept_loop() {
        while (!stopping) {
            auto accepted = listener.accept(std::chrono::milliseconds(100));
            reap_connections(false);
            if (!accepted) continue;
            auto socket = std::make_shared<net::Socket>(std::move(*accepted));
            auto done = std::make_shared<std::atomic<bool>>(false);
            {
                std::lock_guard lock(mu);
                ++stats.connections;
            }
            std::lock_guard lock(conn_mu);
            connections.push_back({std::thread([this, socket, done] { serve_connection(socket, done); }), socket, done});
        }
    }

    void worker_loop() {
        while (auto message = queue.pop()) {
            std::optional<SceneSnapshot> snapshot;
            try {
                snapshot = parse_snapshot(message->text);
            } catch (const std::exception&) {
                // counted below
            }
            std::lock_guard lock(mu);
            --in_flight;
            if (!snapshot) {
                ++stats.dropped_invalid;
            } else {
                bool late = false;
                if (config.timestamps == TimestampMode::Arrival) {
                    snapshot->timestamp_ms = message->arrival_ms;
                } else {
                    if (!offset_ms) offset_ms = message->arrival_ms - snapshot->timestamp_ms;
                    snapshot->timestamp_ms += *offset_ms;
                    // Records that map before the collector started belong to the
                    // first window while it is still open.
                    if (snapshot->timestamp_ms < 0) {
                        late = assembler.next_index() > 0;
                        snapshot->timestamp_ms = 0;
                    }
                }
                if (!late && assembler.add(std::move(*snapshot)) == WindowAssembler::Admit::Accepted) {
                    ++stats.accepted;
                } else {
                    ++stats.dropped_late;
                }
            }
            cv.notify_all();
        }
    }

    void start_http() {
        http = std::make_unique<httplib::Server>();
        http->set_payload_max_length(config.max_message_bytes);
        http->Post("/v1/snapshot", [this](const httplib::Request& req, httplib::Response& res) {
            if (stopping) {
                res.status = 503;
                return;
            }
            enqueue(req.body);
            res.status = 202;
            res.set_content(R"({"status":"accepted"})", "application/json");
        });
        http->Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
            const CollectorStats s = snapshot_stats();
            nlohmann::json body = {
                {"status", stopping ? "stopping" : "ok"},
                {"received", s.received},
                {"accepted", s.accepted},
                {"delivered", s.delivered},
                {"dropped", s.dropped()},
                {"windows_closed", s.windows_closed},
            };
            res.status = 200;
            res.set_content(body.dump(), "application/json");
        });
        const net::Endpoint& ep = *config.http_bind;
        int port = -1;
        if (ep.port == 0) {
            port = http->bind_to_any_port(ep.host);
        } else if (http->bind_to_port(ep.host, ep.port)) {
            port = ep.port;
        }
        if (port <= 0) throw Error(ErrorCode::BindFailure, "cannot bind HTTP endpoint " + ep.to_string(), ep.to_string());
        http_port = static_cast<std::uint16_t>(port);
        http_thread = std::thread([this] { http->listen_after_bind(); });
    }

    CollectorStats snapshot_stats() const {
        std::lock_guard lock(mu);
        return stats;
    }

    void shutdown() {
        if (stopping.exchange(true)) return;
        {
            std::lock_guard lock(mu);
            cv.notify_all();
        }
        if (accept_thread.joinable()) accept_thread.join();
        listener.close();
        reap_connections(true);
        if (http) {
            http->stop();
            if (http_thread.joinable()) http_thread.join();
        }
        queue.close();
        for (auto& w : workers) {
            if (w.joinable()) w.join();
        }
    }
};

Collector::Collector(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

Collector::~Collector() {
    if (impl_) impl_->shutdown();
}

std::unique_ptr<Collector> Collector::start(CollectorConfig config) {
    config.validate();
    auto impl = std::make_unique<Impl>(std::move(config));
    impl->listener = net::TcpListener::bind(impl->config.bind);
    if (impl->config.http_bind) {
        try {
            impl->start_http();
        } catch (...) {
            impl->listener.close();
            throw;
        }
    }
    Impl* raw = impl.get();
    for (unsigned i = 0; i < raw->config.parse_workers; ++i) raw->workers.emplace_back([raw] { raw->worker_loop(); });
    raw->accept_thread = std::thread([raw] { raw->accept_loop(); });
    return std::unique_ptr<Collector>(new Collector(std::move(impl)));
}

SegmentBatch Collector::next_segment(Clock::time_point deadline) {
    ConsumerGuard guard(impl_->consumer_busy);
    Impl& s = *impl_;
    std::unique_lock lock(s.mu);
    if (s.stopping) throw Error(ErrorCode::CollectorStopped, "collector has been stopped");

    const std::uint64_t index = s.assembler.next_index();
    const auto boundary = s.origin + std::chrono::milliseconds(s.assembler.window_ms() * static_cast<std::int64_t>(index + 1));
    const auto grace = s.config.effective_grace();
    const auto close_at = boundary + grace;
    if (close_at > deadline) {
        s.cv.wait_until(lock, deadline, [&] { return s.stopping.load(); });
        if (s.stopping) throw Error(ErrorCode::CollectorStopped, "collector stopped while waiting for a window");
        throw Error(ErrorCode::TimedOut, "window " + std::to_string(index) + " closes after the deadline");
    }
    while (!s.stopping && Clock::now() < close_at) s.cv.wait_until(lock, close_at);
    if (s.stopping) throw Error(ErrorCode::CollectorStopped, "collector stopped while waiting for a window");

    // Let the parse workers finish records that were already received.
    s.cv.wait_until(lock, close_at + grace, [&] { return s.in_flight == 0 || s.stopping.load(); });

    SegmentBatch batch = s.assembler.close_next();
    s.stats.delivered += batch.snapshots.size();
    ++s.stats.windows_closed;
    batch.close_skew_ms = std::chrono::duration<double, std::milli>(Clock::now() - boundary).count();
    return batch;
}

void Collector::submit(std::string message) { impl_->enqueue(std::move(message)); }

void Collector::stop() { impl_->shutdown(); }

bool Collector::stopped() const { return impl_->stopping.load(); }

CollectorStats Collector::stats() const { return impl_->snapshot_stats(); }

std::uint16_t Collector::tcp_port() const { return impl_->listener.port(); }

std::optional<std::uint16_t> Collector::http_port() const { return impl_->http_port; }

const CollectorConfig& Collector::config() const { return impl_->config; }

}  // namespace bgm
