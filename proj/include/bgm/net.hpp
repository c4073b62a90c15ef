#pragma once
// Thin POSIX TCP wrappers used by the collector and the replay sender.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace bgm::net {

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;

    std::string to_string() const { return host + ":" + std::to_string(port); }
};

// "host:port"; throws Error{ConfigInvalid}.
Endpoint parse_endpoint(std::string_view text);

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& other) noexcept : fd_(other.release()) {}
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { close(); }

    int fd() const noexcept { return fd_; }
    bool valid() const noexcept { return fd_ >= 0; }
    int release() noexcept;
    void close() noexcept;
    // Unblocks any thread reading from this socket.
    void shutdown() noexcept;

    // Throws Error{IoFailure} when the peer is gone.
    void write_all(std::string_view data) const;

private:
    int fd_ = -1;
};

class TcpListener {
public:
    // Throws Error{BindFailure}. Port 0 picks an ephemeral port.
    static TcpListener bind(const Endpoint& endpoint, int backlog = 64);

    std::uint16_t port() const noexcept { return port_; }
    // Waits up to `timeout` for a connection.
    std::optional<Socket> accept(std::chrono::milliseconds timeout) const;
    void close() noexcept { socket_.close(); }

private:
    Socket socket_;
    std::uint16_t port_ = 0;
};

// Throws Error{ConnectionRefused}.
Socket connect_tcp(const Endpoint& endpoint);

// Blocks until data arrives, the peer closes (returns 0) or `timeout` passes
// (returns -1 with nothing read). Errors other than timeout return 0.
long read_some(const Socket& socket, char* buffer, std::size_t size, std::chrono::milliseconds timeout);

}  // namespace bgm::net
