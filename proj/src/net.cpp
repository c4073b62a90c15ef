#include "bgm/net.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "bgm/error.hpp"

namespace bgm::net {
namespace {

struct AddrInfo {
    addrinfo* head = nullptr;
    ~AddrInfo() {
        if (head) ::freeaddrinfo(head);
    }
};

int resolve(const Endpoint& ep, bool passive, AddrInfo& out) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    if (passive) hints.ai_flags = AI_PASSIVE;
    const std::string port = std::to_string(ep.port);
    const char* host = ep.host.empty() || ep.host == "*" ? nullptr : ep.host.c_str();
    return ::getaddrinfo(host, port.c_str(), &hints, &out.head);
}

}  // namespace

Endpoint parse_endpoint(std::string_view text) {
    const auto colon = text.rfind(':');
    if (colon == std::string_view::npos || colon + 1 == text.size()) {
        throw Error(ErrorCode::ConfigInvalid, "expected host:port, got '" + std::string(text) + "'", "endpoint");
    }
    Endpoint ep;
    ep.host = std::string(text.substr(0, colon));
    if (ep.host.size() >= 2 && ep.host.front() == '[' && ep.host.back() == ']') {
        ep.host = ep.host.substr(1, ep.host.size() - 2);
    }
    unsigned port = 0;
    const auto digits = text.substr(colon + 1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || port > 65535) {
        throw Error(ErrorCode::ConfigInvalid, "bad port in '" + std::string(text) + "'", "endpoint");
    }
    ep.port = static_cast<std::uint16_t>(port);
    return ep;
}

Socket& Socket::operator=(Socket&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.release();
    }
    return *this;
}

int Socket::release() noexcept {
    const int fd = fd_;
    fd_ = -1;
    return fd;
}

void Socket::close() noexcept {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void Socket::shutdown() noexcept {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::write_all(std::string_view data) const {
    while (!data.empty()) {
        const ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(ErrorCode::IoFailure, std::string("send failed: ") + std::strerror(errno));
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
}

TcpListener TcpListener::bind(const Endpoint& endpoint, int backlog) {
    AddrInfo info;
    if (int rc = resolve(endpoint, true, info); rc != 0) {
        throw Error(ErrorCode::BindFailure, endpoint.to_string() + ": " + ::gai_strerror(rc), endpoint.to_string());
    }
    std::string last_error = "no usable address";
    for (addrinfo* ai = info.head; ai != nullptr; ai = ai->ai_next) {
        Socket s(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
        if (!s.valid()) {
            last_error = std::strerror(errno);
            continue;
        }
        int one = 1;
        ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(s.fd(), ai->ai_addr, ai->ai_addrlen) != 0 || ::listen(s.fd(), backlog) != 0) {
            last_error = std::strerror(errno);
            continue;
        }
        sockaddr_storage bound{};
        socklen_t len = sizeof bound;
        ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
        TcpListener out;
        out.port_ = bound.ss_family == AF_INET6
                        ? ntohs(reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port)
                        : ntohs(reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
        out.socket_ = std::move(s);
        return out;
    }
    throw Error(ErrorCode::BindFailure, endpoint.to_string() + ": " + last_error, endpoint.to_string());
}

std::optional<Socket> TcpListener::accept(std::chrono::milliseconds timeout) const {
    pollfd pfd{socket_.fd(), POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (rc <= 0 || !(pfd.revents & POLLIN)) return std::nullopt;
    const int fd = ::accept4(socket_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) return std::nullopt;
    return Socket(fd);
}

Socket connect_tcp(const Endpoint& endpoint) {
    AddrInfo info;
    if (int rc = resolve(endpoint, false, info); rc != 0) {
        throw Error(ErrorCode::ConnectionRefused, endpoint.to_string() + ": " + ::gai_strerror(rc),
                    endpoint.to_string());
    }
    std::string last_error = "no usable address";
    for (addrinfo* ai = info.head; ai != nullptr; ai = ai->ai_next) {
        Socket s(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
        if (!s.valid()) continue;
        if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
            int one = 1;
            ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            return s;
        }
        last_error = std::strerror(errno);
    }
    throw Error(ErrorCode::ConnectionRefused, endpoint.to_string() + ": " + last_error, endpoint.to_string());
}

long read_some(const Socket& socket, char* buffer, std::size_t size, std::chrono::milliseconds timeout) {
    pollfd pfd{socket.fd(), POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (rc == 0) return -1;
    if (rc < 0) return errno == EINTR ? -1 : 0;
    for (;;) {
        const ssize_t n = ::recv(socket.fd(), buffer, size, 0);
        if (n < 0 && errno == EINTR) continue;
        return n < 0 ? 0 : static_cast<long>(n);
    }
}

}  // namespace bgm::net
