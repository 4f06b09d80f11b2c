#include "esrt/net.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace esrt {

namespace {

sockaddr_in make_addr(const std::string& host, uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        throw NetError("invalid IPv4 address: " + host);
    }
    return addr;
}

} // namespace

TcpConn& TcpConn::operator=(TcpConn&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        other.fd_ = -1;
    }
    return *this;
}

TcpConn::~TcpConn() {
    close();
}

void TcpConn::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void TcpConn::shutdown_both() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

TcpConn TcpConn::connect(const std::string& host, uint16_t port) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw NetError("socket() failed: " + std::string(std::strerror(errno)));
    sockaddr_in addr = make_addr(host, port);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        const int err = errno;
        ::close(fd);
        throw NetError("connect to " + host + ":" + std::to_string(port) +
                       " failed: " + std::strerror(err));
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return TcpConn(fd);
}

void TcpConn::send_all(const uint8_t* data, size_t len) {
    size_t sent = 0;
    while (sent < len) {
        const ssize_t n = ::send(fd_, data + sent, len - sent, MSG_NOSIGNAL);
        if (n <= 0) {
            if (n < 0 && errno == EINTR) continue;
            throw NetError("send failed: " + std::string(std::strerror(errno)));
        }
        sent += static_cast<size_t>(n);
    }
}

bool TcpConn::recv_exact(uint8_t* data, size_t len) {
    size_t got = 0;
    while (got < len) {
        const ssize_t n = ::recv(fd_, data + got, len - got, 0);
        if (n == 0) {
            if (got == 0) return false;
            throw NetError("connection closed mid-read");
        }
        if (n < 0) {
            if (errno == EINTR) continue;
            throw NetError("recv failed: " + std::string(std::strerror(errno)));
        }
        got += static_cast<size_t>(n);
    }
    return true;
}

TcpListener::~TcpListener() {
    close();
}

void TcpListener::close() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }
}

void TcpListener::bind_and_listen(const std::string& host, uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw NetError("socket() failed: " + std::string(std::strerror(errno)));
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = make_addr(host, port);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        const int err = errno;
        close();
        throw NetError("bind to " + host + ":" + std::to_string(port) +
                       " failed: " + std::strerror(err));
    }
    if (::listen(fd_, 64) != 0) {
        const int err = errno;
        close();
        throw NetError("listen failed: " + std::string(std::strerror(err)));
    }
    socklen_t len = sizeof(addr);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

TcpConn TcpListener::accept() {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) return TcpConn();  // listener closed
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return TcpConn(fd);
}

void SocketChannel::send_frame(const std::vector<uint8_t>& frame) {
    conn_.send_all(frame.data(), frame.size());
}

std::vector<uint8_t> SocketChannel::recv_frame() {
    return read_frame_from_stream(
        [this](uint8_t* buf, size_t n) { return conn_.recv_exact(buf, n); });
}

} // namespace esrt
