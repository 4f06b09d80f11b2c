#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "esrt/channel.hpp"
#include "esrt/errors.hpp"

namespace esrt {

// thin RAII wrappers over POSIX TCP sockets

class TcpConn {
public:
    TcpConn() = default;
    explicit TcpConn(int fd) : fd_(fd) {}
    TcpConn(TcpConn&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
    TcpConn& operator=(TcpConn&& other) noexcept;
    ~TcpConn();

    static TcpConn connect(const std::string& host, uint16_t port);

    bool valid() const { return fd_ >= 0; }
    void send_all(const uint8_t* data, size_t len);
    // fills exactly len bytes; returns false on clean EOF before any byte
    bool recv_exact(uint8_t* data, size_t len);
    void shutdown_both();
    void close();

private:
    int fd_ = -1;
};

class TcpListener {
public:
    TcpListener() = default;
    ~TcpListener();
    TcpListener(TcpListener&&) = delete;

    // port 0 picks an ephemeral port; bound_port() reports it
    void bind_and_listen(const std::string& host, uint16_t port);
    uint16_t bound_port() const { return port_; }
    // blocks; invalid conn on listener close
    TcpConn accept();
    void close();

private:
    int fd_ = -1;
    uint16_t port_ = 0;
};

// FrameChannel over a TCP connection
class SocketChannel : public FrameChannel {
public:
    explicit SocketChannel(TcpConn conn) : conn_(std::move(conn)) {}

    void send_frame(const std::vector<uint8_t>& frame) override;
    std::vector<uint8_t> recv_frame() override;

    TcpConn& conn() { return conn_; }

private:
    TcpConn conn_;
};

} // namespace esrt
