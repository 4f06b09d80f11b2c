#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "esrt/wire.hpp"

namespace esrt {

// blocking frame transport between edge and cloud
struct FrameChannel {
    virtual ~FrameChannel() = default;
    virtual void send_frame(const std::vector<uint8_t>& frame) = 0;
    // complete frame, or empty vector on orderly close
    virtual std::vector<uint8_t> recv_frame() = 0;
};

// Reads exactly one frame from a byte stream. read_exact(buf, n) must fill n
// bytes, or return false on EOF before the first byte; an empty result means
// the stream closed cleanly at a frame boundary.
std::vector<uint8_t> read_frame_from_stream(
    const std::function<bool(uint8_t*, size_t)>& read_exact);

// per-direction byte/frame accounting used by the one-to-many traffic checks
struct TrafficCounter {
    struct PerType {
        int64_t frames = 0;
        int64_t frame_bytes = 0;
        int64_t payload_bytes = 0;
    };
    PerType sent[5];
    PerType received[5];

    void record_sent(const std::vector<uint8_t>& frame);
    void record_received(const std::vector<uint8_t>& frame);

    const PerType& sent_of(wire::MsgType t) const { return sent[static_cast<size_t>(t)]; }
    const PerType& received_of(wire::MsgType t) const { return received[static_cast<size_t>(t)]; }
    int64_t total_sent_bytes() const;
    int64_t total_received_bytes() const;
};

// wraps a channel and records everything crossing it
class CountingChannel : public FrameChannel {
public:
    CountingChannel(FrameChannel& inner, TrafficCounter& counter)
        : inner_(inner), counter_(counter) {}

    void send_frame(const std::vector<uint8_t>& frame) override {
        counter_.record_sent(frame);
        inner_.send_frame(frame);
    }

    std::vector<uint8_t> recv_frame() override {
        auto frame = inner_.recv_frame();
        if (!frame.empty()) counter_.record_received(frame);
        return frame;
    }

private:
    FrameChannel& inner_;
    TrafficCounter& counter_;
};

} // namespace esrt
