#include "esrt/channel.hpp"

#include <cstring>

namespace esrt {

std::vector<uint8_t> read_frame_from_stream(
    const std::function<bool(uint8_t*, size_t)>& read_exact) {
    std::vector<uint8_t> buf(wire::kFixedHeaderBytes);
    if (!read_exact(buf.data(), wire::kFixedHeaderBytes)) return {};

    if (std::memcmp(buf.data(), wire::kMagic, 4) != 0) {
        throw wire::BadMagicError("bad magic on stream");
    }
    if (buf[4] != wire::kVersion) {
        throw wire::UnknownVersionError("unknown protocol version on stream");
    }
    const size_t prompt_len = static_cast<size_t>(buf[46] | (buf[47] << 8));

    size_t off = buf.size();
    buf.resize(off + 4 * prompt_len + 4);
    if (!read_exact(buf.data() + off, 4 * prompt_len + 4)) {
        throw wire::TruncatedFrameError("stream closed inside frame header");
    }
    const uint8_t* pl = buf.data() + buf.size() - 4;
    const uint32_t payload_len = static_cast<uint32_t>(pl[0]) | (static_cast<uint32_t>(pl[1]) << 8) |
                                 (static_cast<uint32_t>(pl[2]) << 16) |
                                 (static_cast<uint32_t>(pl[3]) << 24);
    if (payload_len > (1u << 28)) {
        throw wire::LengthMismatchError("stream payload_len exceeds protocol limit");
    }
    off = buf.size();
    buf.resize(off + payload_len);
    if (payload_len > 0 && !read_exact(buf.data() + off, payload_len)) {
        throw wire::TruncatedFrameError("stream closed inside payload");
    }
    return buf;
}

namespace {

void record(TrafficCounter::PerType* table, const std::vector<uint8_t>& frame) {
    // frame is already validated by the codec layer on the other side;
    // here we only need msg_type and payload_len for accounting
    const uint8_t type = frame.size() > 5 ? frame[5] : 0;
    if (type > 4) return;
    auto& slot = table[type];
    slot.frames += 1;
    slot.frame_bytes += static_cast<int64_t>(frame.size());
    if (frame.size() >= wire::kFixedHeaderBytes + 4) {
        const size_t prompt_len = static_cast<size_t>(frame[46] | (frame[47] << 8));
        const size_t header = wire::kFixedHeaderBytes + 4 * prompt_len + 4;
        if (frame.size() >= header) {
            slot.payload_bytes += static_cast<int64_t>(frame.size() - header);
        }
    }
}

} // namespace

void TrafficCounter::record_sent(const std::vector<uint8_t>& frame) {
    record(sent, frame);
}

void TrafficCounter::record_received(const std::vector<uint8_t>& frame) {
    record(received, frame);
}

int64_t TrafficCounter::total_sent_bytes() const {
    int64_t n = 0;
    for (const auto& s : sent) n += s.frame_bytes;
    return n;
}

int64_t TrafficCounter::total_received_bytes() const {
    int64_t n = 0;
    for (const auto& s : received) n += s.frame_bytes;
    return n;
}

} // namespace esrt
