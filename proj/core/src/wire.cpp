#include "esrt/wire.hpp"

#include <cstring>

#include "esrt/bf16.hpp"

namespace esrt::wire {

namespace {

constexpr size_t kMaxPromptLen = 4096;
constexpr size_t kMaxPayloadLen = 1u << 28;  // 256 MiB guard against allocation bombs

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xFF));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xFF));
    out.push_back(static_cast<uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<uint8_t>((v >> 24) & 0xFF));
}

uint16_t get_u16(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t get_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

size_t expected_payload_len(const Envelope& msg) {
    switch (msg.msg_type) {
        case MsgType::Features:
            return static_cast<size_t>(msg.n) * msg.k * msg.d * bytes_per(msg.dtype);
        case MsgType::CacheRef:
        case MsgType::NeedFeatures:
            return 0;
        case MsgType::Response:
        case MsgType::Error:
            return msg.payload.size();  // UTF-8, any length
    }
    return 0;
}

void check_invariants(const Envelope& msg) {
    const size_t want = expected_payload_len(msg);
    if (msg.payload.size() != want) {
        throw InvariantError("envelope payload length " + std::to_string(msg.payload.size()) +
                             " violates msg_type invariant (expected " + std::to_string(want) +
                             ")");
    }
    if (msg.prompt_token_ids.size() > kMaxPromptLen) {
        throw InvariantError("prompt too long: " + std::to_string(msg.prompt_token_ids.size()));
    }
}

} // namespace

size_t frame_size(size_t prompt_len, size_t payload_len) {
    return kFixedHeaderBytes + 4 * prompt_len + 4 + payload_len;
}

std::vector<uint8_t> encode_envelope(const Envelope& msg) {
    check_invariants(msg);
    std::vector<uint8_t> out;
    out.reserve(frame_size(msg.prompt_token_ids.size(), msg.payload.size()));
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kVersion);
    out.push_back(static_cast<uint8_t>(msg.msg_type));
    out.push_back(static_cast<uint8_t>(msg.dtype));
    out.push_back(0);  // flags
    out.insert(out.end(), msg.cache_key.begin(), msg.cache_key.end());
    put_u16(out, msg.n);
    put_u16(out, msg.k);
    put_u16(out, msg.d);
    put_u16(out, static_cast<uint16_t>(msg.prompt_token_ids.size()));
    for (uint32_t id : msg.prompt_token_ids) put_u32(out, id);
    put_u32(out, static_cast<uint32_t>(msg.payload.size()));
    out.insert(out.end(), msg.payload.begin(), msg.payload.end());
    return out;
}

Envelope decode_envelope(std::span<const uint8_t> bytes) {
    if (bytes.size() < kFixedHeaderBytes) {
        throw TruncatedFrameError("frame shorter than fixed header: " +
                                  std::to_string(bytes.size()) + " bytes");
    }
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw BadMagicError("bad magic in frame header");
    }
    if (bytes[4] != kVersion) {
        throw UnknownVersionError("unknown protocol version " + std::to_string(bytes[4]));
    }
    if (bytes[5] > static_cast<uint8_t>(MsgType::Error)) {
        throw UnknownMsgTypeError("unknown msg_type " + std::to_string(bytes[5]));
    }
    if (bytes[6] > static_cast<uint8_t>(Dtype::F32)) {
        throw BadDtypeError("unknown dtype " + std::to_string(bytes[6]));
    }

    Envelope msg;
    msg.msg_type = static_cast<MsgType>(bytes[5]);
    msg.dtype = static_cast<Dtype>(bytes[6]);
    std::memcpy(msg.cache_key.data(), bytes.data() + 8, 32);
    msg.n = get_u16(bytes.data() + 40);
    msg.k = get_u16(bytes.data() + 42);
    msg.d = get_u16(bytes.data() + 44);
    const size_t prompt_len = get_u16(bytes.data() + 46);

    size_t off = kFixedHeaderBytes;
    if (bytes.size() < off + 4 * prompt_len + 4) {
        throw TruncatedFrameError("frame truncated inside prompt ids");
    }
    msg.prompt_token_ids.resize(prompt_len);
    for (size_t i = 0; i < prompt_len; ++i) {
        msg.prompt_token_ids[i] = get_u32(bytes.data() + off);
        off += 4;
    }
    const size_t payload_len = get_u32(bytes.data() + off);
    off += 4;
    if (payload_len > kMaxPayloadLen) {
        throw LengthMismatchError("payload_len " + std::to_string(payload_len) +
                                  " exceeds protocol limit");
    }
    if (bytes.size() < off + payload_len) {
        throw TruncatedFrameError("payload_len " + std::to_string(payload_len) +
                                  " larger than remaining " + std::to_string(bytes.size() - off) +
                                  " bytes");
    }
    if (bytes.size() > off + payload_len) {
        throw LengthMismatchError("frame has " + std::to_string(bytes.size() - off - payload_len) +
                                  " trailing bytes");
    }
    msg.payload.assign(bytes.begin() + static_cast<ptrdiff_t>(off),
                       bytes.begin() + static_cast<ptrdiff_t>(off + payload_len));

    const size_t want = expected_payload_len(msg);
    if (msg.payload.size() != want) {
        throw LengthMismatchError("payload length " + std::to_string(msg.payload.size()) +
                                  " inconsistent with header fields (expected " +
                                  std::to_string(want) + ")");
    }
    return msg;
}

Envelope make_features(const CacheKey& key, uint16_t n, uint16_t k, uint16_t d,
                       std::span<const float> features, std::vector<uint32_t> prompt_ids,
                       Dtype dtype) {
    if (features.size() != static_cast<size_t>(n) * k * d) {
        throw InvariantError("feature element count " + std::to_string(features.size()) +
                             " does not equal n*k*d");
    }
    Envelope msg;
    msg.msg_type = MsgType::Features;
    msg.dtype = dtype;
    msg.cache_key = key;
    msg.n = n;
    msg.k = k;
    msg.d = d;
    msg.prompt_token_ids = std::move(prompt_ids);
    if (dtype == Dtype::Bf16) {
        msg.payload = bf16_bytes(features);
    } else {
        msg.payload.resize(features.size() * 4);
        std::memcpy(msg.payload.data(), features.data(), msg.payload.size());
    }
    return msg;
}

Envelope make_cache_ref(const CacheKey& key, uint16_t k, uint16_t d,
                        std::vector<uint32_t> prompt_ids) {
    Envelope msg;
    msg.msg_type = MsgType::CacheRef;
    msg.cache_key = key;
    msg.n = 1;
    msg.k = k;
    msg.d = d;
    msg.prompt_token_ids = std::move(prompt_ids);
    return msg;
}

Envelope make_response(const std::string& utf8_text) {
    Envelope msg;
    msg.msg_type = MsgType::Response;
    msg.payload.assign(utf8_text.begin(), utf8_text.end());
    return msg;
}

Envelope make_need_features(const CacheKey& key) {
    Envelope msg;
    msg.msg_type = MsgType::NeedFeatures;
    msg.cache_key = key;
    return msg;
}

Envelope make_error(const std::string& utf8_text) {
    Envelope msg;
    msg.msg_type = MsgType::Error;
    msg.payload.assign(utf8_text.begin(), utf8_text.end());
    return msg;
}

std::vector<float> payload_to_f32(const Envelope& msg) {
    if (msg.msg_type != MsgType::Features) {
        throw InvariantError("payload_to_f32 on non-FEATURES frame");
    }
    if (msg.dtype == Dtype::Bf16) {
        return f32_from_bf16_bytes(msg.payload);
    }
    std::vector<float> out(msg.payload.size() / 4);
    std::memcpy(out.data(), msg.payload.data(), msg.payload.size());
    return out;
}

int64_t base64_size(int64_t raw_bytes) {
    return 4 * ((raw_bytes + 2) / 3);
}

SizeReport measure_sizes(const Envelope& msg) {
    SizeReport r;
    r.payload_bytes = static_cast<int64_t>(msg.payload.size());
    r.envelope_bytes =
        static_cast<int64_t>(frame_size(msg.prompt_token_ids.size(), msg.payload.size()));
    r.base64_bytes = base64_size(r.envelope_bytes);
    return r;
}

int64_t audio_size(double duration_s, int64_t sample_rate_hz, int64_t bytes_depth) {
    return static_cast<int64_t>(duration_s * static_cast<double>(sample_rate_hz)) * bytes_depth;
}

} // namespace esrt::wire
