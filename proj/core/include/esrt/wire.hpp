#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "esrt/errors.hpp"
#include "esrt/hash.hpp"

namespace esrt::wire {

// Frame layout (all multi-byte integers little-endian):
//
//   offset  size  field
//   0       4     magic "ESRT"
//   4       1     version (1)
//   5       1     msg_type
//   6       1     dtype (0 = BF16, 1 = F32)
//   7       1     flags (reserved, 0)
//   8       32    cache_key
//   40      2     n
//   42      2     k
//   44      2     d
//   46      2     prompt_len
//   48      4*P   prompt_token_ids (u32 each)
//   48+4P   4     payload_len
//   52+4P   ...   payload
//
// The fixed header region is exactly 48 bytes before the prompt ids. Frame
// length is a pure function of (msg_type, dtype, n, k, d, prompt_len,
// payload_len); it never depends on audio duration or language. Target
// languages travel only as opaque token ids inside prompt_token_ids.

enum class MsgType : uint8_t {
    Features = 0,
    CacheRef = 1,
    Response = 2,
    NeedFeatures = 3,
    Error = 4,
};

enum class Dtype : uint8_t {
    Bf16 = 0,
    F32 = 1,
};

inline constexpr uint8_t kVersion = 1;
inline constexpr size_t kFixedHeaderBytes = 48;
inline constexpr char kMagic[4] = {'E', 'S', 'R', 'T'};

inline size_t bytes_per(Dtype dt) { return dt == Dtype::Bf16 ? 2 : 4; }

struct Envelope {
    MsgType msg_type = MsgType::Features;
    Dtype dtype = Dtype::Bf16;
    CacheKey cache_key{};
    uint16_t n = 0;
    uint16_t k = 0;
    uint16_t d = 0;
    std::vector<uint32_t> prompt_token_ids;
    std::vector<uint8_t> payload;

    bool operator==(const Envelope&) const = default;
};

struct WireError : Error {
    using Error::Error;
};
struct BadMagicError : WireError {
    using WireError::WireError;
};
struct UnknownVersionError : WireError {
    using WireError::WireError;
};
struct UnknownMsgTypeError : WireError {
    using WireError::WireError;
};
struct BadDtypeError : WireError {
    using WireError::WireError;
};
struct TruncatedFrameError : WireError {
    using WireError::WireError;
};
struct LengthMismatchError : WireError {
    using WireError::WireError;
};
// encode-side invariant violations (e.g. FEATURES payload not n*k*d elements)
struct InvariantError : WireError {
    using WireError::WireError;
};

// total frame length for given header fields
size_t frame_size(size_t prompt_len, size_t payload_len);

std::vector<uint8_t> encode_envelope(const Envelope& msg);
Envelope decode_envelope(std::span<const uint8_t> bytes);

// convenience constructors
Envelope make_features(const CacheKey& key, uint16_t n, uint16_t k, uint16_t d,
                       std::span<const float> features, std::vector<uint32_t> prompt_ids,
                       Dtype dtype = Dtype::Bf16);
Envelope make_cache_ref(const CacheKey& key, uint16_t k, uint16_t d,
                        std::vector<uint32_t> prompt_ids);
Envelope make_response(const std::string& utf8_text);
Envelope make_need_features(const CacheKey& key);
Envelope make_error(const std::string& utf8_text);

// decodes a FEATURES payload back to float32
std::vector<float> payload_to_f32(const Envelope& msg);

struct SizeReport {
    int64_t payload_bytes = 0;
    int64_t envelope_bytes = 0;
    int64_t base64_bytes = 0;  // 4 * ceil(envelope_bytes / 3)
};

SizeReport measure_sizes(const Envelope& msg);

int64_t base64_size(int64_t raw_bytes);

// raw PCM byte count of an audio clip: duration * sample_rate * bytes_per_sample
int64_t audio_size(double duration_s, int64_t sample_rate_hz = 16000, int64_t bytes_depth = 2);

} // namespace esrt::wire
