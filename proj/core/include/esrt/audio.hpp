#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "esrt/errors.hpp"

namespace esrt {

inline constexpr int kSampleRate = 16000;
inline constexpr double kWindowSeconds = 30.0;
inline constexpr int64_t kWindowSamples = 480000;  // 30 s * 16 kHz

// malformed RIFF/WAVE container
struct WavFormatError : AudioError {
    using AudioError::AudioError;
};
// well-formed but not PCM16 mono 16 kHz
struct UnsupportedFormatError : AudioError {
    using AudioError::AudioError;
};
// clip longer than the 30 s window
struct DurationError : AudioError {
    using AudioError::AudioError;
};

struct AudioClip {
    std::vector<int16_t> samples;  // mono PCM16
    int sample_rate_hz = kSampleRate;

    double duration_s() const {
        return static_cast<double>(samples.size()) / static_cast<double>(sample_rate_hz);
    }

    // little-endian sample bytes, the hashed "content" of the clip
    std::vector<uint8_t> pcm_bytes() const;
};

// Strict decoder: RIFF/WAVE, PCM16, mono, 16 kHz, duration in (0, 30] s.
AudioClip decode_wav(std::span<const uint8_t> bytes);

// Minimal writer for the same subset (tools + test fixtures).
std::vector<uint8_t> encode_wav(std::span<const int16_t> samples, int sample_rate_hz = kSampleRate);

// Zero-pad to exactly 480000 samples; the clip is a prefix of the result, so
// two clips of different durations produce outputs of identical length.
std::vector<int16_t> pad_to_window(const AudioClip& clip);

} // namespace esrt
