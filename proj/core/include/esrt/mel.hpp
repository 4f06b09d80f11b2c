#pragma once

#include <span>

#include "esrt/audio.hpp"
#include "esrt/hash.hpp"
#include "esrt/tensor.hpp"

namespace esrt {

// STFT / filterbank parameters. Not tunable: the 128 x 3000 output shape is
// load-bearing for everything downstream.
inline constexpr int kNumMels = 128;
inline constexpr int kNumFrames = 3000;
inline constexpr int kNfft = 400;
inline constexpr int kHop = 160;
inline constexpr int kNumFftBins = kNfft / 2 + 1;  // 201
inline constexpr double kMelFminHz = 0.0;
inline constexpr double kMelFmaxHz = 8000.0;
inline constexpr float kLogFloor = 1e-10f;  // power floor before log10

struct MelSpectrogram {
    Tensor mel;           // [128 x 3000] log10 Mel energies
    CacheKey source_key;  // content hash of the pre-padding audio
};

// HTK Mel scale
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// triangular filterbank [128 x 201] over 0..8000 Hz on the HTK Mel grid
Tensor mel_filterbank();

// log-Mel spectrogram of exactly 480000 padded samples. STFT uses a periodic
// Hann window of 400 samples, hop 160, zero-padded centered frames; 3001
// frames are produced and the last one dropped, giving 128 x 3000.
Tensor compute_mel(std::span<const int16_t> padded_samples);

// full edge frontend: pad, transform, and key the clip
MelSpectrogram mel_from_clip(const AudioClip& clip);

} // namespace esrt
