#include "esrt/mel.hpp"

#include <fftw3.h>

#include <cmath>

namespace esrt {

double hz_to_mel(double hz) {
    return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel) {
    return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

Tensor mel_filterbank() {
    Tensor fb({kNumMels, kNumFftBins});
    const double mel_min = hz_to_mel(kMelFminHz);
    const double mel_max = hz_to_mel(kMelFmaxHz);

    // 130 edge points -> 128 triangles
    std::vector<double> edges_hz(kNumMels + 2);
    for (int i = 0; i < kNumMels + 2; ++i) {
        const double m = mel_min + (mel_max - mel_min) * i / (kNumMels + 1);
        edges_hz[static_cast<size_t>(i)] = mel_to_hz(m);
    }

    const double bin_hz = static_cast<double>(kSampleRate) / kNfft;  // 40 Hz
    for (int m = 0; m < kNumMels; ++m) {
        const double f_lo = edges_hz[static_cast<size_t>(m)];
        const double f_c = edges_hz[static_cast<size_t>(m + 1)];
        const double f_hi = edges_hz[static_cast<size_t>(m + 2)];
        for (int k = 0; k < kNumFftBins; ++k) {
            const double f = k * bin_hz;
            double w = 0.0;
            if (f > f_lo && f < f_c) {
                w = (f - f_lo) / (f_c - f_lo);
            } else if (f >= f_c && f < f_hi) {
                w = (f_hi - f) / (f_hi - f_c);
            }
            fb.at(m, k) = static_cast<float>(w);
        }
    }
    return fb;
}

namespace {

struct FftPlan {
    fftwf_plan plan;
    FftPlan() {
        float* in = fftwf_alloc_real(kNfft);
        fftwf_complex* out = fftwf_alloc_complex(kNumFftBins);
        plan = fftwf_plan_dft_r2c_1d(kNfft, in, out, FFTW_ESTIMATE);
        fftwf_free(in);
        fftwf_free(out);
    }
};

// plan creation happens once (magic static); execution on distinct buffers
// is thread safe
fftwf_plan shared_plan() {
    static FftPlan p;
    return p.plan;
}

const Tensor& shared_filterbank() {
    static const Tensor fb = mel_filterbank();
    return fb;
}

} // namespace

Tensor compute_mel(std::span<const int16_t> padded_samples) {
    if (padded_samples.size() != static_cast<size_t>(kWindowSamples)) {
        throw AudioError("compute_mel expects exactly " + std::to_string(kWindowSamples) +
                         " samples, got " + std::to_string(padded_samples.size()));
    }

    std::vector<float> window(kNfft);
    for (int i = 0; i < kNfft; ++i) {
        window[static_cast<size_t>(i)] =
            0.5f - 0.5f * static_cast<float>(std::cos(2.0 * M_PI * i / kNfft));
    }

    fftwf_plan plan = shared_plan();
    float* frame = fftwf_alloc_real(kNfft);
    fftwf_complex* spectrum = fftwf_alloc_complex(kNumFftBins);

    const Tensor& fb = shared_filterbank();
    Tensor mel({kNumMels, kNumFrames});
    std::vector<float> power(kNumFftBins);

    // frame t is centered at sample t*hop; out-of-range samples are zero
    for (int t = 0; t < kNumFrames; ++t) {
        const int64_t start = static_cast<int64_t>(t) * kHop - kNfft / 2;
        for (int i = 0; i < kNfft; ++i) {
            const int64_t idx = start + i;
            float s = 0.0f;
            if (idx >= 0 && idx < kWindowSamples) {
                s = static_cast<float>(padded_samples[static_cast<size_t>(idx)]) / 32768.0f;
            }
            frame[i] = s * window[static_cast<size_t>(i)];
        }
        fftwf_execute_dft_r2c(plan, frame, spectrum);
        for (int k = 0; k < kNumFftBins; ++k) {
            power[static_cast<size_t>(k)] =
                spectrum[k][0] * spectrum[k][0] + spectrum[k][1] * spectrum[k][1];
        }
        for (int m = 0; m < kNumMels; ++m) {
            const float* w = fb.data.data() + static_cast<size_t>(m) * kNumFftBins;
            float acc = 0.0f;
            for (int k = 0; k < kNumFftBins; ++k) acc += w[k] * power[static_cast<size_t>(k)];
            mel.at(m, t) = std::log10(std::max(acc, kLogFloor));
        }
    }

    fftwf_free(frame);
    fftwf_free(spectrum);
    return mel;
}

MelSpectrogram mel_from_clip(const AudioClip& clip) {
    MelSpectrogram out;
    out.source_key = build_cache_key(clip.pcm_bytes());
    out.mel = compute_mel(pad_to_window(clip));
    return out;
}

} // namespace esrt
