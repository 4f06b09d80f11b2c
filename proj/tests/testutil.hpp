#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "esrt/audio.hpp"
#include "esrt/rng.hpp"
#include "esrt/tensor.hpp"

namespace testutil {

// unique scratch directory, removed on destruction
struct TmpDir {
    std::filesystem::path path;

    explicit TmpDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("esrt_" + tag + "_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TmpDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::vector<int16_t> sine_samples(double freq_hz, double seconds, double amplitude = 0.5) {
    const auto n = static_cast<size_t>(seconds * esrt::kSampleRate);
    std::vector<int16_t> out(n);
    for (size_t i = 0; i < n; ++i) {
        out[i] = static_cast<int16_t>(
            amplitude * 32000.0 * std::sin(2.0 * M_PI * freq_hz * static_cast<double>(i) /
                                           esrt::kSampleRate));
    }
    return out;
}

inline esrt::AudioClip sine_clip(double freq_hz, double seconds, double amplitude = 0.5) {
    esrt::AudioClip clip;
    clip.samples = sine_samples(freq_hz, seconds, amplitude);
    return clip;
}

inline void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
}

inline float max_abs_diff(const esrt::Tensor& a, const esrt::Tensor& b) {
    float m = 0.0f;
    for (size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    }
    return m;
}

} // namespace testutil
