#include "esrt/audio.hpp"

#include <cstring>

namespace esrt {

namespace {

uint32_t get_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t get_u16(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xFF));
    out.push_back(static_cast<uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<uint8_t>((v >> 24) & 0xFF));
}

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xFF));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

} // namespace

std::vector<uint8_t> AudioClip::pcm_bytes() const {
    std::vector<uint8_t> out(samples.size() * 2);
    for (size_t i = 0; i < samples.size(); ++i) {
        const uint16_t u = static_cast<uint16_t>(samples[i]);
        out[2 * i] = static_cast<uint8_t>(u & 0xFF);
        out[2 * i + 1] = static_cast<uint8_t>(u >> 8);
    }
    return out;
}

AudioClip decode_wav(std::span<const uint8_t> bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw WavFormatError("not a RIFF/WAVE container");
    }

    bool have_fmt = false;
    uint16_t audio_format = 0, channels = 0, bits = 0;
    uint32_t sample_rate = 0;
    const uint8_t* data_ptr = nullptr;
    size_t data_len = 0;

    size_t off = 12;
    while (off + 8 <= bytes.size()) {
        const uint8_t* chunk = bytes.data() + off;
        const uint32_t chunk_len = get_u32(chunk + 4);
        const size_t body = off + 8;
        if (body + chunk_len > bytes.size()) {
            throw WavFormatError("chunk extends past end of file");
        }
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (chunk_len < 16) throw WavFormatError("fmt chunk too short");
            audio_format = get_u16(bytes.data() + body);
            channels = get_u16(bytes.data() + body + 2);
            sample_rate = get_u32(bytes.data() + body + 4);
            bits = get_u16(bytes.data() + body + 14);
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data_ptr = bytes.data() + body;
            data_len = chunk_len;
        }
        off = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
    }

    if (!have_fmt || data_ptr == nullptr) {
        throw WavFormatError("missing fmt or data chunk");
    }
    if (audio_format != 1 || bits != 16) {
        throw UnsupportedFormatError("only PCM16 supported (format=" +
                                     std::to_string(audio_format) + ", bits=" +
                                     std::to_string(bits) + ")");
    }
    if (channels != 1) {
        throw UnsupportedFormatError("only mono supported (channels=" + std::to_string(channels) +
                                     ")");
    }
    if (sample_rate != kSampleRate) {
        throw UnsupportedFormatError("only 16 kHz supported (rate=" + std::to_string(sample_rate) +
                                     ")");
    }
    if (data_len % 2 != 0) {
        throw WavFormatError("odd PCM16 data length");
    }

    AudioClip clip;
    clip.sample_rate_hz = kSampleRate;
    clip.samples.resize(data_len / 2);
    for (size_t i = 0; i < clip.samples.size(); ++i) {
        clip.samples[i] = static_cast<int16_t>(get_u16(data_ptr + 2 * i));
    }
    if (clip.samples.empty()) {
        throw WavFormatError("empty data chunk");
    }
    if (clip.samples.size() > kWindowSamples) {
        throw DurationError("clip is " + std::to_string(clip.duration_s()) +
                            " s, longer than the 30 s window");
    }
    return clip;
}

std::vector<uint8_t> encode_wav(std::span<const int16_t> samples, int sample_rate_hz) {
    const uint32_t data_len = static_cast<uint32_t>(samples.size() * 2);
    std::vector<uint8_t> out;
    out.reserve(44 + data_len);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put_u32(out, 36 + data_len);
    out.insert(out.end(), {'W', 'A', 'V', 'E'});
    out.insert(out.end(), {'f', 'm', 't', ' '});
    put_u32(out, 16);
    put_u16(out, 1);  // PCM
    put_u16(out, 1);  // mono
    put_u32(out, static_cast<uint32_t>(sample_rate_hz));
    put_u32(out, static_cast<uint32_t>(sample_rate_hz * 2));  // byte rate
    put_u16(out, 2);                                          // block align
    put_u16(out, 16);                                         // bits
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put_u32(out, data_len);
    for (int16_t s : samples) {
        const uint16_t u = static_cast<uint16_t>(s);
        out.push_back(static_cast<uint8_t>(u & 0xFF));
        out.push_back(static_cast<uint8_t>(u >> 8));
    }
    return out;
}

std::vector<int16_t> pad_to_window(const AudioClip& clip) {
    std::vector<int16_t> padded(kWindowSamples, 0);
    std::copy(clip.samples.begin(), clip.samples.end(), padded.begin());
    return padded;
}

} // namespace esrt
