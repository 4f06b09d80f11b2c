#include "esrt/bf16.hpp"

#include <bit>
#include <stdexcept>

namespace esrt {

uint16_t f32_to_bf16(float x) {
    const uint32_t bits = std::bit_cast<uint32_t>(x);
    const uint32_t exp = bits & 0x7F800000u;
    const uint32_t mant = bits & 0x007FFFFFu;
    if (exp == 0x7F800000u && mant != 0) {
        // quiet NaN, keep sign and payload top bits
        return static_cast<uint16_t>(((bits >> 16) & 0xFFFFu) | 0x0040u);
    }
    // round to nearest even on the dropped 16 bits; Inf has zero mantissa so
    // the bias cannot carry into the exponent
    const uint32_t rounding_bias = 0x7FFFu + ((bits >> 16) & 1u);
    return static_cast<uint16_t>((bits + rounding_bias) >> 16);
}

float bf16_to_f32(uint16_t bits) {
    return std::bit_cast<float>(static_cast<uint32_t>(bits) << 16);
}

std::vector<uint16_t> f32_to_bf16(std::span<const float> xs) {
    std::vector<uint16_t> out(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) out[i] = f32_to_bf16(xs[i]);
    return out;
}

std::vector<float> bf16_to_f32(std::span<const uint16_t> bits) {
    std::vector<float> out(bits.size());
    for (size_t i = 0; i < bits.size(); ++i) out[i] = bf16_to_f32(bits[i]);
    return out;
}

std::vector<uint8_t> bf16_bytes(std::span<const float> xs) {
    std::vector<uint8_t> out(xs.size() * 2);
    for (size_t i = 0; i < xs.size(); ++i) {
        const uint16_t b = f32_to_bf16(xs[i]);
        out[2 * i] = static_cast<uint8_t>(b & 0xFF);
        out[2 * i + 1] = static_cast<uint8_t>(b >> 8);
    }
    return out;
}

std::vector<float> f32_from_bf16_bytes(std::span<const uint8_t> bytes) {
    if (bytes.size() % 2 != 0) {
        throw std::invalid_argument("bf16 byte payload has odd length");
    }
    std::vector<float> out(bytes.size() / 2);
    for (size_t i = 0; i < out.size(); ++i) {
        const uint16_t b = static_cast<uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
        out[i] = bf16_to_f32(b);
    }
    return out;
}

} // namespace esrt
