#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace esrt {

// bfloat16: high 16 bits of an IEEE-754 float32. Conversion rounds the
// dropped mantissa bits to nearest, ties to even; NaN maps to a quiet NaN
// and infinities are preserved.
uint16_t f32_to_bf16(float x);
float bf16_to_f32(uint16_t bits);

std::vector<uint16_t> f32_to_bf16(std::span<const float> xs);
std::vector<float> bf16_to_f32(std::span<const uint16_t> bits);

// little-endian byte packing of bf16 payloads
std::vector<uint8_t> bf16_bytes(std::span<const float> xs);
std::vector<float> f32_from_bf16_bytes(std::span<const uint8_t> bytes);

} // namespace esrt
