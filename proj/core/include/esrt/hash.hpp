#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace esrt {

using CacheKey = std::array<uint8_t, 32>;

// SHA-256 content hash of raw (pre-padding) audio bytes; identical content
// yields identical keys on every device.
CacheKey build_cache_key(std::span<const uint8_t> bytes);

std::string key_hex(const CacheKey& key);
CacheKey key_from_hex(const std::string& hex);

} // namespace esrt
