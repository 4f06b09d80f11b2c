#include "esrt/hash.hpp"

#include <openssl/evp.h>

#include <stdexcept>

namespace esrt {

CacheKey build_cache_key(std::span<const uint8_t> bytes) {
    if (bytes.empty()) {
        throw std::invalid_argument("build_cache_key: empty input");
    }
    CacheKey key{};
    unsigned int out_len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), key.data(), &out_len, EVP_sha256(), nullptr) != 1 ||
        out_len != key.size()) {
        throw std::runtime_error("SHA-256 digest failed");
    }
    return key;
}

std::string key_hex(const CacheKey& key) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (uint8_t b : key) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xF]);
    }
    return s;
}

CacheKey key_from_hex(const std::string& hex) {
    if (hex.size() != 64) {
        throw std::invalid_argument("cache key hex must be 64 chars, got " +
                                    std::to_string(hex.size()));
    }
    auto nibble = [](char c) -> uint8_t {
        if (c >= '0' && c <= '9') return static_cast<uint8_t>(c - '0');
        if (c >= 'a' && c <= 'f') return static_cast<uint8_t>(c - 'a' + 10);
        if (c >= 'A' && c <= 'F') return static_cast<uint8_t>(c - 'A' + 10);
        throw std::invalid_argument("bad hex digit in cache key");
    };
    CacheKey key{};
    for (size_t i = 0; i < 32; ++i) {
        key[i] = static_cast<uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
    }
    return key;
}

} // namespace esrt
