#pragma once

#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "esrt/channel.hpp"
#include "esrt/encoder.hpp"
#include "esrt/hash.hpp"

namespace esrt {

struct CacheError : Error {
    using Error::Error;
};

struct CacheConfig {
    int64_t capacity_bytes = 64 * 1024 * 1024;
    std::string dir;  // empty = in-memory only

    void validate(int64_t max_entry_bytes) const;
};

enum class PutResult {
    Stored,
    AlreadyPresent,
};

// Content-addressed LRU store of compressed features, BF16 at rest. When a
// directory is configured every entry is mirrored to disk as
// <hex-key>.esrtf containing the FEATURES frame bytes, and reloaded on
// startup; eviction removes the file as well so disk matches memory.
//
// Thread safety: all operations take the internal mutex; put/evict are atomic
// with respect to readers.
class FeatureCache {
public:
    explicit FeatureCache(CacheConfig cfg);

    PutResult put(const CompressedFeatures& features);
    PutResult put_payload(const CacheKey& key, int64_t k, int64_t d,
                          std::vector<uint8_t> bf16_payload);

    // hit refreshes recency; miss is a value, not an error
    std::optional<CompressedFeatures> get(const CacheKey& key);
    bool contains(const CacheKey& key) const;

    int64_t resident_bytes() const;
    size_t entry_count() const;
    int64_t capacity_bytes() const { return cfg_.capacity_bytes; }

    // most-recently-used first
    std::vector<CacheKey> keys_by_recency() const;

    // persistence is write-through; flush only fsync-less re-verifies files
    void flush() const;

private:
    struct Entry {
        CacheKey key;
        int64_t k = 0;
        int64_t d = 0;
        std::vector<uint8_t> payload;  // BF16 bytes, size = k*d*2
        uint64_t created_at = 0;
    };

    void evict_to_fit(int64_t incoming_bytes);
    void write_entry_file(const Entry& e) const;
    void remove_entry_file(const CacheKey& key) const;
    void load_from_dir();
    std::string entry_path(const CacheKey& key) const;

    mutable std::mutex mu_;
    CacheConfig cfg_;
    std::list<Entry> lru_;  // front = most recently used
    std::map<CacheKey, std::list<Entry>::iterator> index_;
    int64_t resident_ = 0;
    uint64_t tick_ = 0;
};

// Cloud-side resolution: on hit no wire traffic; on miss sends NEED_FEATURES
// over the channel and consumes the resent FEATURES frame. Failure to resend
// is surfaced as CacheError.
CompressedFeatures resolve_or_request(FeatureCache& cache, const CacheKey& key,
                                      FrameChannel& channel);

} // namespace esrt
