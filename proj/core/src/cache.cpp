#include "esrt/cache.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "esrt/bf16.hpp"

namespace esrt {

namespace fs = std::filesystem;

void CacheConfig::validate(int64_t max_entry_bytes) const {
    if (capacity_bytes <= max_entry_bytes) {
        throw CacheError("cache capacity " + std::to_string(capacity_bytes) +
                         " must exceed max entry size " + std::to_string(max_entry_bytes));
    }
}

FeatureCache::FeatureCache(CacheConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.capacity_bytes <= 0) {
        throw CacheError("cache capacity must be positive");
    }
    if (!cfg_.dir.empty()) {
        fs::create_directories(cfg_.dir);
        load_from_dir();
    }
}

std::string FeatureCache::entry_path(const CacheKey& key) const {
    return (fs::path(cfg_.dir) / (key_hex(key) + ".esrtf")).string();
}

void FeatureCache::write_entry_file(const Entry& e) const {
    if (cfg_.dir.empty()) return;
    wire::Envelope msg;
    msg.msg_type = wire::MsgType::Features;
    msg.dtype = wire::Dtype::Bf16;
    msg.cache_key = e.key;
    msg.n = 1;
    msg.k = static_cast<uint16_t>(e.k);
    msg.d = static_cast<uint16_t>(e.d);
    msg.payload = e.payload;
    const auto bytes = wire::encode_envelope(msg);
    std::ofstream out(entry_path(e.key), std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

void FeatureCache::remove_entry_file(const CacheKey& key) const {
    if (cfg_.dir.empty()) return;
    std::error_code ec;
    fs::remove(entry_path(key), ec);
}

void FeatureCache::load_from_dir() {
    // oldest files first so newest end up most recent in the LRU
    std::vector<std::pair<fs::file_time_type, fs::path>> files;
    for (const auto& de : fs::directory_iterator(cfg_.dir)) {
        if (de.path().extension() == ".esrtf") {
            files.emplace_back(fs::last_write_time(de.path()), de.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& [mtime, path] : files) {
        std::ifstream in(path, std::ios::binary);
        std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
        try {
            wire::Envelope msg = wire::decode_envelope(bytes);
            if (msg.msg_type != wire::MsgType::Features || msg.dtype != wire::Dtype::Bf16)
                continue;
            put_payload(msg.cache_key, msg.k, msg.d, std::move(msg.payload));
        } catch (const wire::WireError&) {
            // ignore corrupt files; the store is re-populated on demand
        }
    }
}

PutResult FeatureCache::put(const CompressedFeatures& features) {
    return put_payload(features.cache_key, features.k, features.d_q,
                       bf16_bytes(features.z.data));
}

PutResult FeatureCache::put_payload(const CacheKey& key, int64_t k, int64_t d,
                                    std::vector<uint8_t> bf16_payload) {
    if (static_cast<int64_t>(bf16_payload.size()) != k * d * 2) {
        throw CacheError("cache entry payload size " + std::to_string(bf16_payload.size()) +
                         " != k*d*2");
    }
    std::lock_guard<std::mutex> lock(mu_);
    const int64_t bytes = static_cast<int64_t>(bf16_payload.size());
    if (bytes > cfg_.capacity_bytes) {
        throw CacheError("entry of " + std::to_string(bytes) + " bytes exceeds cache capacity " +
                         std::to_string(cfg_.capacity_bytes));
    }
    auto it = index_.find(key);
    if (it != index_.end()) {
        lru_.splice(lru_.begin(), lru_, it->second);  // refresh recency
        return PutResult::AlreadyPresent;
    }
    evict_to_fit(bytes);
    Entry e;
    e.key = key;
    e.k = k;
    e.d = d;
    e.payload = std::move(bf16_payload);
    e.created_at = ++tick_;
    lru_.push_front(std::move(e));
    index_[key] = lru_.begin();
    resident_ += bytes;
    write_entry_file(lru_.front());
    return PutResult::Stored;
}

void FeatureCache::evict_to_fit(int64_t incoming_bytes) {
    while (resident_ + incoming_bytes > cfg_.capacity_bytes && !lru_.empty()) {
        const Entry& victim = lru_.back();
        resident_ -= static_cast<int64_t>(victim.payload.size());
        remove_entry_file(victim.key);
        index_.erase(victim.key);
        lru_.pop_back();
    }
}

std::optional<CompressedFeatures> FeatureCache::get(const CacheKey& key) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    lru_.splice(lru_.begin(), lru_, it->second);
    const Entry& e = lru_.front();
    CompressedFeatures f;
    f.cache_key = e.key;
    f.k = e.k;
    f.d_q = e.d;
    f.z = Tensor({e.k, e.d}, f32_from_bf16_bytes(e.payload));
    return f;
}

bool FeatureCache::contains(const CacheKey& key) const {
    std::lock_guard<std::mutex> lock(mu_);
    return index_.count(key) > 0;
}

int64_t FeatureCache::resident_bytes() const {
    std::lock_guard<std::mutex> lock(mu_);
    return resident_;
}

size_t FeatureCache::entry_count() const {
    std::lock_guard<std::mutex> lock(mu_);
    return index_.size();
}

std::vector<CacheKey> FeatureCache::keys_by_recency() const {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<CacheKey> keys;
    keys.reserve(lru_.size());
    for (const auto& e : lru_) keys.push_back(e.key);
    return keys;
}

void FeatureCache::flush() const {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& e : lru_) write_entry_file(e);
}

CompressedFeatures resolve_or_request(FeatureCache& cache, const CacheKey& key,
                                      FrameChannel& channel) {
    if (auto hit = cache.get(key)) {
        return *hit;
    }
    channel.send_frame(wire::encode_envelope(wire::make_need_features(key)));
    const auto frame = channel.recv_frame();
    if (frame.empty()) {
        throw CacheError("edge closed the connection instead of resending features");
    }
    wire::Envelope msg;
    try {
        msg = wire::decode_envelope(frame);
    } catch (const wire::WireError& e) {
        throw CacheError(std::string("edge resent an undecodable frame: ") + e.what());
    }
    if (msg.msg_type != wire::MsgType::Features || msg.cache_key != key) {
        throw CacheError("edge failed to resend the requested features");
    }
    if (msg.dtype != wire::Dtype::Bf16) {
        // normalize to the at-rest representation
        auto f32 = wire::payload_to_f32(msg);
        msg.payload = bf16_bytes(f32);
        msg.dtype = wire::Dtype::Bf16;
    }
    cache.put_payload(msg.cache_key, msg.k, msg.d, msg.payload);
    auto hit = cache.get(key);
    if (!hit) {
        throw CacheError("resent features did not fit in the cache");
    }
    return *hit;
}

} // namespace esrt
