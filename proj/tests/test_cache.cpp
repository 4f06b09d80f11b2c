#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <deque>

#include "esrt/bf16.hpp"
#include "esrt/cache.hpp"
#include "testutil.hpp"

using namespace esrt;

namespace {

CacheKey key_of(uint8_t tag) {
    CacheKey key{};
    key[0] = tag;
    key[31] = static_cast<uint8_t>(tag ^ 0xFF);
    return key;
}

// features whose values are exactly representable in bf16
CompressedFeatures bf16_features(uint8_t tag, int64_t k = 4, int64_t d = 8) {
    Rng rng(tag);
    CompressedFeatures f;
    f.k = k;
    f.d_q = d;
    f.cache_key = key_of(tag);
    f.z = Tensor({k, d});
    for (auto& v : f.z.data) v = bf16_to_f32(f32_to_bf16(rng.next_gaussian()));
    return f;
}

// brute-force reference: list of keys, most recent first
struct LruOracle {
    int64_t capacity;
    int64_t entry_bytes;
    std::deque<uint8_t> keys;

    bool get(uint8_t tag) {
        for (auto it = keys.begin(); it != keys.end(); ++it) {
            if (*it == tag) {
                keys.erase(it);
                keys.push_front(tag);
                return true;
            }
        }
        return false;
    }
    void put(uint8_t tag) {
        if (get(tag)) return;
        while (static_cast<int64_t>(keys.size() + 1) * entry_bytes > capacity) keys.pop_back();
        keys.push_front(tag);
    }
};

// canned channel: records sent frames, replays queued replies
struct ScriptedChannel : FrameChannel {
    std::vector<std::vector<uint8_t>> sent;
    std::deque<std::vector<uint8_t>> replies;

    void send_frame(const std::vector<uint8_t>& frame) override { sent.push_back(frame); }
    std::vector<uint8_t> recv_frame() override {
        if (replies.empty()) return {};
        auto f = std::move(replies.front());
        replies.pop_front();
        return f;
    }
};

} // namespace

TEST_CASE("put then get returns bit-exact features") {
    FeatureCache cache(CacheConfig{1 << 20, ""});
    const CompressedFeatures f = bf16_features(1);
    CHECK(cache.put(f) == PutResult::Stored);
    const auto got = cache.get(f.cache_key);
    REQUIRE(got.has_value());
    CHECK(got->z == f.z);
    CHECK(got->k == f.k);
    CHECK(got->d_q == f.d_q);
    CHECK(got->cache_key == f.cache_key);
}

TEST_CASE("put is idempotent per key") {
    FeatureCache cache(CacheConfig{1 << 20, ""});
    const CompressedFeatures f = bf16_features(2);
    CHECK(cache.put(f) == PutResult::Stored);
    CHECK(cache.put(f) == PutResult::AlreadyPresent);
    CHECK(cache.entry_count() == 1);
    CHECK(cache.resident_bytes() == f.k * f.d_q * 2);
}

TEST_CASE("unknown key is a miss, not an error") {
    FeatureCache cache(CacheConfig{1 << 20, ""});
    CHECK(!cache.get(key_of(9)).has_value());
}

TEST_CASE("capacity of two entries evicts the least recently used") {
    const int64_t entry = 4 * 8 * 2;
    FeatureCache cache(CacheConfig{2 * entry, ""});
    cache.put(bf16_features(1));
    cache.put(bf16_features(2));
    cache.put(bf16_features(3));  // evicts 1
    CHECK(!cache.get(key_of(1)).has_value());
    CHECK(cache.get(key_of(2)).has_value());
    CHECK(cache.get(key_of(3)).has_value());
}

TEST_CASE("access pattern A,B,A then insert evicts B") {
    const int64_t entry = 4 * 8 * 2;
    FeatureCache cache(CacheConfig{2 * entry, ""});
    cache.put(bf16_features(1));               // A
    cache.put(bf16_features(2));               // B
    CHECK(cache.get(key_of(1)).has_value());   // A refreshed
    cache.put(bf16_features(3));               // evict-one
    CHECK(!cache.get(key_of(2)).has_value());  // B gone
    CHECK(cache.get(key_of(1)).has_value());
}

TEST_CASE("oversized entries are rejected") {
    FeatureCache cache(CacheConfig{16, ""});
    CHECK_THROWS_AS(cache.put(bf16_features(1)), CacheError);
}

TEST_CASE("random op sequences match the brute-force LRU oracle") {
    const int64_t entry = 4 * 8 * 2;
    Rng rng(77);
    for (int seq = 0; seq < 20; ++seq) {
        const int64_t cap_entries = 2 + static_cast<int64_t>(rng.next_below(6));
        FeatureCache cache(CacheConfig{cap_entries * entry, ""});
        LruOracle oracle{cap_entries * entry, entry, {}};
        for (int op = 0; op < 200; ++op) {
            const uint8_t tag = static_cast<uint8_t>(1 + rng.next_below(12));
            if (rng.next_below(2) == 0) {
                cache.put(bf16_features(tag));
                oracle.put(tag);
            } else {
                const bool hit = cache.get(key_of(tag)).has_value();
                CHECK(hit == oracle.get(tag));
            }
            CHECK(cache.resident_bytes() <= cap_entries * entry);
            // recency order must match exactly
            const auto keys = cache.keys_by_recency();
            REQUIRE(keys.size() == oracle.keys.size());
            for (size_t i = 0; i < keys.size(); ++i) {
                CHECK(keys[i] == key_of(oracle.keys[i]));
            }
        }
    }
}

TEST_CASE("disk persistence round-trips entries") {
    testutil::TmpDir tmp("cache");
    const CompressedFeatures f1 = bf16_features(1);
    const CompressedFeatures f2 = bf16_features(2);
    {
        FeatureCache cache(CacheConfig{1 << 20, tmp.str()});
        cache.put(f1);
        cache.put(f2);
        cache.flush();
    }
    FeatureCache reloaded(CacheConfig{1 << 20, tmp.str()});
    CHECK(reloaded.entry_count() == 2);
    const auto got = reloaded.get(f1.cache_key);
    REQUIRE(got.has_value());
    CHECK(got->z == f1.z);
}

TEST_CASE("eviction removes the on-disk file too") {
    testutil::TmpDir tmp("cache_evict");
    const int64_t entry = 4 * 8 * 2;
    {
        FeatureCache cache(CacheConfig{2 * entry, tmp.str()});
        cache.put(bf16_features(1));
        cache.put(bf16_features(2));
        cache.put(bf16_features(3));
    }
    FeatureCache reloaded(CacheConfig{2 * entry, tmp.str()});
    CHECK(reloaded.entry_count() == 2);
    CHECK(!reloaded.get(key_of(1)).has_value());
}

TEST_CASE("resolve_or_request hit causes no traffic") {
    FeatureCache cache(CacheConfig{1 << 20, ""});
    const CompressedFeatures f = bf16_features(5);
    cache.put(f);
    ScriptedChannel channel;
    const CompressedFeatures got = resolve_or_request(cache, f.cache_key, channel);
    CHECK(got.z == f.z);
    CHECK(channel.sent.empty());
}

TEST_CASE("resolve_or_request miss renegotiates exactly one FEATURES frame") {
    FeatureCache cache(CacheConfig{1 << 20, ""});
    const CompressedFeatures f = bf16_features(6);

    ScriptedChannel channel;
    channel.replies.push_back(wire::encode_envelope(
        wire::make_features(f.cache_key, 1, static_cast<uint16_t>(f.k),
                            static_cast<uint16_t>(f.d_q), f.z.data, {})));

    const CompressedFeatures got = resolve_or_request(cache, f.cache_key, channel);
    CHECK(got.z == f.z);
    REQUIRE(channel.sent.size() == 1);
    const wire::Envelope sent = wire::decode_envelope(channel.sent[0]);
    CHECK(sent.msg_type == wire::MsgType::NeedFeatures);
    CHECK(sent.cache_key == f.cache_key);

    // second resolve hits without traffic
    ScriptedChannel quiet;
    resolve_or_request(cache, f.cache_key, quiet);
    CHECK(quiet.sent.empty());
}

TEST_CASE("resolve_or_request surfaces a failed resend") {
    FeatureCache cache(CacheConfig{1 << 20, ""});
    ScriptedChannel channel;  // no reply queued
    CHECK_THROWS_AS(resolve_or_request(cache, key_of(7), channel), CacheError);

    ScriptedChannel wrong;
    wrong.replies.push_back(wire::encode_envelope(wire::make_response("nope")));
    CHECK_THROWS_AS(resolve_or_request(cache, key_of(7), wrong), CacheError);
}

TEST_CASE("cache config validation") {
    CHECK_THROWS_AS(FeatureCache(CacheConfig{0, ""}), CacheError);
    CacheConfig cfg{100, ""};
    CHECK_THROWS_AS(cfg.validate(100), CacheError);
    cfg.validate(99);
}
