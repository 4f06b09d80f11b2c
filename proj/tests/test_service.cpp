#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thread>

#include "esrt/client.hpp"
#include "esrt/config.hpp"
#include "esrt/service.hpp"
#include "testutil.hpp"

using namespace esrt;

namespace {

GlobalConfig toy_config() {
    GlobalConfig cfg;
    cfg.seed = 7;
    cfg.encoder.d_w = 32;
    cfg.encoder.layers = 1;
    cfg.encoder.heads = 2;
    cfg.encoder.downsample = 20;
    cfg.qformer.k_queries = 8;
    cfg.qformer.d_q = 32;
    cfg.qformer.layers = 1;
    cfg.qformer.heads = 2;
    cfg.cloud.d_llm = 32;
    cfg.cloud.decoder_layers = 1;
    cfg.cloud.heads = 2;
    cfg.decode.max_new_tokens = 8;
    return cfg;
}

struct NullChannel : FrameChannel {
    void send_frame(const std::vector<uint8_t>&) override {}
    std::vector<uint8_t> recv_frame() override { return {}; }
};

wire::Envelope features_frame(const EdgeModel& edge, const AudioClip& clip,
                              const std::vector<uint32_t>& prompt) {
    const CompressedFeatures f = edge.encode(clip);
    return wire::make_features(f.cache_key, 1, static_cast<uint16_t>(f.k),
                               static_cast<uint16_t>(f.d_q), f.z.data, prompt);
}

std::vector<uint32_t> srt_prompt(const std::string& src, const std::string& tgt) {
    const Vocabulary& v = Vocabulary::standard();
    return {v.language_id(src), v.language_id(tgt)};
}

} // namespace

TEST_CASE("FEATURES request yields a non-empty RESPONSE") {
    const GlobalConfig cfg = toy_config();
    CloudService service(build_cloud_model(cfg), cfg.cache, cfg.decode);
    const EdgeModel edge = build_edge_model(cfg);

    NullChannel ch;
    const wire::Envelope req =
        features_frame(edge, testutil::sine_clip(440.0, 1.0), srt_prompt("eng", "deu"));
    const wire::Envelope resp = service.handle_request(req, ch);
    CHECK(resp.msg_type == wire::MsgType::Response);
    CHECK(!resp.payload.empty());
}

TEST_CASE("CACHE_REF after FEATURES returns the identical response with zero feature bytes") {
    const GlobalConfig cfg = toy_config();
    CloudService service(build_cloud_model(cfg), cfg.cache, cfg.decode);
    const EdgeModel edge = build_edge_model(cfg);
    const AudioClip clip = testutil::sine_clip(500.0, 2.0);
    const auto prompt = srt_prompt("eng", "fra");

    NullChannel ch;
    const wire::Envelope req = features_frame(edge, clip, prompt);
    const wire::Envelope first = service.handle_request(req, ch);
    REQUIRE(first.msg_type == wire::MsgType::Response);

    const wire::Envelope ref = wire::make_cache_ref(req.cache_key, req.k, req.d, prompt);
    const wire::Envelope second = service.handle_request(ref, ch);
    CHECK(second.msg_type == wire::MsgType::Response);
    CHECK(second.payload == first.payload);
    // a cache reference frame carries no feature payload at all
    CHECK(wire::encode_envelope(ref).size() == wire::frame_size(prompt.size(), 0));
}

TEST_CASE("cold CACHE_REF renegotiates via NEED_FEATURES then succeeds") {
    const GlobalConfig cfg = toy_config();
    CloudService service(build_cloud_model(cfg), cfg.cache, cfg.decode);
    const EdgeModel edge = build_edge_model(cfg);
    const AudioClip clip = testutil::sine_clip(650.0, 1.0);
    const CompressedFeatures f = edge.encode(clip);
    const auto prompt = srt_prompt("eng", "spa");

    // scripted edge: replies to NEED_FEATURES with the features frame
    struct ResendChannel : FrameChannel {
        std::vector<uint8_t> resend;
        std::vector<wire::Envelope> seen;
        void send_frame(const std::vector<uint8_t>& frame) override {
            seen.push_back(wire::decode_envelope(frame));
        }
        std::vector<uint8_t> recv_frame() override { return resend; }
    } ch;
    ch.resend = wire::encode_envelope(wire::make_features(
        f.cache_key, 1, static_cast<uint16_t>(f.k), static_cast<uint16_t>(f.d_q), f.z.data, {}));

    const wire::Envelope ref =
        wire::make_cache_ref(f.cache_key, static_cast<uint16_t>(f.k),
                             static_cast<uint16_t>(f.d_q), prompt);
    const wire::Envelope resp = service.handle_request(ref, ch);
    CHECK(resp.msg_type == wire::MsgType::Response);
    REQUIRE(ch.seen.size() == 1);
    CHECK(ch.seen[0].msg_type == wire::MsgType::NeedFeatures);
    CHECK(ch.seen[0].cache_key == f.cache_key);

    // now cached: a second ref is served without any negotiation
    struct FailChannel : FrameChannel {
        void send_frame(const std::vector<uint8_t>&) override {
            FAIL("no traffic expected on a warm cache");
        }
        std::vector<uint8_t> recv_frame() override { return {}; }
    } quiet;
    const wire::Envelope again = service.handle_request(ref, quiet);
    CHECK(again.payload == resp.payload);
}

TEST_CASE("malformed frames produce ERROR responses and the service keeps going") {
    const GlobalConfig cfg = toy_config();
    CloudService service(build_cloud_model(cfg), cfg.cache, cfg.decode);
    const EdgeModel edge = build_edge_model(cfg);

    NullChannel ch;
    std::vector<uint8_t> garbage{'n', 'o', 'p', 'e', 1, 2, 3};
    const auto resp_bytes = service.handle_frame(garbage, ch);
    const wire::Envelope resp = wire::decode_envelope(resp_bytes);
    CHECK(resp.msg_type == wire::MsgType::Error);
    CHECK(!resp.payload.empty());

    // still serves valid requests afterwards
    const wire::Envelope ok = service.handle_request(
        features_frame(edge, testutil::sine_clip(440.0, 0.5), srt_prompt("eng", "ita")), ch);
    CHECK(ok.msg_type == wire::MsgType::Response);
}

TEST_CASE("feature dim mismatches are reported as ERROR frames") {
    const GlobalConfig cfg = toy_config();
    CloudService service(build_cloud_model(cfg), cfg.cache, cfg.decode);

    NullChannel ch;
    std::vector<float> z(4 * 16, 0.5f);
    const wire::Envelope bad = wire::make_features(CacheKey{}, 1, 4, 16, z, {});
    const wire::Envelope resp = service.handle_request(bad, ch);
    CHECK(resp.msg_type == wire::MsgType::Error);
}

TEST_CASE("responses are deterministic across identical service instances") {
    const GlobalConfig cfg = toy_config();
    const EdgeModel edge = build_edge_model(cfg);
    const wire::Envelope req =
        features_frame(edge, testutil::sine_clip(720.0, 1.3), srt_prompt("eng", "jpn"));

    NullChannel ch;
    CloudService a(build_cloud_model(cfg), cfg.cache, cfg.decode);
    CloudService b(build_cloud_model(cfg), cfg.cache, cfg.decode);
    const auto ra = wire::encode_envelope(a.handle_request(req, ch));
    const auto rb = wire::encode_envelope(b.handle_request(req, ch));
    CHECK(ra == rb);
}

TEST_CASE("one-to-many translation uploads exactly one feature payload") {
    const GlobalConfig cfg = toy_config();
    CloudService service(build_cloud_model(cfg), cfg.cache, cfg.decode);
    service.start("127.0.0.1", 0);
    const uint16_t port = service.bound_port();

    const EdgeModel edge = build_edge_model(cfg);
    const AudioClip clip = testutil::sine_clip(333.0, 1.7);

    for (const size_t n : {1u, 2u, 5u}) {
        std::vector<std::string> tgts;
        const auto& codes = Vocabulary::standard().language_codes();
        for (size_t i = 0; i < n; ++i) tgts.push_back(codes[i + 1]);

        EdgeClient client(edge, "127.0.0.1", port);
        const auto results = client.translate(clip, "eng", tgts);
        REQUIRE(results.size() == n);
        for (const auto& r : results) {
            CHECK(!r.is_error);
            CHECK(!r.response_text.empty());
        }
        const auto& tc = client.traffic();
        CHECK(tc.sent_of(wire::MsgType::Features).frames == 1);
        CHECK(tc.sent_of(wire::MsgType::Features).payload_bytes ==
              cfg.qformer.k_queries * cfg.qformer.d_q * 2);
        CHECK(tc.sent_of(wire::MsgType::CacheRef).frames == static_cast<int64_t>(n) - 1);
        CHECK(tc.received_of(wire::MsgType::Response).frames == static_cast<int64_t>(n));
    }
    service.stop();
}

TEST_CASE("translate validates language codes before touching the network") {
    const GlobalConfig cfg = toy_config();
    const EdgeModel edge = build_edge_model(cfg);
    EdgeClient client(edge, "127.0.0.1", 1);  // nothing listens there
    CHECK_THROWS_AS(client.translate(testutil::sine_clip(440.0, 0.5), "eng", {"xxx"}),
                    VocabError);
}

TEST_CASE("restart with a cache directory serves previous keys without renegotiation") {
    testutil::TmpDir tmp("service_cache");
    GlobalConfig cfg = toy_config();
    cfg.cache.dir = tmp.str();

    const EdgeModel edge = build_edge_model(cfg);
    const AudioClip clip = testutil::sine_clip(888.0, 0.8);
    const auto prompt = srt_prompt("eng", "kor");
    const wire::Envelope req = features_frame(edge, clip, prompt);

    std::vector<uint8_t> first_payload;
    {
        CloudService service(build_cloud_model(cfg), cfg.cache, cfg.decode);
        NullChannel ch;
        const wire::Envelope resp = service.handle_request(req, ch);
        REQUIRE(resp.msg_type == wire::MsgType::Response);
        first_payload = resp.payload;
        service.cache().flush();
    }

    CloudService restarted(build_cloud_model(cfg), cfg.cache, cfg.decode);
    CHECK(restarted.cache().entry_count() == 1);

    struct FailChannel : FrameChannel {
        void send_frame(const std::vector<uint8_t>&) override {
            FAIL("warm restart must not renegotiate");
        }
        std::vector<uint8_t> recv_frame() override { return {}; }
    } quiet;
    const wire::Envelope ref = wire::make_cache_ref(req.cache_key, req.k, req.d, prompt);
    const wire::Envelope resp = restarted.handle_request(ref, quiet);
    CHECK(resp.msg_type == wire::MsgType::Response);
    CHECK(resp.payload == first_payload);
}

TEST_CASE("concurrent requests match serial execution of the same set") {
    const GlobalConfig cfg = toy_config();
    const EdgeModel edge = build_edge_model(cfg);

    std::vector<AudioClip> clips;
    std::vector<std::string> tgts{"deu", "fra", "spa", "ita"};
    for (int i = 0; i < 4; ++i) {
        clips.push_back(testutil::sine_clip(300.0 + 140.0 * i, 0.5 + 0.3 * i));
    }

    // serial reference
    std::vector<std::string> serial(4);
    {
        CloudService service(build_cloud_model(cfg), cfg.cache, cfg.decode);
        service.start("127.0.0.1", 0);
        for (int i = 0; i < 4; ++i) {
            EdgeClient client(edge, "127.0.0.1", service.bound_port());
            serial[static_cast<size_t>(i)] =
                client.translate(clips[static_cast<size_t>(i)], "eng",
                                 {tgts[static_cast<size_t>(i)]})[0]
                    .response_text;
        }
        service.stop();
    }

    // concurrent run against a fresh instance
    CloudService service(build_cloud_model(cfg), cfg.cache, cfg.decode);
    service.start("127.0.0.1", 0);
    std::vector<std::string> concurrent(4);
    {
        std::vector<std::thread> threads;
        for (int i = 0; i < 4; ++i) {
            threads.emplace_back([&, i] {
                EdgeClient client(edge, "127.0.0.1", service.bound_port());
                concurrent[static_cast<size_t>(i)] =
                    client.translate(clips[static_cast<size_t>(i)], "eng",
                                     {tgts[static_cast<size_t>(i)]})[0]
                        .response_text;
            });
        }
        for (auto& t : threads) t.join();
    }
    service.stop();
    CHECK(concurrent == serial);
}
