#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "esrt/encoder.hpp"
#include "esrt/model_io.hpp"
#include "esrt/wire.hpp"
#include "testutil.hpp"

using namespace esrt;

namespace {

EncoderConfig toy_encoder() {
    EncoderConfig cfg;
    cfg.d_w = 32;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.downsample = 20;  // short L' keeps unit tests quick
    return cfg;
}

QFormerConfig toy_qformer() {
    QFormerConfig cfg;
    cfg.k_queries = 8;
    cfg.d_q = 32;
    cfg.layers = 2;
    cfg.heads = 2;
    return cfg;
}

} // namespace

TEST_CASE("config validation") {
    EncoderConfig e = toy_encoder();
    e.d_w = 33;  // not divisible by heads
    CHECK_THROWS_AS(e.validate(), ConfigError);
    e = toy_encoder();
    e.downsample = 7;  // does not divide 3000
    CHECK_THROWS_AS(e.validate(), ConfigError);
    e = toy_encoder();
    e.downsample = 2;
    CHECK(e.l_prime() == 1500);

    QFormerConfig q = toy_qformer();
    CHECK_THROWS_AS(q.validate(8), ConfigError);  // K >= L'
    CHECK_THROWS_AS(q.validate(4), ConfigError);
    q.validate(150);
    q.d_q = 33;
    CHECK_THROWS_AS(q.validate(150), ConfigError);
    q = toy_qformer();
    q.k_queries = 0;
    CHECK_THROWS_AS(q.validate(150), ConfigError);
}

TEST_CASE("encoder output length follows the downsample factor") {
    Rng rng(31);
    EncoderConfig cfg = toy_encoder();
    EncoderWeights w = EncoderWeights::init(cfg, rng);
    const Tensor mel = Tensor::randn({128, 3000}, rng);
    const Tensor h = run_encoder(mel, cfg, w);
    CHECK(h.shape == std::vector<int64_t>{150, 32});
    CHECK(h.all_finite());
}

TEST_CASE("encoder is deterministic") {
    Rng rng(32);
    EncoderConfig cfg = toy_encoder();
    EncoderWeights w = EncoderWeights::init(cfg, rng);
    const Tensor mel = Tensor::randn({128, 3000}, rng);
    const Tensor a = run_encoder(mel, cfg, w);
    const Tensor b = run_encoder(mel, cfg, w);
    CHECK(a.data == b.data);
}

TEST_CASE("encoder weight/config mismatch is rejected") {
    Rng rng(33);
    EncoderConfig cfg = toy_encoder();
    EncoderWeights w = EncoderWeights::init(cfg, rng);
    EncoderConfig other = cfg;
    other.d_w = 64;
    const Tensor mel = Tensor::randn({128, 3000}, rng);
    CHECK_THROWS_AS(run_encoder(mel, other, w), ConfigError);
    CHECK_THROWS_AS(run_encoder(Tensor::zeros({128, 100}), cfg, w), ShapeError);
}

TEST_CASE("paper-dim shape pipeline and element ratios") {
    // conv-only encoder stem at the published geometry: 1280-dim, stride 2
    Rng rng(34);
    EncoderConfig ecfg;
    ecfg.d_w = 1280;
    ecfg.layers = 0;
    ecfg.heads = 8;
    ecfg.downsample = 2;
    EncoderWeights ew = EncoderWeights::init(ecfg, rng);
    const Tensor mel = Tensor::randn({128, 3000}, rng);
    const Tensor h = run_encoder(mel, ecfg, ew);
    CHECK(h.shape == std::vector<int64_t>{1500, 1280});

    // element-count ratio vs the Mel input: 5.0x
    const double mel_elems = 128.0 * 3000.0;
    CHECK(static_cast<double>(h.numel()) / mel_elems == doctest::Approx(5.0));

    QFormerConfig qcfg;
    qcfg.k_queries = 40;
    qcfg.d_q = 768;
    qcfg.layers = 1;
    qcfg.heads = 8;
    QFormerWeights qw = QFormerWeights::init(qcfg, ecfg.d_w, rng);
    const CompressedFeatures z = compress_qformer(h, qcfg, qw, CacheKey{});
    CHECK(z.z.shape == std::vector<int64_t>{40, 768});
    CHECK(static_cast<double>(z.z.numel()) / mel_elems == doctest::Approx(0.08));
    CHECK(mel_elems / static_cast<double>(z.z.numel()) == doctest::Approx(12.5));
    CHECK(384000.0 / 30720.0 == doctest::Approx(12.5));
}

TEST_CASE("qformer output shape is duration independent") {
    const EdgeModel model = EdgeModel::init(toy_encoder(), toy_qformer(), 7);
    const CompressedFeatures a = model.encode(testutil::sine_clip(500.0, 2.0));
    const CompressedFeatures b = model.encode(testutil::sine_clip(500.0, 28.0));
    CHECK(a.z.shape == b.z.shape);
    CHECK(a.z.shape == std::vector<int64_t>{8, 32});
    CHECK(a.cache_key != b.cache_key);
}

TEST_CASE("K=1 single-layer uniform-attention qformer matches the nn-core oracle") {
    Rng rng(35);
    QFormerConfig cfg;
    cfg.k_queries = 1;
    cfg.d_q = 8;
    cfg.layers = 1;
    cfg.heads = 1;
    const int64_t d_w = 6;
    QFormerWeights w = QFormerWeights::init(cfg, d_w, rng);

    auto& blk = w.blocks[0];
    // zero query projection -> constant scores -> uniform attention
    blk.wq.weight = Tensor::zeros({cfg.d_q, cfg.d_q});
    blk.wq.bias = Tensor::zeros({cfg.d_q});
    // identity output projection, FFN silenced
    blk.wo.weight = Tensor::zeros({cfg.d_q, cfg.d_q});
    for (int64_t i = 0; i < cfg.d_q; ++i) blk.wo.weight.at(i, i) = 1.0f;
    blk.wo.bias = Tensor::zeros({cfg.d_q});
    blk.ffn2.weight = Tensor::zeros({4 * cfg.d_q, cfg.d_q});
    blk.ffn2.bias = Tensor::zeros({cfg.d_q});

    const Tensor h = Tensor::randn({5, d_w}, rng);
    const CompressedFeatures out = compress_qformer(h, cfg, w, CacheKey{});

    // oracle: the block must reduce to q0 + mean of the value projections
    const Tensor vp = nn::linear(h, blk.wv);
    const Tensor kp = nn::linear(h, blk.wk);
    const Tensor uniform =
        nn::cross_attention(Tensor::zeros({1, cfg.d_q}), kp, vp);  // zero queries -> mean
    Tensor expect = nn::add(w.queries, uniform);
    expect = nn::layer_norm(expect, w.ln_f_g, w.ln_f_b);
    CHECK(testutil::max_abs_diff(out.z, expect) < 1e-6f);

    // and the uniform attention row equals the plain mean of the values
    for (int64_t c = 0; c < cfg.d_q; ++c) {
        float mean = 0.0f;
        for (int64_t r = 0; r < 5; ++r) mean += vp.at(r, c);
        mean /= 5.0f;
        CHECK(uniform.at(0, c) == doctest::Approx(mean).epsilon(1e-5));
    }
}

TEST_CASE("edge model encodes deterministically and keys by content") {
    const EdgeModel model = EdgeModel::init(toy_encoder(), toy_qformer(), 11);
    const AudioClip clip = testutil::sine_clip(440.0, 1.5);
    const CompressedFeatures a = model.encode(clip);
    const CompressedFeatures b = model.encode(clip);
    CHECK(a.z.data == b.z.data);
    CHECK(a.cache_key == build_cache_key(clip.pcm_bytes()));
}

TEST_CASE("same seed reproduces identical weights") {
    const EdgeModel a = EdgeModel::init(toy_encoder(), toy_qformer(), 99);
    const EdgeModel b = EdgeModel::init(toy_encoder(), toy_qformer(), 99);
    CHECK(snapshot_params(a.encoder) == snapshot_params(b.encoder));
    const EdgeModel c = EdgeModel::init(toy_encoder(), toy_qformer(), 100);
    CHECK(snapshot_params(c.qformer) != snapshot_params(a.qformer));
}

TEST_CASE("edge weights survive a save/load round trip") {
    testutil::TmpDir tmp("weights");
    EdgeModel a = EdgeModel::init(toy_encoder(), toy_qformer(), 123);
    save_edge_model(tmp.file("edge.esrtw"), a, 123);

    EdgeModel b = EdgeModel::init(toy_encoder(), toy_qformer(), 999);
    load_edge_model(tmp.file("edge.esrtw"), b);
    CHECK(snapshot_params(b.encoder) == snapshot_params(a.encoder));
    CHECK(snapshot_params(b.qformer) == snapshot_params(a.qformer));

    const WeightFile wf = load_weights(tmp.file("edge.esrtw"));
    CHECK(wf.seed == 123);
}

TEST_CASE("shape pipeline holds for random durations at toy dims") {
    const EdgeModel model = EdgeModel::init(toy_encoder(), toy_qformer(), 5);
    Rng rng(36);
    for (int trial = 0; trial < 5; ++trial) {
        const double secs = 0.1 + 29.9 * rng.next_double();
        const AudioClip clip = testutil::sine_clip(350.0 + 100.0 * trial, secs);
        const MelSpectrogram mel = mel_from_clip(clip);
        CHECK(mel.mel.shape == std::vector<int64_t>{128, 3000});
        const Tensor h = run_encoder(mel.mel, model.encoder_cfg, model.encoder);
        CHECK(h.shape == std::vector<int64_t>{150, 32});
        const CompressedFeatures z =
            compress_qformer(h, model.qformer_cfg, model.qformer, mel.source_key);
        CHECK(z.z.shape == std::vector<int64_t>{8, 32});
    }
}
