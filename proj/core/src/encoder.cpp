#include "esrt/encoder.hpp"

namespace esrt {

namespace {

// fan-in scaling keeps activations O(1) through frozen random blocks
float fan_in_std(int64_t d_in) {
    return 1.0f / std::sqrt(static_cast<float>(d_in));
}

constexpr float kQueryInitScale = 0.02f;
constexpr int kConvKernel = 3;

Tensor ones(int64_t n) {
    return Tensor::full({n}, 1.0f);
}

TransformerBlock init_block(int64_t d, Rng& rng) {
    TransformerBlock b;
    b.wq = LinearLayer(d, d, rng, fan_in_std(d));
    b.wk = LinearLayer(d, d, rng, fan_in_std(d));
    b.wv = LinearLayer(d, d, rng, fan_in_std(d));
    b.wo = LinearLayer(d, d, rng, fan_in_std(d));
    b.ffn1 = LinearLayer(d, 4 * d, rng, fan_in_std(d));
    b.ffn2 = LinearLayer(4 * d, d, rng, fan_in_std(4 * d));
    b.ln1_g = ones(d);
    b.ln1_b = Tensor::zeros({d});
    b.ln2_g = ones(d);
    b.ln2_b = Tensor::zeros({d});
    return b;
}

} // namespace

void EncoderConfig::validate() const {
    if (d_w <= 0 || heads <= 0 || layers < 0) {
        throw ConfigError("encoder config has non-positive dims");
    }
    if (d_w % heads != 0) {
        throw ConfigError("encoder d_w " + std::to_string(d_w) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
    if (downsample < 1 || kNumFrames % downsample != 0) {
        throw ConfigError("downsample " + std::to_string(downsample) +
                          " must be >= 1 and divide " + std::to_string(kNumFrames));
    }
}

void QFormerConfig::validate(int64_t l_prime) const {
    if (k_queries < 1) {
        throw ConfigError("k_queries must be >= 1");
    }
    if (d_q <= 0 || heads <= 0 || layers < 1) {
        throw ConfigError("qformer config has non-positive dims");
    }
    if (d_q % heads != 0) {
        throw ConfigError("qformer d_q " + std::to_string(d_q) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
    if (k_queries >= l_prime) {
        throw ConfigError("k_queries " + std::to_string(k_queries) +
                          " must be far smaller than encoder length " + std::to_string(l_prime));
    }
}

EncoderWeights EncoderWeights::init(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    EncoderWeights w;
    w.conv_w = Tensor::randn({kConvKernel * kNumMels, cfg.d_w}, rng,
                             fan_in_std(kConvKernel * kNumMels));
    w.conv_b = Tensor::zeros({cfg.d_w});
    for (int i = 0; i < cfg.layers; ++i) w.blocks.push_back(init_block(cfg.d_w, rng));
    w.ln_f_g = ones(cfg.d_w);
    w.ln_f_b = Tensor::zeros({cfg.d_w});
    return w;
}

QFormerWeights QFormerWeights::init(const QFormerConfig& cfg, int64_t d_w, Rng& rng) {
    QFormerWeights w;
    w.queries = Tensor::randn({cfg.k_queries, cfg.d_q}, rng, kQueryInitScale);
    for (int i = 0; i < cfg.layers; ++i) {
        QFormerBlock b;
        b.wq = LinearLayer(cfg.d_q, cfg.d_q, rng, fan_in_std(cfg.d_q));
        b.wk = LinearLayer(d_w, cfg.d_q, rng, fan_in_std(d_w));
        b.wv = LinearLayer(d_w, cfg.d_q, rng, fan_in_std(d_w));
        b.wo = LinearLayer(cfg.d_q, cfg.d_q, rng, fan_in_std(cfg.d_q));
        b.ffn1 = LinearLayer(cfg.d_q, 4 * cfg.d_q, rng, fan_in_std(cfg.d_q));
        b.ffn2 = LinearLayer(4 * cfg.d_q, cfg.d_q, rng, fan_in_std(4 * cfg.d_q));
        b.ln1_g = ones(cfg.d_q);
        b.ln1_b = Tensor::zeros({cfg.d_q});
        b.ln2_g = ones(cfg.d_q);
        b.ln2_b = Tensor::zeros({cfg.d_q});
        w.blocks.push_back(std::move(b));
    }
    w.ln_f_g = ones(cfg.d_q);
    w.ln_f_b = Tensor::zeros({cfg.d_q});
    return w;
}

Tensor run_encoder(const Tensor& mel, const EncoderConfig& cfg, const EncoderWeights& weights) {
    if (mel.shape != std::vector<int64_t>{kNumMels, kNumFrames}) {
        throw ShapeError("run_encoder expects mel [128 x 3000], got " + shape_str(mel.shape));
    }
    if (weights.conv_w.shape != std::vector<int64_t>{kConvKernel * kNumMels, cfg.d_w} ||
        static_cast<int>(weights.blocks.size()) != cfg.layers) {
        throw ConfigError("encoder weights do not match config");
    }

    const int64_t l_out = cfg.l_prime();

    // strided conv stem over time: gather [L' x 3*128] patches, one matmul.
    // Log-Mel values live around [-10, 2]; the stem maps them to roughly
    // [-1, 1] so activations start at unit scale.
    Tensor patches({l_out, kConvKernel * kNumMels});
    for (int64_t t = 0; t < l_out; ++t) {
        float* row = patches.data.data() + t * kConvKernel * kNumMels;
        for (int j = 0; j < kConvKernel; ++j) {
            const int64_t src = t * cfg.downsample + j - 1;
            if (src < 0 || src >= kNumFrames) continue;  // zero padding
            for (int m = 0; m < kNumMels; ++m) {
                row[j * kNumMels + m] = (mel.at(m, src) + 5.0f) / 5.0f;
            }
        }
    }
    Tensor h = nn::matmul(patches, weights.conv_w);
    for (int64_t t = 0; t < l_out; ++t) {
        for (int64_t c = 0; c < cfg.d_w; ++c) {
            h.at(t, c) = nn::gelu_scalar(h.at(t, c) + weights.conv_b.data[static_cast<size_t>(c)]);
        }
    }
    nn::add_sinusoidal_positions(h);

    for (const auto& blk : weights.blocks) {
        Tensor hn = nn::layer_norm(h, blk.ln1_g, blk.ln1_b);
        Tensor q = nn::linear(hn, blk.wq);
        Tensor k = nn::linear(hn, blk.wk);
        Tensor v = nn::linear(hn, blk.wv);
        Tensor attn = nn::multi_head_attention(q, k, v, cfg.heads);
        h = nn::add(h, nn::linear(attn, blk.wo));

        Tensor h2 = nn::layer_norm(h, blk.ln2_g, blk.ln2_b);
        h = nn::add(h, nn::linear(nn::gelu(nn::linear(h2, blk.ffn1)), blk.ffn2));
    }
    return nn::layer_norm(h, weights.ln_f_g, weights.ln_f_b);
}

CompressedFeatures compress_qformer(const Tensor& h, const QFormerConfig& cfg,
                                    const QFormerWeights& weights, const CacheKey& key) {
    if (h.rank() != 2) {
        throw ShapeError("compress_qformer expects 2-D features, got " + shape_str(h.shape));
    }
    if (weights.queries.shape != std::vector<int64_t>{cfg.k_queries, cfg.d_q} ||
        static_cast<int>(weights.blocks.size()) != cfg.layers) {
        throw ConfigError("qformer weights do not match config");
    }
    cfg.validate(h.shape[0]);
    if (!weights.blocks.empty() && weights.blocks[0].wk.d_in() != h.shape[1]) {
        throw ConfigError("qformer key projection expects d_w " +
                          std::to_string(weights.blocks[0].wk.d_in()) + ", features have " +
                          std::to_string(h.shape[1]));
    }

    Tensor q = weights.queries;
    for (const auto& blk : weights.blocks) {
        Tensor qn = nn::layer_norm(q, blk.ln1_g, blk.ln1_b);
        Tensor qp = nn::linear(qn, blk.wq);
        Tensor kp = nn::linear(h, blk.wk);
        Tensor vp = nn::linear(h, blk.wv);
        Tensor attn = nn::multi_head_attention(qp, kp, vp, cfg.heads);
        q = nn::add(q, nn::linear(attn, blk.wo));

        Tensor q2 = nn::layer_norm(q, blk.ln2_g, blk.ln2_b);
        q = nn::add(q, nn::linear(nn::gelu(nn::linear(q2, blk.ffn1)), blk.ffn2));
    }

    CompressedFeatures out;
    out.z = nn::layer_norm(q, weights.ln_f_g, weights.ln_f_b);
    out.cache_key = key;
    out.k = cfg.k_queries;
    out.d_q = cfg.d_q;
    return out;
}

EdgeModel EdgeModel::init(const EncoderConfig& ecfg, const QFormerConfig& qcfg, uint64_t seed) {
    ecfg.validate();
    qcfg.validate(ecfg.l_prime());
    Rng rng(seed);
    EdgeModel m;
    m.encoder_cfg = ecfg;
    m.qformer_cfg = qcfg;
    m.encoder = EncoderWeights::init(ecfg, rng);
    m.qformer = QFormerWeights::init(qcfg, ecfg.d_w, rng);
    return m;
}

CompressedFeatures EdgeModel::encode(const AudioClip& clip) const {
    const MelSpectrogram mel = mel_from_clip(clip);
    const Tensor h = run_encoder(mel.mel, encoder_cfg, encoder);
    return compress_qformer(h, qformer_cfg, qformer, mel.source_key);
}

} // namespace esrt
