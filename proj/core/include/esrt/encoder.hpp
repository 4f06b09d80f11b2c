#pragma once

#include "esrt/hash.hpp"
#include "esrt/mel.hpp"
#include "esrt/nn.hpp"
#include "esrt/tensor.hpp"

namespace esrt {

struct EncoderConfig {
    int64_t d_w = 64;   // encoder hidden dim (1280 at paper scale)
    int layers = 2;     // transformer blocks after the conv stem; 0 = stem only
    int heads = 2;
    int downsample = 2; // conv stride; L' = 3000 / downsample

    int64_t l_prime() const { return kNumFrames / downsample; }
    void validate() const;
};

struct QFormerConfig {
    int64_t k_queries = 8;  // 40 or 80 at paper scale
    int64_t d_q = 32;       // 768 at paper scale
    int layers = 2;
    int heads = 2;

    // enforces K << L' (rejects K >= L') and divisibility constraints
    void validate(int64_t l_prime) const;
};

// pre-LN self-attention transformer block weights
struct TransformerBlock {
    LinearLayer wq, wk, wv, wo;
    LinearLayer ffn1, ffn2;
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
};

struct EncoderWeights {
    Tensor conv_w;  // [d_w x 128*3], kernel 3 over time, stride = downsample
    Tensor conv_b;  // [d_w]
    std::vector<TransformerBlock> blocks;
    Tensor ln_f_g, ln_f_b;

    static EncoderWeights init(const EncoderConfig& cfg, Rng& rng);
};

// one Q-Former block: queries cross-attend to encoder output, then FFN
struct QFormerBlock {
    LinearLayer wq;         // d_q -> d_q
    LinearLayer wk, wv;     // d_w -> d_q
    LinearLayer wo;         // d_q -> d_q
    LinearLayer ffn1, ffn2;
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
};

struct QFormerWeights {
    Tensor queries;  // [K x d_q] learnable query tokens
    std::vector<QFormerBlock> blocks;
    Tensor ln_f_g, ln_f_b;

    static QFormerWeights init(const QFormerConfig& cfg, int64_t d_w, Rng& rng);
};

// the only acoustic payload that ever leaves the edge
struct CompressedFeatures {
    Tensor z;  // [K x d_q]
    CacheKey cache_key{};
    int64_t k = 0;
    int64_t d_q = 0;
};

// Eq-2 stage: mel [128 x 3000] -> acoustic features [L' x d_w]
Tensor run_encoder(const Tensor& mel, const EncoderConfig& cfg, const EncoderWeights& weights);

// Eq-3 stage: acoustic features [L' x d_w] -> Z [K x d_q]; output shape is
// the same for every input duration
CompressedFeatures compress_qformer(const Tensor& h, const QFormerConfig& cfg,
                                    const QFormerWeights& weights, const CacheKey& key);

// read-only after construction; concurrent encodes on distinct inputs are safe
struct EdgeModel {
    EncoderConfig encoder_cfg;
    QFormerConfig qformer_cfg;
    EncoderWeights encoder;
    QFormerWeights qformer;

    static EdgeModel init(const EncoderConfig& ecfg, const QFormerConfig& qcfg, uint64_t seed);

    CompressedFeatures encode(const AudioClip& clip) const;
};

} // namespace esrt
