#pragma once

#include <optional>

#include "esrt/encoder.hpp"
#include "esrt/nn.hpp"
#include "esrt/tensor.hpp"
#include "esrt/vocab.hpp"

namespace esrt {

struct SrtFormatError : Error {
    using Error::Error;
};

struct CloudConfig {
    int64_t d_llm = 48;  // 3840 at paper scale
    int decoder_layers = 2;
    int heads = 2;
    int64_t max_new_tokens = 256;
    // token space; defaults match Vocabulary::standard(). pad is never
    // generated; set pad_id past vocab_size to disable the exclusion.
    uint32_t vocab_size = 360;
    uint32_t eos_id = 256;
    uint32_t pad_id = 257;

    void validate() const;
};

// feature projector: d_q -> 4*d_llm -> d_llm with GELU
struct MlpWeights {
    LinearLayer fc1, fc2;

    static MlpWeights init(int64_t d_q, int64_t d_llm, Rng& rng);
};

// low-rank additive delta for a frozen linear layer: base + (alpha/r) * x*a*b
struct LoraAdapter {
    Tensor a;  // [d_in x r]
    Tensor b;  // [r x d_out], zero-initialized
    int64_t r = 16;
    float alpha = 32.0f;

    static LoraAdapter init(int64_t d_in, int64_t d_out, int64_t r, float alpha, Rng& rng);
    float scaling() const { return alpha / static_cast<float>(r); }
};

// effective layer with the delta folded in; the base layer is untouched
LinearLayer apply_lora(const LinearLayer& layer, const LoraAdapter& adapter);

// forward through base + adapter without materializing the dense delta
Tensor lora_forward(const Tensor& x, const LinearLayer& layer, const LoraAdapter& adapter);

struct DecoderBlock {
    LinearLayer wq, wk, wv, wo;
    LinearLayer ffn1, ffn2;
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
};

// adapters for one block's linears, in {wq, wk, wv, wo, ffn1, ffn2} order
struct DecoderBlockLora {
    std::vector<LoraAdapter> adapters;
};

using DecoderLora = std::vector<DecoderBlockLora>;

struct DecoderWeights {
    Tensor embedding;  // [vocab x d_llm]; tied input/output embeddings
    std::vector<DecoderBlock> blocks;
    Tensor ln_f_g, ln_f_b;

    static DecoderWeights init(const CloudConfig& cfg, uint32_t vocab_size, Rng& rng);
};

struct FusedInput {
    Tensor x;  // [(K + P_t) x d_llm]; first K rows are projected features
    int64_t k = 0;
    int64_t p_t = 0;
};

struct SrtOutput {
    std::string transcript;
    uint32_t src_token = 0;
    uint32_t tgt_token = 0;
    std::string translation;
    std::vector<uint32_t> raw_tokens;
};

// Eq-4 stage: Z [K x d_q] -> [K x d_llm]
Tensor project_mlp(const Tensor& z, const MlpWeights& weights);

// Eq-5 stage: row lookup into the embedding table; throws on out-of-range ids
Tensor embed_prompt(std::span<const uint32_t> token_ids, const Tensor& embedding);

// Eq-6 stage: X = [Z_mlp; P]
FusedInput fuse(const Tensor& z_mlp, const Tensor& prompt_embedding);

// whole model shared read-only between connections
struct CloudModel {
    CloudConfig cfg;
    MlpWeights mlp;
    DecoderWeights decoder;
    std::optional<DecoderLora> lora;

    static CloudModel init(const CloudConfig& cfg, int64_t d_q, uint64_t seed);

    const Vocabulary& vocab() const { return Vocabulary::standard(); }
};

// causal transformer over embedded rows; returns hidden states [T x d_llm]
Tensor decoder_forward(const Tensor& rows, const CloudConfig& cfg, const DecoderWeights& weights,
                       const DecoderLora* lora = nullptr);

// logits of every position: hidden * embedding^T
Tensor output_logits(const Tensor& hidden, const DecoderWeights& weights);

// argmax decoding; stops at <eos> or the token budget; <eos> is not returned.
// min_new_tokens suppresses <eos> for the first steps.
std::vector<uint32_t> decode_greedy(const FusedInput& x, const CloudModel& model,
                                    int64_t max_new_tokens, int64_t min_new_tokens = 0);

// length-normalized beam search (score = sum logprob / length); width 1
// reduces exactly to greedy
std::vector<uint32_t> decode_beam(const FusedInput& x, const CloudModel& model, int width,
                                  int64_t max_new_tokens, int64_t min_new_tokens = 0);

// splits "{Y1}<|src|><|tgt|>{Y2}" token output; requires exactly one adjacent
// language-token pair
SrtOutput parse_srt_output(std::span<const uint32_t> ids, const Vocabulary& vocab);

} // namespace esrt
