#include "esrt/cloud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace esrt {

namespace {

float fan_in_std(int64_t d_in) {
    return 1.0f / std::sqrt(static_cast<float>(d_in));
}

Tensor ones(int64_t n) {
    return Tensor::full({n}, 1.0f);
}

// identity-dominant square projection: the decoder is a stand-in for a
// pretrained LLM, and pretrained attention passes addressed content through
// the residual stream rather than scrambling it. gain*I plus seeded noise
// keeps the map deterministic and full rank.
LinearLayer identity_plus_noise(int64_t d, float gain, float noise, Rng& rng) {
    LinearLayer l(d, d, rng, noise);
    for (int64_t i = 0; i < d; ++i) l.weight.at(i, i) += gain;
    return l;
}

} // namespace

void CloudConfig::validate() const {
    if (d_llm <= 0 || decoder_layers < 1 || heads < 1 || max_new_tokens < 0) {
        throw ConfigError("cloud config has invalid dims");
    }
    if (vocab_size < 2 || eos_id >= vocab_size) {
        throw ConfigError("cloud config needs eos_id < vocab_size");
    }
    if (d_llm % heads != 0) {
        throw ConfigError("d_llm " + std::to_string(d_llm) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
}

MlpWeights MlpWeights::init(int64_t d_q, int64_t d_llm, Rng& rng) {
    MlpWeights w;
    w.fc1 = LinearLayer(d_q, 4 * d_llm, rng, fan_in_std(d_q));
    w.fc2 = LinearLayer(4 * d_llm, d_llm, rng, fan_in_std(4 * d_llm));
    return w;
}

LoraAdapter LoraAdapter::init(int64_t d_in, int64_t d_out, int64_t r, float alpha, Rng& rng) {
    LoraAdapter ad;
    ad.r = r;
    ad.alpha = alpha;
    ad.a = Tensor::randn({d_in, r}, rng, fan_in_std(d_in));
    ad.b = Tensor::zeros({r, d_out});
    return ad;
}

LinearLayer apply_lora(const LinearLayer& layer, const LoraAdapter& adapter) {
    if (adapter.a.shape[0] != layer.d_in() || adapter.b.shape[1] != layer.d_out() ||
        adapter.a.shape[1] != adapter.b.shape[0]) {
        throw ShapeError("lora adapter " + shape_str(adapter.a.shape) + "*" +
                         shape_str(adapter.b.shape) + " incompatible with layer " +
                         shape_str(layer.weight.shape));
    }
    LinearLayer out = layer;
    Tensor delta = nn::matmul(adapter.a, adapter.b);
    const float s = adapter.scaling();
    for (size_t i = 0; i < out.weight.data.size(); ++i) {
        out.weight.data[i] += s * delta.data[i];
    }
    return out;
}

Tensor lora_forward(const Tensor& x, const LinearLayer& layer, const LoraAdapter& adapter) {
    Tensor out = nn::linear(x, layer);
    Tensor low = nn::matmul(nn::matmul(x, adapter.a), adapter.b);
    const float s = adapter.scaling();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += s * low.data[i];
    return out;
}

DecoderWeights DecoderWeights::init(const CloudConfig& cfg, uint32_t vocab_size, Rng& rng) {
    DecoderWeights w;
    // fan-in embedding keeps tied-softmax logits at unit scale; the decoder
    // multiplies its input rows by sqrt(d_llm) to match the position rows
    w.embedding = Tensor::randn({vocab_size, cfg.d_llm}, rng, fan_in_std(cfg.d_llm));
    for (int i = 0; i < cfg.decoder_layers; ++i) {
        DecoderBlock b;
        b.wq = LinearLayer(cfg.d_llm, cfg.d_llm, rng, fan_in_std(cfg.d_llm));
        b.wk = LinearLayer(cfg.d_llm, cfg.d_llm, rng, fan_in_std(cfg.d_llm));
        b.wv = identity_plus_noise(cfg.d_llm, 0.7f, 0.05f, rng);
        b.wo = identity_plus_noise(cfg.d_llm, 0.7f, 0.05f, rng);
        b.ffn1 = LinearLayer(cfg.d_llm, 4 * cfg.d_llm, rng, fan_in_std(cfg.d_llm));
        b.ffn2 = LinearLayer(4 * cfg.d_llm, cfg.d_llm, rng, fan_in_std(4 * cfg.d_llm));
        b.ln1_g = ones(cfg.d_llm);
        b.ln1_b = Tensor::zeros({cfg.d_llm});
        b.ln2_g = ones(cfg.d_llm);
        b.ln2_b = Tensor::zeros({cfg.d_llm});
        w.blocks.push_back(std::move(b));
    }
    w.ln_f_g = ones(cfg.d_llm);
    w.ln_f_b = Tensor::zeros({cfg.d_llm});
    return w;
}

Tensor project_mlp(const Tensor& z, const MlpWeights& weights) {
    if (z.rank() != 2 || z.shape[1] != weights.fc1.d_in()) {
        throw ShapeError("project_mlp input " + shape_str(z.shape) + " does not match fc1 " +
                         shape_str(weights.fc1.weight.shape));
    }
    return nn::linear(nn::gelu(nn::linear(z, weights.fc1)), weights.fc2);
}

Tensor embed_prompt(std::span<const uint32_t> token_ids, const Tensor& embedding) {
    const int64_t vocab = embedding.shape[0];
    const int64_t d = embedding.shape[1];
    Tensor out({static_cast<int64_t>(token_ids.size()), d});
    for (size_t i = 0; i < token_ids.size(); ++i) {
        if (token_ids[i] >= static_cast<uint32_t>(vocab)) {
            throw VocabError("token id " + std::to_string(token_ids[i]) +
                             " out of range for vocab size " + std::to_string(vocab));
        }
        std::copy_n(embedding.data.data() + static_cast<int64_t>(token_ids[i]) * d, d,
                    out.data.data() + static_cast<int64_t>(i) * d);
    }
    return out;
}

FusedInput fuse(const Tensor& z_mlp, const Tensor& prompt_embedding) {
    if (z_mlp.rank() != 2 || prompt_embedding.rank() != 2 ||
        (prompt_embedding.shape[0] > 0 && prompt_embedding.shape[1] != z_mlp.shape[1])) {
        throw ShapeError("fuse dim mismatch: " + shape_str(z_mlp.shape) + " vs " +
                         shape_str(prompt_embedding.shape));
    }
    FusedInput f;
    f.k = z_mlp.shape[0];
    f.p_t = prompt_embedding.shape[0];
    f.x = Tensor({f.k + f.p_t, z_mlp.shape[1]});
    std::copy(z_mlp.data.begin(), z_mlp.data.end(), f.x.data.begin());
    std::copy(prompt_embedding.data.begin(), prompt_embedding.data.end(),
              f.x.data.begin() + z_mlp.data.size());
    return f;
}

CloudModel CloudModel::init(const CloudConfig& cfg, int64_t d_q, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    CloudModel m;
    m.cfg = cfg;
    m.mlp = MlpWeights::init(d_q, cfg.d_llm, rng);
    m.decoder = DecoderWeights::init(cfg, cfg.vocab_size, rng);
    return m;
}

Tensor decoder_forward(const Tensor& rows, const CloudConfig& cfg, const DecoderWeights& weights,
                       const DecoderLora* lora) {
    if (rows.rank() != 2 || rows.shape[1] != cfg.d_llm) {
        throw ShapeError("decoder_forward input " + shape_str(rows.shape) + " vs d_llm " +
                         std::to_string(cfg.d_llm));
    }
    if (lora && lora->size() != weights.blocks.size()) {
        throw ConfigError("lora adapter count does not match decoder depth");
    }

    // position rows scaled down to the unit-norm content scale; the residual
    // stream starts small so attention and FFN writes steer it effectively
    Tensor h = rows;
    nn::add_sinusoidal_positions(h, 0, 1.0f / std::sqrt(static_cast<float>(cfg.d_llm)));

    auto fwd = [&](const Tensor& x, const LinearLayer& layer, size_t blk,
                   size_t slot) -> Tensor {
        if (lora) return lora_forward(x, layer, (*lora)[blk].adapters[slot]);
        return nn::linear(x, layer);
    };

    for (size_t i = 0; i < weights.blocks.size(); ++i) {
        const auto& blk = weights.blocks[i];
        Tensor hn = nn::layer_norm(h, blk.ln1_g, blk.ln1_b);
        Tensor q = fwd(hn, blk.wq, i, 0);
        Tensor k = fwd(hn, blk.wk, i, 1);
        Tensor v = fwd(hn, blk.wv, i, 2);
        Tensor attn = nn::multi_head_attention(q, k, v, cfg.heads, /*causal=*/true);
        h = nn::add(h, fwd(attn, blk.wo, i, 3));

        Tensor h2 = nn::layer_norm(h, blk.ln2_g, blk.ln2_b);
        h = nn::add(h, fwd(nn::gelu(fwd(h2, blk.ffn1, i, 4)), blk.ffn2, i, 5));
    }
    return nn::layer_norm(h, weights.ln_f_g, weights.ln_f_b);
}

Tensor output_logits(const Tensor& hidden, const DecoderWeights& weights) {
    return nn::matmul_nt(hidden, weights.embedding);
}

namespace {

// log-softmax of one row, written in place into probs
void log_softmax_row(const float* logits, int64_t n, std::vector<float>& out) {
    out.resize(static_cast<size_t>(n));
    float mx = logits[0];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    for (int64_t i = 0; i < n; ++i) sum += std::exp(static_cast<double>(logits[i] - mx));
    const float lse = mx + static_cast<float>(std::log(sum));
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = logits[i] - lse;
}

Tensor with_generated(const Tensor& x, std::span<const uint32_t> generated,
                      const Tensor& embedding) {
    const int64_t d = x.shape[1];
    Tensor rows({x.shape[0] + static_cast<int64_t>(generated.size()), d});
    std::copy(x.data.begin(), x.data.end(), rows.data.begin());
    for (size_t i = 0; i < generated.size(); ++i) {
        std::copy_n(embedding.data.data() + static_cast<int64_t>(generated[i]) * d, d,
                    rows.data.data() + (x.shape[0] + static_cast<int64_t>(i)) * d);
    }
    return rows;
}

} // namespace

std::vector<uint32_t> decode_greedy(const FusedInput& x, const CloudModel& model,
                                    int64_t max_new_tokens, int64_t min_new_tokens) {
    const uint32_t eos = model.cfg.eos_id;
    const uint32_t pad = model.cfg.pad_id;
    const DecoderLora* lora = model.lora ? &*model.lora : nullptr;
    std::vector<uint32_t> out;
    for (int64_t step = 0; step < max_new_tokens; ++step) {
        Tensor rows = with_generated(x.x, out, model.decoder.embedding);
        Tensor h = decoder_forward(rows, model.cfg, model.decoder, lora);
        Tensor logits = output_logits(h, model.decoder);
        const float* last = logits.data.data() + (logits.shape[0] - 1) * logits.shape[1];
        uint32_t best = 0;
        float best_v = -std::numeric_limits<float>::infinity();
        for (int64_t t = 0; t < logits.shape[1]; ++t) {
            if (step < min_new_tokens && static_cast<uint32_t>(t) == eos) continue;
            if (static_cast<uint32_t>(t) == pad) continue;
            if (last[t] > best_v) {
                best_v = last[t];
                best = static_cast<uint32_t>(t);
            }
        }
        if (best == eos) break;
        out.push_back(best);
    }
    return out;
}

namespace {

struct Beam {
    std::vector<uint32_t> tokens;
    double sum_logp = 0.0;
    bool finished = false;

    // normalized score; finished beams count the terminating <eos>
    double score() const {
        const size_t len = tokens.size() + (finished ? 1 : 0);
        return len == 0 ? 0.0 : sum_logp / static_cast<double>(len);
    }
};

} // namespace

std::vector<uint32_t> decode_beam(const FusedInput& x, const CloudModel& model, int width,
                                  int64_t max_new_tokens, int64_t min_new_tokens) {
    if (width < 1) {
        throw ConfigError("beam width must be >= 1");
    }
    const uint32_t eos = model.cfg.eos_id;
    const uint32_t pad = model.cfg.pad_id;
    const DecoderLora* lora = model.lora ? &*model.lora : nullptr;

    std::vector<Beam> active{Beam{}};
    std::vector<Beam> finished;
    std::vector<float> logp;

    for (int64_t step = 0; step < max_new_tokens && !active.empty(); ++step) {
        struct Cand {
            size_t parent;
            uint32_t token;
            double sum_logp;
        };
        std::vector<Cand> cands;
        for (size_t bi = 0; bi < active.size(); ++bi) {
            Tensor rows = with_generated(x.x, active[bi].tokens, model.decoder.embedding);
            Tensor h = decoder_forward(rows, model.cfg, model.decoder, lora);
            Tensor logits = output_logits(h, model.decoder);
            const float* last = logits.data.data() + (logits.shape[0] - 1) * logits.shape[1];
            log_softmax_row(last, logits.shape[1], logp);
            for (int64_t t = 0; t < logits.shape[1]; ++t) {
                if (step < min_new_tokens && static_cast<uint32_t>(t) == eos) continue;
                if (static_cast<uint32_t>(t) == pad) continue;
                cands.push_back({bi, static_cast<uint32_t>(t),
                                 active[bi].sum_logp + logp[static_cast<size_t>(t)]});
            }
        }
        // deterministic order: score desc, then token asc, then parent asc
        std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.sum_logp != b.sum_logp) return a.sum_logp > b.sum_logp;
            if (a.token != b.token) return a.token < b.token;
            return a.parent < b.parent;
        });

        // every <eos> candidate joins the finished pool without consuming a
        // beam slot; the top `width` non-eos candidates continue
        std::vector<Beam> next;
        for (const Cand& c : cands) {
            Beam nb;
            nb.tokens = active[c.parent].tokens;
            nb.sum_logp = c.sum_logp;
            if (c.token == eos) {
                nb.finished = true;
                finished.push_back(std::move(nb));
            } else if (static_cast<int>(next.size()) < width) {
                nb.tokens.push_back(c.token);
                next.push_back(std::move(nb));
            }
        }
        active = std::move(next);
    }

    // beams still active at the budget compete on equal terms
    for (Beam& b : active) finished.push_back(std::move(b));
    if (finished.empty()) return {};

    const Beam* best = &finished[0];
    for (const Beam& b : finished) {
        if (b.score() > best->score()) best = &b;
    }
    return best->tokens;
}

SrtOutput parse_srt_output(std::span<const uint32_t> ids, const Vocabulary& vocab) {
    // locate the single adjacent language-token pair
    ptrdiff_t pair_at = -1;
    int pairs = 0;
    for (size_t i = 0; i + 1 < ids.size(); ++i) {
        if (vocab.is_language_token(ids[i]) && vocab.is_language_token(ids[i + 1])) {
            ++pairs;
            pair_at = static_cast<ptrdiff_t>(i);
        }
    }
    if (pairs != 1) {
        throw SrtFormatError("expected exactly one adjacent language-token pair, found " +
                             std::to_string(pairs));
    }

    SrtOutput out;
    out.raw_tokens.assign(ids.begin(), ids.end());
    out.src_token = ids[static_cast<size_t>(pair_at)];
    out.tgt_token = ids[static_cast<size_t>(pair_at) + 1];
    std::vector<uint32_t> head(ids.begin(), ids.begin() + pair_at);
    std::vector<uint32_t> tail(ids.begin() + pair_at + 2, ids.end());
    out.transcript = vocab.detokenize(head);
    out.translation = vocab.detokenize(tail);
    return out;
}

} // namespace esrt
