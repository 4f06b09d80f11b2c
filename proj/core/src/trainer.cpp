#include "esrt/trainer.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "esrt/mel.hpp"

namespace esrt {

using autograd::Tape;
using autograd::Var;
using json = nlohmann::json;

const char* task_name(TaskKind t) {
    switch (t) {
        case TaskKind::ASR: return "ASR";
        case TaskKind::SMT: return "SMT";
        case TaskKind::SRT: return "SRT";
    }
    return "?";
}

CurriculumStage CurriculumStage::stage(const std::string& id) {
    CurriculumStage s;
    s.id = id;
    if (id == "I") {
        s.task_weights = {{TaskKind::ASR, 1.0}};
    } else if (id == "II") {
        s.task_weights = {{TaskKind::ASR, 0.2}, {TaskKind::SMT, 0.4}, {TaskKind::SRT, 0.4}};
    } else if (id == "III") {
        s.task_weights = {{TaskKind::ASR, 0.2}, {TaskKind::SRT, 0.8}};
    } else {
        throw TrainError("unknown curriculum stage: " + id);
    }
    s.validate();
    return s;
}

void CurriculumStage::validate() const {
    if (task_weights.empty()) throw TrainError("stage has no tasks");
    double sum = 0.0;
    for (const auto& [task, w] : task_weights) {
        if (w <= 0.0) throw TrainError("non-positive task weight");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw TrainError("stage weights sum to " + std::to_string(sum) + ", expected 1");
    }
}

std::vector<TrainingExample> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TrainError("cannot open manifest " + path);
    std::vector<TrainingExample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        TrainingExample ex;
        ex.audio_path = j.at("audio_path").get<std::string>();
        ex.transcript = j.at("transcript").get<std::string>();
        ex.translation = j.at("translation").get<std::string>();
        ex.src_code = j.at("src").get<std::string>();
        ex.tgt_code = j.at("tgt").get<std::string>();
        out.push_back(std::move(ex));
    }
    return out;
}

void save_manifest(const std::string& path, const std::vector<TrainingExample>& examples) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw TrainError("cannot write manifest " + path);
    for (const auto& ex : examples) {
        json j{{"audio_path", ex.audio_path},
               {"transcript", ex.transcript},
               {"translation", ex.translation},
               {"src", ex.src_code},
               {"tgt", ex.tgt_code}};
        out << j.dump() << "\n";
    }
}

std::vector<TrainingExample> make_synthetic_corpus(const std::string& dir, int count,
                                                   uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    Rng rng(seed);
    const Vocabulary& vocab = Vocabulary::standard();
    static const char* kSyllables[] = {"ba", "do", "ki", "lu", "men", "sor", "ta", "vi"};

    auto word = [&rng]() {
        std::string w;
        const int syll = 2 + static_cast<int>(rng.next_below(3));
        for (int i = 0; i < syll; ++i) w += kSyllables[rng.next_below(8)];
        return w;
    };

    std::vector<TrainingExample> out;
    for (int i = 0; i < count; ++i) {
        TrainingExample ex;
        const auto& codes = vocab.language_codes();
        ex.src_code = codes[rng.next_below(codes.size())];
        do {
            ex.tgt_code = codes[rng.next_below(codes.size())];
        } while (ex.tgt_code == ex.src_code);
        ex.transcript = word() + " " + word();
        ex.translation = word() + " " + word();

        // tone sequence, distinct per example; the frequency pattern varies
        // over time so the encoder output is informative along its length
        const int segments = 6 + static_cast<int>(rng.next_below(6));
        const int64_t seg_len = kSampleRate / 2;  // 0.5 s per segment
        std::vector<int16_t> samples(static_cast<size_t>(segments * seg_len));
        for (int s = 0; s < segments; ++s) {
            const double f1 = 150.0 + static_cast<double>(rng.next_below(3500));
            const double f2 = 150.0 + static_cast<double>(rng.next_below(3500));
            const double amp = 0.15 + 0.2 * rng.next_double();
            for (int64_t t = 0; t < seg_len; ++t) {
                const int64_t at = s * seg_len + t;
                const double x = amp * std::sin(2.0 * M_PI * f1 * t / kSampleRate) +
                                 amp * std::sin(2.0 * M_PI * f2 * t / kSampleRate);
                samples[static_cast<size_t>(at)] = static_cast<int16_t>(x * 32000.0);
            }
        }
        char name[32];
        std::snprintf(name, sizeof(name), "ex_%04d.wav", i);
        ex.audio_path = (fs::path(dir) / name).string();
        const auto wav = encode_wav(samples);
        std::ofstream f(ex.audio_path, std::ios::binary | std::ios::trunc);
        f.write(reinterpret_cast<const char*>(wav.data()),
                static_cast<std::streamsize>(wav.size()));
        out.push_back(std::move(ex));
    }
    save_manifest((fs::path(dir) / "manifest.jsonl").string(), out);
    return out;
}

PromptTarget build_prompt(TaskKind task, const TrainingExample& ex, const Vocabulary& vocab) {
    const uint32_t src = vocab.language_id(ex.src_code);
    const uint32_t tgt = vocab.language_id(ex.tgt_code);
    PromptTarget pt;
    switch (task) {
        case TaskKind::ASR:
            pt.input_ids = {src};
            pt.target_ids = vocab.tokenize(ex.transcript);
            break;
        case TaskKind::SMT:
            pt.input_ids = vocab.tokenize(ex.transcript);
            pt.input_ids.push_back(src);
            pt.input_ids.push_back(tgt);
            pt.target_ids = vocab.tokenize(ex.translation);
            break;
        case TaskKind::SRT:
            pt.input_ids = {src, tgt};
            pt.target_ids = vocab.tokenize(ex.transcript);
            pt.target_ids.push_back(src);
            pt.target_ids.push_back(tgt);
            {
                const auto tr = vocab.tokenize(ex.translation);
                pt.target_ids.insert(pt.target_ids.end(), tr.begin(), tr.end());
            }
            break;
    }
    return pt;
}

TaskKind sample_task(const CurriculumStage& stage, Rng& rng) {
    const double u = rng.next_double();
    double acc = 0.0;
    TaskKind last = stage.task_weights.begin()->first;
    for (const auto& [task, w] : stage.task_weights) {
        acc += w;
        last = task;
        if (u < acc) return task;
    }
    return last;  // u landed in the rounding tail
}

double weighted_loss(const std::map<TaskKind, double>& per_task_losses,
                     const CurriculumStage& stage) {
    double total = 0.0;
    for (const auto& [task, loss] : per_task_losses) {
        auto it = stage.task_weights.find(task);
        if (it == stage.task_weights.end()) {
            throw TrainError(std::string("loss for task ") + task_name(task) +
                             " outside stage " + stage.id);
        }
        if (!std::isfinite(loss)) {
            throw TrainError(std::string("non-finite loss for task ") + task_name(task));
        }
        total += it->second * loss;
    }
    return total;
}

TrainerModel TrainerModel::init(const EncoderConfig& ecfg, const QFormerConfig& qcfg,
                                const CloudConfig& ccfg, uint64_t seed) {
    TrainerModel m;
    m.edge = EdgeModel::init(ecfg, qcfg, seed);
    m.cloud = CloudModel::init(ccfg, qcfg.d_q, seed + 1);
    return m;
}

void attach_lora(CloudModel& cloud, int64_t r, float alpha, uint64_t seed) {
    Rng rng(seed);
    DecoderLora lora;
    for (const auto& blk : cloud.decoder.blocks) {
        DecoderBlockLora bl;
        for (const LinearLayer* l : {&blk.wq, &blk.wk, &blk.wv, &blk.wo, &blk.ffn1, &blk.ffn2}) {
            if (r > std::min(l->d_in(), l->d_out())) {
                throw ConfigError("lora rank " + std::to_string(r) + " exceeds layer dims " +
                                  shape_str(l->weight.shape));
            }
            bl.adapters.push_back(LoraAdapter::init(l->d_in(), l->d_out(), r, alpha, rng));
        }
        lora.push_back(std::move(bl));
    }
    cloud.lora = std::move(lora);
}

namespace {

// One tape pass's bindings of weight tensors to tape nodes. A tensor is
// wrapped once per pass so multi-task mixing shares parameter nodes.
struct AgContext {
    Tape tape;
    std::vector<std::pair<Tensor*, Var>> trainables;
    std::vector<std::string> names;
    std::map<const Tensor*, Var> bound;

    Var wrap(const std::string& name, Tensor& t, bool trainable) {
        auto it = bound.find(&t);
        if (it != bound.end()) return it->second;
        Var v = trainable ? tape.param(t) : tape.constant(t);
        bound.emplace(&t, v);
        if (trainable) {
            trainables.emplace_back(&t, v);
            names.push_back(name);
        }
        return v;
    }
};

struct AgLinear {
    Var w, b;
};

AgLinear wrap_linear(AgContext& ctx, const std::string& name, LinearLayer& l, bool trainable) {
    return {ctx.wrap(name + ".weight", l.weight, trainable),
            ctx.wrap(name + ".bias", l.bias, trainable)};
}

Var ag_linear(AgContext& ctx, const Var& x, const AgLinear& l) {
    return ctx.tape.linear(x, l.w, l.b);
}

// decoder-input position rows, matching decoder_forward exactly
Tensor posenc_for(int64_t rows, int64_t d) {
    Tensor p({rows, d});
    nn::add_sinusoidal_positions(p, 0, 1.0f / std::sqrt(static_cast<float>(d)));
    return p;
}

// Q-Former forward on constant acoustic features
Var qformer_forward_ag(AgContext& ctx, const Tensor& h_in, QFormerWeights& w,
                       const QFormerConfig& cfg, bool trainable) {
    Var h = ctx.tape.constant(h_in);
    Var q = ctx.wrap("qformer.queries", w.queries, trainable);
    for (size_t i = 0; i < w.blocks.size(); ++i) {
        auto& blk = w.blocks[i];
        const std::string p = "qformer.block" + std::to_string(i);
        Var ln1g = ctx.wrap(p + ".ln1_g", blk.ln1_g, trainable);
        Var ln1b = ctx.wrap(p + ".ln1_b", blk.ln1_b, trainable);
        AgLinear wq = wrap_linear(ctx, p + ".wq", blk.wq, trainable);
        AgLinear wk = wrap_linear(ctx, p + ".wk", blk.wk, trainable);
        AgLinear wv = wrap_linear(ctx, p + ".wv", blk.wv, trainable);
        AgLinear wo = wrap_linear(ctx, p + ".wo", blk.wo, trainable);

        Var qn = ctx.tape.layer_norm(q, ln1g, ln1b);
        Var att = ctx.tape.multi_head_attention(ag_linear(ctx, qn, wq), ag_linear(ctx, h, wk),
                                                ag_linear(ctx, h, wv), cfg.heads);
        q = ctx.tape.add(q, ag_linear(ctx, att, wo));

        Var ln2g = ctx.wrap(p + ".ln2_g", blk.ln2_g, trainable);
        Var ln2b = ctx.wrap(p + ".ln2_b", blk.ln2_b, trainable);
        AgLinear f1 = wrap_linear(ctx, p + ".ffn1", blk.ffn1, trainable);
        AgLinear f2 = wrap_linear(ctx, p + ".ffn2", blk.ffn2, trainable);
        Var q2 = ctx.tape.layer_norm(q, ln2g, ln2b);
        q = ctx.tape.add(q, ag_linear(ctx, ctx.tape.gelu(ag_linear(ctx, q2, f1)), f2));
    }
    Var lng = ctx.wrap("qformer.ln_f_g", w.ln_f_g, trainable);
    Var lnb = ctx.wrap("qformer.ln_f_b", w.ln_f_b, trainable);
    return ctx.tape.layer_norm(q, lng, lnb);
}

Var mlp_forward_ag(AgContext& ctx, const Var& z, MlpWeights& w, bool trainable) {
    AgLinear f1 = wrap_linear(ctx, "mlp.fc1", w.fc1, trainable);
    AgLinear f2 = wrap_linear(ctx, "mlp.fc2", w.fc2, trainable);
    return ag_linear(ctx, ctx.tape.gelu(ag_linear(ctx, z, f1)), f2);
}

Var ag_maybe_lora(AgContext& ctx, const Var& x, const AgLinear& base, CloudModel& cloud,
                  size_t block, size_t slot, bool lora_trainable) {
    Var y = ag_linear(ctx, x, base);
    if (!cloud.lora) return y;
    LoraAdapter& ad = (*cloud.lora)[block].adapters[slot];
    static const char* kSlots[] = {"wq", "wk", "wv", "wo", "ffn1", "ffn2"};
    const std::string p = "lora.block" + std::to_string(block) + "." + kSlots[slot];
    Var a = ctx.wrap(p + ".a", ad.a, lora_trainable);
    Var b = ctx.wrap(p + ".b", ad.b, lora_trainable);
    Var low = ctx.tape.matmul(ctx.tape.matmul(x, a), b);
    return ctx.tape.add(y, ctx.tape.scale(low, ad.scaling()));
}

// decoder forward over embedded rows; decoder base weights stay frozen
Var decoder_forward_ag(AgContext& ctx, Var rows, TrainerModel& model, bool lora_trainable) {
    CloudModel& cloud = model.cloud;
    rows = ctx.tape.add_const(rows, posenc_for(rows->value.shape[0], rows->value.shape[1]));
    for (size_t i = 0; i < cloud.decoder.blocks.size(); ++i) {
        auto& blk = cloud.decoder.blocks[i];
        const std::string p = "decoder.block" + std::to_string(i);
        Var ln1g = ctx.wrap(p + ".ln1_g", blk.ln1_g, false);
        Var ln1b = ctx.wrap(p + ".ln1_b", blk.ln1_b, false);
        AgLinear wq = wrap_linear(ctx, p + ".wq", blk.wq, false);
        AgLinear wk = wrap_linear(ctx, p + ".wk", blk.wk, false);
        AgLinear wv = wrap_linear(ctx, p + ".wv", blk.wv, false);
        AgLinear wo = wrap_linear(ctx, p + ".wo", blk.wo, false);

        Var hn = ctx.tape.layer_norm(rows, ln1g, ln1b);
        Var q = ag_maybe_lora(ctx, hn, wq, cloud, i, 0, lora_trainable);
        Var k = ag_maybe_lora(ctx, hn, wk, cloud, i, 1, lora_trainable);
        Var v = ag_maybe_lora(ctx, hn, wv, cloud, i, 2, lora_trainable);
        Var att = ctx.tape.multi_head_attention(q, k, v, cloud.cfg.heads, /*causal=*/true);
        rows = ctx.tape.add(rows, ag_maybe_lora(ctx, att, wo, cloud, i, 3, lora_trainable));

        Var ln2g = ctx.wrap(p + ".ln2_g", blk.ln2_g, false);
        Var ln2b = ctx.wrap(p + ".ln2_b", blk.ln2_b, false);
        AgLinear f1 = wrap_linear(ctx, p + ".ffn1", blk.ffn1, false);
        AgLinear f2 = wrap_linear(ctx, p + ".ffn2", blk.ffn2, false);
        Var h2 = ctx.tape.layer_norm(rows, ln2g, ln2b);
        Var ff = ag_maybe_lora(ctx, ctx.tape.gelu(ag_maybe_lora(ctx, h2, f1, cloud, i, 4,
                                                                lora_trainable)),
                               f2, cloud, i, 5, lora_trainable);
        rows = ctx.tape.add(rows, ff);
    }
    Var lng = ctx.wrap("decoder.ln_f_g", cloud.decoder.ln_f_g, false);
    Var lnb = ctx.wrap("decoder.ln_f_b", cloud.decoder.ln_f_b, false);
    return ctx.tape.layer_norm(rows, lng, lnb);
}

// loss of one (example, task) on precomputed features
Var task_loss_ag(AgContext& ctx, TrainerModel& model, const Tensor& h,
                 const TrainingExample& ex, TaskKind task, bool lora_trainable) {
    const Vocabulary& vocab = Vocabulary::standard();
    const PromptTarget pt = build_prompt(task, ex, vocab);
    std::vector<uint32_t> targets = pt.target_ids;
    targets.push_back(vocab.eos_id());
    const int64_t m = static_cast<int64_t>(targets.size());

    Var z = qformer_forward_ag(ctx, h, model.edge.qformer, model.edge.qformer_cfg, true);
    Var zmlp = mlp_forward_ag(ctx, z, model.cloud.mlp, true);
    Var table = ctx.wrap("decoder.embedding", model.cloud.decoder.embedding, false);
    Var prompt = ctx.tape.gather_rows(table, pt.input_ids);
    std::vector<uint32_t> shifted(targets.begin(), targets.end() - 1);
    std::vector<Var> parts{zmlp, prompt};
    if (!shifted.empty()) parts.push_back(ctx.tape.gather_rows(table, shifted));
    Var rows = ctx.tape.concat_rows(parts);

    Var hidden = decoder_forward_ag(ctx, rows, model, lora_trainable);
    const int64_t k = zmlp->value.shape[0];
    const int64_t p_t = static_cast<int64_t>(pt.input_ids.size());
    Var pred_rows = ctx.tape.slice_rows(hidden, k + p_t - 1, m);
    Var logits = ctx.tape.matmul_nt(pred_rows, table);
    std::vector<uint8_t> mask(targets.size(), 1);
    return ctx.tape.cross_entropy(logits, targets, mask);
}

Tensor encode_features_for(const TrainingExample& ex, const EdgeModel& edge,
                           std::map<std::string, Tensor>& h_cache) {
    auto it = h_cache.find(ex.audio_path);
    if (it != h_cache.end()) return it->second;
    std::ifstream in(ex.audio_path, std::ios::binary);
    if (!in) throw TrainError("cannot open audio file " + ex.audio_path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    const AudioClip clip = decode_wav(bytes);
    const MelSpectrogram mel = mel_from_clip(clip);
    Tensor h = run_encoder(mel.mel, edge.encoder_cfg, edge.encoder);
    h_cache.emplace(ex.audio_path, h);
    return h;
}

void sgd_step(AgContext& ctx, float lr) {
    for (auto& [target, var] : ctx.trainables) {
        if (var->grad.data.empty()) continue;
        for (size_t i = 0; i < target->data.size(); ++i) {
            target->data[i] -= lr * var->grad.data[i];
        }
    }
}

// teacher-forcing argmax accuracy of the ASR task
double accuracy_over(const std::vector<TrainingExample>& manifest, const TrainerModel& model,
                     std::map<std::string, Tensor>& h_cache) {
    double correct = 0.0, total = 0.0;
    const Vocabulary& vocab = Vocabulary::standard();
    const DecoderLora* lora = model.cloud.lora ? &*model.cloud.lora : nullptr;
    for (const auto& ex : manifest) {
        const Tensor h = encode_features_for(ex, model.edge, h_cache);
        const CompressedFeatures z =
            compress_qformer(h, model.edge.qformer_cfg, model.edge.qformer, CacheKey{});
        const Tensor zmlp = project_mlp(z.z, model.cloud.mlp);
        const PromptTarget pt = build_prompt(TaskKind::ASR, ex, vocab);
        std::vector<uint32_t> targets = pt.target_ids;
        targets.push_back(vocab.eos_id());
        std::vector<uint32_t> shifted(targets.begin(), targets.end() - 1);
        std::vector<uint32_t> seq = pt.input_ids;
        seq.insert(seq.end(), shifted.begin(), shifted.end());
        const Tensor p = embed_prompt(seq, model.cloud.decoder.embedding);
        const FusedInput fused = fuse(zmlp, p);
        const Tensor hidden = decoder_forward(fused.x, model.cloud.cfg, model.cloud.decoder, lora);
        const Tensor logits = output_logits(hidden, model.cloud.decoder);
        const int64_t base = fused.k + static_cast<int64_t>(pt.input_ids.size()) - 1;
        for (size_t i = 0; i < targets.size(); ++i) {
            const float* row =
                logits.data.data() + (base + static_cast<int64_t>(i)) * logits.shape[1];
            uint32_t best = 0;
            float best_v = row[0];
            for (int64_t t = 1; t < logits.shape[1]; ++t) {
                if (row[t] > best_v) {
                    best_v = row[t];
                    best = static_cast<uint32_t>(t);
                }
            }
            if (best == targets[i]) correct += 1.0;
            total += 1.0;
        }
    }
    return total > 0 ? correct / total : 0.0;
}

} // namespace

namespace {

void export_grads(const AgContext& ctx, std::map<std::string, Tensor>* grads_out) {
    if (!grads_out) return;
    grads_out->clear();
    for (size_t i = 0; i < ctx.trainables.size(); ++i) {
        const Var& v = ctx.trainables[i].second;
        grads_out->emplace(ctx.names[i],
                           v->grad.data.empty() ? Tensor(v->value.shape) : v->grad);
    }
}

} // namespace

double task_loss_and_grads(TrainerModel& model, const Tensor& acoustic_features,
                           const TrainingExample& ex, TaskKind task, bool lora_trainable,
                           std::map<std::string, Tensor>* grads_out) {
    AgContext ctx;
    Var loss = task_loss_ag(ctx, model, acoustic_features, ex, task, lora_trainable);
    ctx.tape.backward(loss);
    export_grads(ctx, grads_out);
    return loss->value.data[0];
}

double loss_and_grads(TrainerModel& model, const CurriculumStage& stage,
                      const Tensor& acoustic_features, const TrainingExample& ex,
                      TrainConfig::Mode mode, std::map<std::string, Tensor>* grads_out) {
    AgContext ctx;
    const bool lora_trainable = stage.lora_enabled();
    Var loss;
    if (mode == TrainConfig::Mode::Mix) {
        std::vector<Var> losses;
        std::vector<float> weights;
        for (const auto& [task, w] : stage.task_weights) {
            losses.push_back(
                task_loss_ag(ctx, model, acoustic_features, ex, task, lora_trainable));
            weights.push_back(static_cast<float>(w));
        }
        loss = ctx.tape.add_scalars(losses, weights);
    } else {
        loss = task_loss_ag(ctx, model, acoustic_features, ex, stage.task_weights.begin()->first,
                            lora_trainable);
    }
    ctx.tape.backward(loss);
    export_grads(ctx, grads_out);
    return loss->value.data[0];
}

TrainReport train_stage(const CurriculumStage& stage,
                        const std::vector<TrainingExample>& manifest, TrainerModel& model,
                        const TrainConfig& cfg) {
    stage.validate();
    if (manifest.empty()) throw TrainError("empty training manifest");

    if (stage.lora_enabled() && !model.cloud.lora) {
        attach_lora(model.cloud, cfg.lora_r, cfg.lora_alpha, cfg.seed + 17);
    }

    // the encoder is frozen, so acoustic features are computed once
    std::map<std::string, Tensor> h_cache;
    for (const auto& ex : manifest) encode_features_for(ex, model.edge, h_cache);

    Rng rng(cfg.seed);
    TrainReport report;
    for (int64_t step = 0; step < cfg.steps; ++step) {
        const TrainingExample& ex = manifest[rng.next_below(manifest.size())];
        const Tensor& h = h_cache.at(ex.audio_path);
        AgContext ctx;
        const bool lora_trainable = stage.lora_enabled();

        if (cfg.mode == TrainConfig::Mode::Mix) {
            std::vector<Var> losses;
            std::vector<float> weights;
            std::vector<TaskKind> tasks;
            for (const auto& [task, w] : stage.task_weights) {
                losses.push_back(task_loss_ag(ctx, model, h, ex, task, lora_trainable));
                weights.push_back(static_cast<float>(w));
                tasks.push_back(task);
            }
            Var loss = ctx.tape.add_scalars(losses, weights);
            ctx.tape.backward(loss);
            for (size_t i = 0; i < tasks.size(); ++i) {
                const double l = losses[i]->value.data[0];
                if (!std::isfinite(l)) {
                    throw TrainError("training diverged at step " + std::to_string(step));
                }
                report.curve.push_back({step, tasks[i], l});
            }
            sgd_step(ctx, cfg.lr);
        } else {
            const TaskKind task = sample_task(stage, rng);
            Var loss = task_loss_ag(ctx, model, h, ex, task, lora_trainable);
            ctx.tape.backward(loss);
            const double l = loss->value.data[0];
            if (!std::isfinite(l)) {
                throw TrainError("training diverged at step " + std::to_string(step) +
                                 " (task " + task_name(task) + ")");
            }
            report.curve.push_back({step, task, l});
            sgd_step(ctx, cfg.lr);
        }
    }

    // final metric uses the same frozen-feature cache
    report.final_asr_token_accuracy = accuracy_over(manifest, model, h_cache);
    return report;
}

double asr_token_accuracy(const std::vector<TrainingExample>& manifest,
                          const TrainerModel& model) {
    std::map<std::string, Tensor> h_cache;
    return accuracy_over(manifest, model, h_cache);
}

void write_metrics(const std::string& path, const std::vector<StepMetric>& curve) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw TrainError("cannot write metrics " + path);
    for (const auto& m : curve) {
        json j{{"step", m.step}, {"task", task_name(m.task)}, {"loss", m.loss}};
        out << j.dump() << "\n";
    }
}

} // namespace esrt
