#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "esrt/mel.hpp"
#include "esrt/model_io.hpp"
#include "esrt/trainer.hpp"
#include "testutil.hpp"

using namespace esrt;

namespace {

EncoderConfig train_encoder() {
    EncoderConfig cfg;
    cfg.d_w = 32;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.downsample = 20;
    return cfg;
}

QFormerConfig train_qformer() {
    QFormerConfig cfg;
    cfg.k_queries = 8;
    cfg.d_q = 32;
    cfg.layers = 1;
    cfg.heads = 2;
    return cfg;
}

CloudConfig train_cloud() {
    CloudConfig cfg;
    cfg.d_llm = 32;
    cfg.decoder_layers = 1;
    cfg.heads = 2;
    return cfg;
}

TrainerModel toy_model(uint64_t seed) {
    return TrainerModel::init(train_encoder(), train_qformer(), train_cloud(), seed);
}

TrainingExample example() {
    TrainingExample ex;
    ex.transcript = "badoki";
    ex.translation = "lumen";
    ex.src_code = "eng";
    ex.tgt_code = "deu";
    return ex;
}

Tensor toy_features(uint64_t seed) {
    Rng rng(seed);
    return Tensor::randn({150, 32}, rng);
}

} // namespace

TEST_CASE("stage weights match the fixed schedule and sum to one") {
    const CurriculumStage s1 = CurriculumStage::stage("I");
    CHECK(s1.task_weights.size() == 1);
    CHECK(s1.task_weights.at(TaskKind::ASR) == 1.0);

    const CurriculumStage s2 = CurriculumStage::stage("II");
    CHECK(s2.task_weights.at(TaskKind::ASR) == 0.2);
    CHECK(s2.task_weights.at(TaskKind::SMT) == 0.4);
    CHECK(s2.task_weights.at(TaskKind::SRT) == 0.4);

    const CurriculumStage s3 = CurriculumStage::stage("III");
    CHECK(s3.task_weights.at(TaskKind::ASR) == 0.2);
    CHECK(s3.task_weights.at(TaskKind::SRT) == 0.8);
    CHECK(s3.task_weights.count(TaskKind::SMT) == 0);

    for (const auto* id : {"I", "II", "III"}) {
        double sum = 0.0;
        for (const auto& [t, w] : CurriculumStage::stage(id).task_weights) sum += w;
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
    CHECK_THROWS_AS(CurriculumStage::stage("IV"), TrainError);
}

TEST_CASE("build_prompt produces the three task layouts") {
    const Vocabulary& vocab = Vocabulary::standard();
    const TrainingExample ex = example();
    const uint32_t eng = vocab.language_id("eng");
    const uint32_t deu = vocab.language_id("deu");

    const PromptTarget asr = build_prompt(TaskKind::ASR, ex, vocab);
    CHECK(asr.input_ids == std::vector<uint32_t>{eng});
    CHECK(asr.target_ids == vocab.tokenize("badoki"));

    const PromptTarget smt = build_prompt(TaskKind::SMT, ex, vocab);
    std::vector<uint32_t> smt_in = vocab.tokenize("badoki");
    smt_in.push_back(eng);
    smt_in.push_back(deu);
    CHECK(smt.input_ids == smt_in);
    CHECK(smt.target_ids == vocab.tokenize("lumen"));

    const PromptTarget srt = build_prompt(TaskKind::SRT, ex, vocab);
    CHECK(srt.input_ids == std::vector<uint32_t>{eng, deu});
    std::vector<uint32_t> srt_tgt = vocab.tokenize("badoki");
    srt_tgt.push_back(eng);
    srt_tgt.push_back(deu);
    const auto tr = vocab.tokenize("lumen");
    srt_tgt.insert(srt_tgt.end(), tr.begin(), tr.end());
    CHECK(srt.target_ids == srt_tgt);

    TrainingExample bad = ex;
    bad.tgt_code = "zzz";
    CHECK_THROWS_AS(build_prompt(TaskKind::SRT, bad, vocab), VocabError);
}

TEST_CASE("SRT targets parse back to the original fields") {
    const Vocabulary& vocab = Vocabulary::standard();
    const TrainingExample ex = example();
    const PromptTarget srt = build_prompt(TaskKind::SRT, ex, vocab);
    const SrtOutput out = parse_srt_output(srt.target_ids, vocab);
    CHECK(out.transcript == ex.transcript);
    CHECK(out.translation == ex.translation);
    CHECK(*vocab.language_code(out.src_token) == ex.src_code);
    CHECK(*vocab.language_code(out.tgt_token) == ex.tgt_code);
}

TEST_CASE("stage I always samples ASR") {
    const CurriculumStage stage = CurriculumStage::stage("I");
    for (uint64_t seed : {1ull, 42ull, 999ull}) {
        Rng rng(seed);
        for (int i = 0; i < 100; ++i) CHECK(sample_task(stage, rng) == TaskKind::ASR);
    }
}

TEST_CASE("stage II sampling frequencies are within 2 percent over 1e5 draws") {
    const CurriculumStage stage = CurriculumStage::stage("II");
    Rng rng(4242);
    std::map<TaskKind, int> counts;
    const int n = 100000;
    for (int i = 0; i < n; ++i) counts[sample_task(stage, rng)]++;
    CHECK(std::abs(counts[TaskKind::ASR] / static_cast<double>(n) - 0.2) < 0.02);
    CHECK(std::abs(counts[TaskKind::SMT] / static_cast<double>(n) - 0.4) < 0.02);
    CHECK(std::abs(counts[TaskKind::SRT] / static_cast<double>(n) - 0.4) < 0.02);
}

TEST_CASE("weighted_loss is the weight-scaled sum") {
    const CurriculumStage s3 = CurriculumStage::stage("III");
    CHECK(weighted_loss({{TaskKind::ASR, 1.0}, {TaskKind::SRT, 1.0}}, s3) ==
          doctest::Approx(1.0));
    // all weight on one task passes that loss through
    const CurriculumStage s1 = CurriculumStage::stage("I");
    CHECK(weighted_loss({{TaskKind::ASR, 3.25}}, s1) == doctest::Approx(3.25));

    CHECK_THROWS_AS(weighted_loss({{TaskKind::SMT, 1.0}}, s3), TrainError);
    CHECK_THROWS_AS(
        weighted_loss({{TaskKind::ASR, std::numeric_limits<double>::quiet_NaN()}}, s1),
        TrainError);
}

TEST_CASE("mixed-stage gradient equals the weighted sum of per-task gradients") {
    TrainerModel model = toy_model(31);
    const Tensor h = toy_features(32);
    const TrainingExample ex = example();
    const CurriculumStage stage = CurriculumStage::stage("II");

    std::map<std::string, Tensor> mixed;
    const double mixed_loss =
        loss_and_grads(model, stage, h, ex, TrainConfig::Mode::Mix, &mixed);

    std::map<std::string, Tensor> combined;
    double combined_loss = 0.0;
    for (const auto& [task, w] : stage.task_weights) {
        std::map<std::string, Tensor> grads;
        combined_loss += w * task_loss_and_grads(model, h, ex, task, false, &grads);
        for (const auto& [name, g] : grads) {
            auto [it, fresh] = combined.emplace(name, Tensor(g.shape));
            for (size_t i = 0; i < g.data.size(); ++i) {
                it->second.data[i] += static_cast<float>(w) * g.data[i];
            }
        }
    }

    CHECK(mixed_loss == doctest::Approx(combined_loss).epsilon(1e-6));
    REQUIRE(mixed.size() == combined.size());
    for (const auto& [name, g] : mixed) {
        REQUIRE(combined.count(name) == 1);
        CHECK(testutil::max_abs_diff(g, combined.at(name)) < 1e-6f);
    }
}

TEST_CASE("weighted-loss gradient matches finite differences") {
    TrainerModel model = toy_model(33);
    const Tensor h = toy_features(34);
    TrainingExample ex = example();
    ex.transcript = "ba";  // short targets keep float noise low
    ex.translation = "ki";
    const CurriculumStage stage = CurriculumStage::stage("II");

    std::map<std::string, Tensor> grads;
    loss_and_grads(model, stage, h, ex, TrainConfig::Mode::Mix, &grads);

    // probe two small trainable tensors end to end
    for (const std::string name : {"mlp.fc2.bias", "qformer.queries"}) {
        REQUIRE(grads.count(name) == 1);
        Tensor* target = nullptr;
        visit_params(model.cloud.mlp, ParamVisitor([&](const std::string& n, Tensor& t) {
                         if (n == name) target = &t;
                     }));
        visit_params(model.edge.qformer, ParamVisitor([&](const std::string& n, Tensor& t) {
                         if (n == name) target = &t;
                     }));
        REQUIRE(target != nullptr);

        const Tensor original = *target;
        const auto f = [&](const Tensor& probe) {
            *target = probe;
            const double loss =
                loss_and_grads(model, stage, h, ex, TrainConfig::Mode::Mix, nullptr);
            *target = original;
            return loss;
        };
        const double err = nn::grad_check(f, original, grads.at(name), 1e-2f);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("lora zero-init leaves pre-training outputs identical") {
    TrainerModel with = toy_model(35);
    TrainerModel without = toy_model(35);
    attach_lora(with.cloud, 4, 8.0f, 99);

    testutil::TmpDir tmp("lora_corpus");
    const auto manifest = make_synthetic_corpus(tmp.str(), 4, 5);
    CHECK(asr_token_accuracy(manifest, with) == asr_token_accuracy(manifest, without));
}

TEST_CASE("attach_lora validates the rank") {
    TrainerModel model = toy_model(36);
    CHECK_THROWS_AS(attach_lora(model.cloud, 1000, 2.0f, 1), ConfigError);
}

TEST_CASE("synthetic corpus is deterministic and decodable") {
    testutil::TmpDir tmp_a("corpus_a");
    testutil::TmpDir tmp_b("corpus_b");
    const auto a = make_synthetic_corpus(tmp_a.str(), 6, 123);
    const auto b = make_synthetic_corpus(tmp_b.str(), 6, 123);
    REQUIRE(a.size() == 6);
    const Vocabulary& vocab = Vocabulary::standard();
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].transcript == b[i].transcript);
        CHECK(a[i].translation == b[i].translation);
        CHECK(a[i].src_code == b[i].src_code);
        vocab.language_id(a[i].src_code);
        vocab.language_id(a[i].tgt_code);
        const AudioClip clip = decode_wav(testutil::read_file(a[i].audio_path));
        CHECK(clip.duration_s() >= 3.0);
        CHECK(clip.duration_s() <= 6.0);
    }

    // manifest io round trip
    const auto loaded = load_manifest((tmp_a.path / "manifest.jsonl").string());
    REQUIRE(loaded.size() == a.size());
    CHECK(loaded[0].transcript == a[0].transcript);
    CHECK(loaded[0].audio_path == a[0].audio_path);
}

TEST_CASE("training is deterministic given the seed") {
    testutil::TmpDir tmp("det_corpus");
    const auto manifest = make_synthetic_corpus(tmp.str(), 4, 9);
    TrainConfig cfg;
    cfg.steps = 12;
    cfg.lr = 0.05f;
    cfg.seed = 77;

    TrainerModel a = toy_model(70);
    const TrainReport ra = train_stage(CurriculumStage::stage("II"), manifest, a, cfg);
    TrainerModel b = toy_model(70);
    const TrainReport rb = train_stage(CurriculumStage::stage("II"), manifest, b, cfg);

    REQUIRE(ra.curve.size() == rb.curve.size());
    for (size_t i = 0; i < ra.curve.size(); ++i) {
        CHECK(ra.curve[i].loss == rb.curve[i].loss);
        CHECK(ra.curve[i].task == rb.curve[i].task);
    }
    CHECK(snapshot_params(a.edge.qformer) == snapshot_params(b.edge.qformer));
}

TEST_CASE("frozen modules stay bit-identical through every stage") {
    testutil::TmpDir tmp("frozen_corpus");
    const auto manifest = make_synthetic_corpus(tmp.str(), 4, 11);
    TrainerModel model = toy_model(71);
    const auto encoder_before = snapshot_params(model.edge.encoder);
    const auto decoder_before = snapshot_params(model.cloud.decoder);

    TrainConfig cfg;
    cfg.steps = 6;
    cfg.lr = 0.05f;
    cfg.seed = 5;
    cfg.lora_r = 4;
    cfg.lora_alpha = 8.0f;
    for (const auto* stage : {"I", "II", "III"}) {
        train_stage(CurriculumStage::stage(stage), manifest, model, cfg);
        CHECK(snapshot_params(model.edge.encoder) == encoder_before);
        CHECK(snapshot_params(model.cloud.decoder) == decoder_before);
    }
    // stage III attached adapters and trained them
    REQUIRE(model.cloud.lora.has_value());
    bool lora_moved = false;
    for (const auto& blk : *model.cloud.lora) {
        for (const auto& ad : blk.adapters) {
            for (float v : ad.b.data) lora_moved = lora_moved || v != 0.0f;
        }
    }
    CHECK(lora_moved);
}

TEST_CASE("adapter weights move while training") {
    testutil::TmpDir tmp("move_corpus");
    const auto manifest = make_synthetic_corpus(tmp.str(), 4, 13);
    TrainerModel model = toy_model(72);
    const auto qformer_before = snapshot_params(model.edge.qformer);
    const auto mlp_before = snapshot_params(model.cloud.mlp);

    TrainConfig cfg;
    cfg.steps = 8;
    cfg.lr = 0.05f;
    cfg.seed = 6;
    train_stage(CurriculumStage::stage("I"), manifest, model, cfg);
    CHECK(snapshot_params(model.edge.qformer) != qformer_before);
    CHECK(snapshot_params(model.cloud.mlp) != mlp_before);
}

TEST_CASE("loss decreases over a short stage I run") {
    testutil::TmpDir tmp("descent_corpus");
    const auto manifest = make_synthetic_corpus(tmp.str(), 4, 21);
    TrainerModel model = toy_model(73);
    TrainConfig cfg;
    cfg.steps = 150;
    cfg.lr = 0.2f;
    cfg.seed = 3;
    const TrainReport report = train_stage(CurriculumStage::stage("I"), manifest, model, cfg);
    REQUIRE(report.curve.size() == 150);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 20; ++i) {
        head += report.curve[static_cast<size_t>(i)].loss;
        tail += report.curve[report.curve.size() - 1 - static_cast<size_t>(i)].loss;
    }
    CHECK(tail < head);
}

TEST_CASE("empty manifest and divergence are rejected with diagnostics") {
    TrainerModel model = toy_model(74);
    TrainConfig cfg;
    cfg.steps = 1;
    CHECK_THROWS_AS(train_stage(CurriculumStage::stage("I"), {}, model, cfg), TrainError);

    testutil::TmpDir tmp("diverge_corpus");
    const auto manifest = make_synthetic_corpus(tmp.str(), 2, 15);
    cfg.steps = 50;
    cfg.lr = 1e30f;  // guaranteed overflow
    cfg.seed = 1;
    CHECK_THROWS_AS(train_stage(CurriculumStage::stage("I"), manifest, model, cfg), TrainError);
}

TEST_CASE("mix mode emits one metric line per stage task") {
    testutil::TmpDir tmp("mix_corpus");
    const auto manifest = make_synthetic_corpus(tmp.str(), 2, 17);
    TrainerModel model = toy_model(75);
    TrainConfig cfg;
    cfg.steps = 3;
    cfg.lr = 0.02f;
    cfg.mode = TrainConfig::Mode::Mix;
    const TrainReport report =
        train_stage(CurriculumStage::stage("II"), manifest, model, cfg);
    CHECK(report.curve.size() == 9);  // 3 steps x 3 tasks

    testutil::TmpDir out("metrics");
    write_metrics(out.file("m.jsonl"), report.curve);
    const auto lines = testutil::read_file(out.file("m.jsonl"));
    int newlines = 0;
    for (uint8_t c : lines) newlines += c == '\n';
    CHECK(newlines == 9);
}

TEST_CASE("trainer forward agrees with the inference path") {
    // the autograd graph and the plain decoder must compute the same loss
    TrainerModel model = toy_model(76);
    attach_lora(model.cloud, 4, 8.0f, 50);
    // push the adapters off zero so the lora path is exercised
    for (auto& blk : *model.cloud.lora) {
        for (auto& ad : blk.adapters) {
            Rng r(8);
            for (auto& v : ad.b.data) v = 0.05f * r.next_gaussian();
        }
    }
    const Tensor h = toy_features(77);
    const TrainingExample ex = example();
    const Vocabulary& vocab = Vocabulary::standard();

    std::map<std::string, Tensor> grads;
    const double ag_loss = task_loss_and_grads(model, h, ex, TaskKind::ASR, true, &grads);

    // inference-path loss computed by hand
    const CompressedFeatures z =
        compress_qformer(h, model.edge.qformer_cfg, model.edge.qformer, CacheKey{});
    const Tensor zmlp = project_mlp(z.z, model.cloud.mlp);
    const PromptTarget pt = build_prompt(TaskKind::ASR, ex, vocab);
    std::vector<uint32_t> targets = pt.target_ids;
    targets.push_back(vocab.eos_id());
    std::vector<uint32_t> seq = pt.input_ids;
    seq.insert(seq.end(), targets.begin(), targets.end() - 1);
    const Tensor p = embed_prompt(seq, model.cloud.decoder.embedding);
    const FusedInput fused = fuse(zmlp, p);
    const Tensor hidden =
        decoder_forward(fused.x, model.cloud.cfg, model.cloud.decoder, &*model.cloud.lora);
    const Tensor logits = output_logits(hidden, model.cloud.decoder);

    const int64_t base = fused.k + static_cast<int64_t>(pt.input_ids.size()) - 1;
    double loss = 0.0;
    for (size_t i = 0; i < targets.size(); ++i) {
        const float* row =
            logits.data.data() + (base + static_cast<int64_t>(i)) * logits.shape[1];
        double mx = row[0];
        for (int64_t t = 1; t < logits.shape[1]; ++t) mx = std::max(mx, (double)row[t]);
        double sum = 0.0;
        for (int64_t t = 0; t < logits.shape[1]; ++t) sum += std::exp(row[t] - mx);
        loss -= row[targets[i]] - mx - std::log(sum);
    }
    loss /= static_cast<double>(targets.size());
    CHECK(ag_loss == doctest::Approx(loss).epsilon(1e-4));
}
