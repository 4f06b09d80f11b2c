#pragma once

#include <map>
#include <string>
#include <vector>

#include "esrt/autograd.hpp"
#include "esrt/cloud.hpp"
#include "esrt/encoder.hpp"
#include "esrt/rng.hpp"
#include "esrt/vocab.hpp"

namespace esrt {

struct TrainError : Error {
    using Error::Error;
};

enum class TaskKind {
    ASR,  // "<|src|>" -> transcript
    SMT,  // "{text}<|src|><|tgt|>" -> translation
    SRT,  // "<|src|><|tgt|>" -> "{text}<|src|><|tgt|>{translation}"
};

const char* task_name(TaskKind t);

struct CurriculumStage {
    std::string id;  // "I", "II" or "III"
    std::map<TaskKind, double> task_weights;

    // fixed three-stage schedule:
    //   I:   ASR 1.0
    //   II:  ASR 0.2, SMT 0.4, SRT 0.4
    //   III: ASR 0.2, SRT 0.8
    static CurriculumStage stage(const std::string& id);

    void validate() const;  // weights positive-keyed, sum to 1
    bool lora_enabled() const { return id == "III"; }
};

struct TrainingExample {
    std::string audio_path;
    std::string transcript;
    std::string translation;
    std::string src_code;
    std::string tgt_code;
};

// line-delimited JSON records {audio_path, transcript, translation, src, tgt}
std::vector<TrainingExample> load_manifest(const std::string& path);
void save_manifest(const std::string& path, const std::vector<TrainingExample>& examples);

// deterministic synthetic corpus: short tone WAVs plus fake transcripts and
// translations, written under dir
std::vector<TrainingExample> make_synthetic_corpus(const std::string& dir, int count,
                                                   uint64_t seed);

struct PromptTarget {
    std::vector<uint32_t> input_ids;   // instruction tokens fed before targets
    std::vector<uint32_t> target_ids;  // supervised tokens (no <eos>)
};

PromptTarget build_prompt(TaskKind task, const TrainingExample& ex, const Vocabulary& vocab);

TaskKind sample_task(const CurriculumStage& stage, Rng& rng);

// sum of w_t * L_t over the stage's tasks; keys must be a subset of the
// stage's task set and every loss finite
double weighted_loss(const std::map<TaskKind, double>& per_task_losses,
                     const CurriculumStage& stage);

struct TrainConfig {
    int64_t steps = 1000;
    float lr = 0.05f;
    uint64_t seed = 0;
    // Sample: one weight-sampled task per step. Mix: every stage task per
    // step, losses combined by weight.
    enum class Mode { Sample, Mix } mode = Mode::Sample;
    int64_t lora_r = 16;
    float lora_alpha = 32.0f;
};

struct StepMetric {
    int64_t step = 0;
    TaskKind task = TaskKind::ASR;
    double loss = 0.0;
};

struct TrainReport {
    std::vector<StepMetric> curve;
    double final_asr_token_accuracy = 0.0;  // teacher-forcing argmax accuracy
};

// the trainable split model: encoder frozen, speech adapter (Q-Former + MLP)
// trainable in every stage, decoder frozen with LoRA attached in stage III
struct TrainerModel {
    EdgeModel edge;
    CloudModel cloud;

    static TrainerModel init(const EncoderConfig& ecfg, const QFormerConfig& qcfg,
                             const CloudConfig& ccfg, uint64_t seed);
};

void attach_lora(CloudModel& cloud, int64_t r, float alpha, uint64_t seed);

TrainReport train_stage(const CurriculumStage& stage,
                        const std::vector<TrainingExample>& manifest, TrainerModel& model,
                        const TrainConfig& cfg);

// teacher-forcing token accuracy of the ASR task over the manifest
double asr_token_accuracy(const std::vector<TrainingExample>& manifest,
                          const TrainerModel& model);

// autograd forward of the full adapter+decoder stack on precomputed acoustic
// features; exposed so gradient checks can drive it directly
struct AgModelBinding;

// Test hooks: one loss evaluation on explicit acoustic features, with the
// gradients of every trainable tensor keyed by parameter name. The stage
// variant combines every stage task by weight (loss mixing); the task
// variant evaluates a single task.
double loss_and_grads(TrainerModel& model, const CurriculumStage& stage,
                      const Tensor& acoustic_features, const TrainingExample& ex,
                      TrainConfig::Mode mode,
                      std::map<std::string, Tensor>* grads_out);

double task_loss_and_grads(TrainerModel& model, const Tensor& acoustic_features,
                           const TrainingExample& ex, TaskKind task, bool lora_trainable,
                           std::map<std::string, Tensor>* grads_out);

void write_metrics(const std::string& path, const std::vector<StepMetric>& curve);

} // namespace esrt
