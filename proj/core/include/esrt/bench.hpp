#pragma once

#include <string>
#include <utility>
#include <vector>

#include "esrt/tensor.hpp"
#include "esrt/wire.hpp"

namespace esrt::bench {

struct CorpusStats {
    int64_t n_clips = 647;
    int64_t total_audio_bytes = 392'000'000;
    int64_t tokens_per_clip = 80;  // 80 or 40
    int64_t d_q = 768;

    void validate() const;
};

// Byte and transfer-time accounting for the audio-upload path versus the
// compressed-tensor path. Sizes are reported in three tiers (payload,
// envelope, base64) because published MB figures rarely say which they mean;
// MB here is always 10^6 bytes.
struct BandwidthReport {
    CorpusStats stats;
    int n_languages = 1;
    double link_mbps = 100.0;

    int64_t audio_bytes = 0;
    int64_t audio_b64_bytes = 0;
    int64_t tensor_payload_bytes = 0;   // BF16 elements only
    int64_t tensor_envelope_bytes = 0;  // framed
    int64_t tensor_b64_bytes = 0;       // base64 of the payload tier

    // per-language path totals: audio is resent per language, tensors are
    // uploaded once with one CACHE_REF frame per further language
    int64_t audio_path_total_bytes = 0;
    int64_t tensor_path_total_bytes = 0;
    int64_t cache_ref_bytes = 0;

    double audio_transfer_s = 0.0;   // base64 tier over the link
    double tensor_transfer_s = 0.0;
    double compression_ratio = 0.0;  // audio_b64 / tensor_b64
};

BandwidthReport bandwidth_report(const CorpusStats& stats, int n_languages, double link_mbps);

// one key:value map per scenario, line oriented
std::string format_report(const BandwidthReport& r);

double transfer_time_s(int64_t bytes, double link_mbps);

enum class TransferMode {
    Audio,
    Tensor,
    TensorCached,
};

struct ClipSpec {
    double duration_s = 30.0;
    int64_t content_id = 0;  // equal ids share one cache entry in TensorCached
};

struct SessionResult {
    double total_time_s = 0.0;
    int64_t total_bytes_requested = 0;
    int64_t total_bytes_delivered = 0;
    std::vector<double> client_finish_s;
    double aggregate_throughput_mbps = 0.0;
};

// Fluid-flow fair-sharing of one bottleneck link: every active transfer gets
// an equal capacity share, recomputed on each completion. Deterministic.
SessionResult simulate_session(int clients, double link_mbps, TransferMode mode,
                               const std::vector<ClipSpec>& clips_per_client,
                               int64_t tokens_per_clip = 40, int64_t d_q = 768,
                               int64_t prompt_len = 2);

struct ProbeConfig {
    int64_t k = 40;
    int64_t d_q = 768;
    int64_t hidden = 32;
    int epochs = 10;
    float lr = 1e-3f;
    uint64_t seed = 0;
};

struct ProbeReport {
    std::string model_desc;
    int64_t n_train = 0;
    int64_t n_val = 0;
    double train_mse = 0.0;          // per Mel element
    double val_mse = 0.0;
    double baseline_train_mse = 0.0; // predict the per-element train mean
    double baseline_val_mse = 0.0;
    double element_ratio = 0.0;      // (k*d_q) / (128*3000)
};

// Trains a small regression network Z -> Mel and reports reconstruction MSE
// against the predict-mean baseline. Descriptive only: no claim about attack
// success is made or asserted.
ProbeReport reconstruct_probe(const std::vector<std::pair<Tensor, Tensor>>& pairs,
                              const ProbeConfig& cfg);

// deterministic (Z, Mel) pairs with a weak linear relation so training has
// signal; shapes follow the config
std::vector<std::pair<Tensor, Tensor>> synthetic_probe_pairs(int count, const ProbeConfig& cfg,
                                                             uint64_t seed);

std::string format_probe(const ProbeReport& r);

struct WireFinding {
    std::string check;
    bool pass = false;
    std::string detail;
};

// §-by-§ wire inspections over captured frames:
//   language-leak   : no ASCII language code inside any header region
//   length-identical: FEATURES frames with equal header params have equal size
//   backend-independent: frames with equal content are byte-identical
//   bottleneck-ratio: reports 384000/(k*d) for FEATURES frames
std::vector<WireFinding> inspect_wire(const std::vector<std::vector<uint8_t>>& frames);

std::string format_findings(const std::vector<WireFinding>& findings);

} // namespace esrt::bench
