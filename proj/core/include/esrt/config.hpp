#pragma once

#include <string>

#include "esrt/cache.hpp"
#include "esrt/cloud.hpp"
#include "esrt/encoder.hpp"
#include "esrt/service.hpp"

namespace esrt {

// Shared configuration for every subcommand. Dimensions default to desk-scale
// values; the paper-scale ones (d_w 1280, K 40/80, d_q 768, d_llm 3840) are
// only ever used for size arithmetic.
struct GlobalConfig {
    uint64_t seed = 42;
    EncoderConfig encoder;
    QFormerConfig qformer;
    CloudConfig cloud;
    CacheConfig cache;
    DecodeOptions decode;
    std::string host = "127.0.0.1";
    uint16_t port = 18490;

    // full-scale training settings, recorded for reference; the toy trainer
    // uses plain gradient descent (TrainConfig)
    std::string reference_optimizer = "adamw";
    double reference_lr = 5e-5;
    int64_t reference_warmup_steps = 1000;

    void validate() const;

    static GlobalConfig from_json_text(const std::string& text);
    static GlobalConfig load(const std::string& path);
    std::string to_json_text() const;
    void save(const std::string& path) const;
};

// deterministic model construction; edge and cloud draw from distinct
// seed streams so a shared config yields one jointly-consistent pair
EdgeModel build_edge_model(const GlobalConfig& cfg);
CloudModel build_cloud_model(const GlobalConfig& cfg);

} // namespace esrt
