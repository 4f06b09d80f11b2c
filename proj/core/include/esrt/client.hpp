#pragma once

#include <string>
#include <vector>

#include "esrt/channel.hpp"
#include "esrt/encoder.hpp"
#include "esrt/net.hpp"
#include "esrt/vocab.hpp"

namespace esrt {

struct TranslateResult {
    std::string target_code;
    std::string response_text;  // "Y1<|src|><|tgt|>Y2" as produced by the cloud
    bool is_error = false;
};

// One-to-many translation over a single connection: the compressed features
// go up once (FEATURES), every further target reuses the cache (CACHE_REF).
// A NEED_FEATURES reply triggers exactly one resend.
class EdgeClient {
public:
    EdgeClient(const EdgeModel& model, std::string host, uint16_t port);

    std::vector<TranslateResult> translate(const AudioClip& clip, const std::string& src_code,
                                           const std::vector<std::string>& tgt_codes);

    // same flow against an arbitrary channel (tests use in-memory pipes)
    std::vector<TranslateResult> translate_over(FrameChannel& channel, const AudioClip& clip,
                                                const std::string& src_code,
                                                const std::vector<std::string>& tgt_codes);

    const TrafficCounter& traffic() const { return traffic_; }

private:
    const EdgeModel& model_;
    std::string host_;
    uint16_t port_;
    TrafficCounter traffic_;
};

} // namespace esrt
