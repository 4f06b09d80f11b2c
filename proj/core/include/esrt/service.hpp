#pragma once

#include <atomic>
#include <memory>
#include <thread>
#include <vector>

#include "esrt/cache.hpp"
#include "esrt/cloud.hpp"
#include "esrt/net.hpp"

namespace esrt {

struct DecodeOptions {
    int beam_width = 1;  // 1 = greedy; the beam-search ablation uses 5
    int64_t max_new_tokens = 256;
    int64_t min_new_tokens = 1;
};

// The cloud half of split inference. Model weights and vocabulary are
// read-only shared state; the feature cache carries its own lock; every
// connection is handled independently.
class CloudService {
public:
    CloudService(CloudModel model, CacheConfig cache_cfg, DecodeOptions opts = {});

    // One request against an open channel. CACHE_REF misses renegotiate via
    // NEED_FEATURES on the same channel. Never throws on bad input; protocol
    // errors come back as ERROR frames.
    wire::Envelope handle_request(const wire::Envelope& request, FrameChannel& channel);

    // decode + dispatch, mapping decode failures to ERROR frames
    std::vector<uint8_t> handle_frame(std::span<const uint8_t> frame, FrameChannel& channel);

    // blocking connection loop; returns when another thread calls stop()
    void serve(const std::string& host, uint16_t port);
    // background variant for in-process use
    void start(const std::string& host, uint16_t port);
    void stop();
    uint16_t bound_port() const { return listener_.bound_port(); }

    FeatureCache& cache() { return cache_; }
    const CloudModel& model() const { return model_; }

private:
    std::string run_inference(const Tensor& z, std::span<const uint32_t> prompt_ids) const;

    CloudModel model_;
    FeatureCache cache_;
    DecodeOptions opts_;

    TcpListener listener_;
    std::atomic<bool> running_{false};
    std::thread accept_thread_;
    std::vector<std::thread> conn_threads_;
    std::mutex conn_mu_;
};

} // namespace esrt
