#include "esrt/bench.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string_view>
#include <tuple>

#include "esrt/mel.hpp"
#include "esrt/nn.hpp"
#include "esrt/rng.hpp"
#include "esrt/vocab.hpp"

namespace esrt::bench {

void CorpusStats::validate() const {
    if (n_clips <= 0 || total_audio_bytes <= 0 || tokens_per_clip <= 0 || d_q <= 0) {
        throw Error("corpus stats must be positive");
    }
}

double transfer_time_s(int64_t bytes, double link_mbps) {
    return static_cast<double>(bytes) * 8.0 / (link_mbps * 1e6);
}

BandwidthReport bandwidth_report(const CorpusStats& stats, int n_languages, double link_mbps) {
    stats.validate();
    if (n_languages < 1 || link_mbps <= 0) {
        throw Error("bandwidth_report needs n_languages >= 1 and a positive link");
    }
    BandwidthReport r;
    r.stats = stats;
    r.n_languages = n_languages;
    r.link_mbps = link_mbps;

    r.audio_bytes = stats.total_audio_bytes;
    r.audio_b64_bytes = wire::base64_size(r.audio_bytes);

    const int64_t per_clip_payload = stats.tokens_per_clip * stats.d_q * 2;  // BF16
    const int64_t per_clip_envelope =
        static_cast<int64_t>(wire::frame_size(/*prompt_len=*/2, per_clip_payload));
    r.tensor_payload_bytes = stats.n_clips * per_clip_payload;
    r.tensor_envelope_bytes = stats.n_clips * per_clip_envelope;
    r.tensor_b64_bytes = stats.n_clips * wire::base64_size(per_clip_payload);

    const int64_t cache_ref_frame =
        wire::base64_size(static_cast<int64_t>(wire::frame_size(2, 0)));
    r.cache_ref_bytes = static_cast<int64_t>(n_languages - 1) * stats.n_clips * cache_ref_frame;
    r.audio_path_total_bytes = r.audio_b64_bytes * n_languages;
    r.tensor_path_total_bytes = r.tensor_b64_bytes + r.cache_ref_bytes;

    r.audio_transfer_s = transfer_time_s(r.audio_b64_bytes, link_mbps);
    r.tensor_transfer_s = transfer_time_s(r.tensor_b64_bytes, link_mbps);
    r.compression_ratio =
        static_cast<double>(r.audio_b64_bytes) / static_cast<double>(r.tensor_b64_bytes);
    return r;
}

std::string format_report(const BandwidthReport& r) {
    std::ostringstream os;
    auto mb = [](int64_t b) { return static_cast<double>(b) / 1e6; };
    os << "scenario:bandwidth clips:" << r.stats.n_clips << " tokens:" << r.stats.tokens_per_clip
       << " d_q:" << r.stats.d_q << " langs:" << r.n_languages << " link_mbps:" << r.link_mbps
       << "\n";
    os << "audio_mb:" << mb(r.audio_bytes) << " audio_b64_mb:" << mb(r.audio_b64_bytes)
       << " audio_path_total_mb:" << mb(r.audio_path_total_bytes)
       << " audio_time_s:" << r.audio_transfer_s << "\n";
    os << "tensor_payload_mb:" << mb(r.tensor_payload_bytes)
       << " tensor_envelope_mb:" << mb(r.tensor_envelope_bytes)
       << " tensor_b64_mb:" << mb(r.tensor_b64_bytes)
       << " tensor_path_total_mb:" << mb(r.tensor_path_total_bytes)
       << " tensor_time_s:" << r.tensor_transfer_s << "\n";
    os << "compression_ratio:" << r.compression_ratio << "\n";
    return os.str();
}

SessionResult simulate_session(int clients, double link_mbps, TransferMode mode,
                               const std::vector<ClipSpec>& clips_per_client,
                               int64_t tokens_per_clip, int64_t d_q, int64_t prompt_len) {
    if (clients < 1 || link_mbps <= 0 || clips_per_client.empty()) {
        throw Error("simulate_session needs positive parameters");
    }

    const int64_t features_frame = static_cast<int64_t>(
        wire::frame_size(static_cast<size_t>(prompt_len), tokens_per_clip * d_q * 2));
    const int64_t cache_ref_frame =
        static_cast<int64_t>(wire::frame_size(static_cast<size_t>(prompt_len), 0));

    // first transfer of a content id uploads features; later ones send refs.
    // Deterministic claim order: clip position, then client index.
    std::set<int64_t> seen;
    std::vector<std::vector<int64_t>> item_bytes(static_cast<size_t>(clients));
    for (size_t i = 0; i < clips_per_client.size(); ++i) {
        for (int c = 0; c < clients; ++c) {
            const ClipSpec& clip = clips_per_client[i];
            int64_t raw = 0;
            switch (mode) {
                case TransferMode::Audio:
                    raw = wire::audio_size(clip.duration_s);
                    break;
                case TransferMode::Tensor:
                    raw = features_frame;
                    break;
                case TransferMode::TensorCached:
                    raw = seen.insert(clip.content_id).second ? features_frame : cache_ref_frame;
                    break;
            }
            item_bytes[static_cast<size_t>(c)].push_back(wire::base64_size(raw));
        }
    }

    SessionResult res;
    res.client_finish_s.assign(static_cast<size_t>(clients), 0.0);
    for (const auto& q : item_bytes) {
        for (int64_t b : q) res.total_bytes_requested += b;
    }

    // fluid fair sharing: every unfinished client gets link/n_active
    const double link_bytes_s = link_mbps * 1e6 / 8.0;
    std::vector<size_t> next_item(static_cast<size_t>(clients), 0);
    std::vector<double> remaining(static_cast<size_t>(clients), 0.0);
    int active = 0;
    for (int c = 0; c < clients; ++c) {
        remaining[static_cast<size_t>(c)] =
            static_cast<double>(item_bytes[static_cast<size_t>(c)][0]);
        next_item[static_cast<size_t>(c)] = 1;
        ++active;
    }
    double now = 0.0;
    while (active > 0) {
        const double rate = link_bytes_s / active;
        // soonest completion among active flows
        double dt = std::numeric_limits<double>::infinity();
        for (int c = 0; c < clients; ++c) {
            if (remaining[static_cast<size_t>(c)] > 0.0) {
                dt = std::min(dt, remaining[static_cast<size_t>(c)] / rate);
            }
        }
        now += dt;
        for (int c = 0; c < clients; ++c) {
            auto ci = static_cast<size_t>(c);
            if (remaining[ci] <= 0.0) continue;
            remaining[ci] -= dt * rate;
            if (remaining[ci] > 1e-9) continue;
            // completed one item
            res.total_bytes_delivered += item_bytes[ci][next_item[ci] - 1];
            if (next_item[ci] < item_bytes[ci].size()) {
                remaining[ci] = static_cast<double>(item_bytes[ci][next_item[ci]]);
                ++next_item[ci];
            } else {
                remaining[ci] = 0.0;
                res.client_finish_s[ci] = now;
                --active;
            }
        }
    }
    res.total_time_s = now;
    res.aggregate_throughput_mbps =
        static_cast<double>(res.total_bytes_delivered) * 8.0 / (now * 1e6);
    return res;
}

namespace {

double mse_per_element(const Tensor& pred, const Tensor& target) {
    double acc = 0.0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const double e = static_cast<double>(pred.data[i]) - target.data[i];
        acc += e * e;
    }
    return acc / static_cast<double>(pred.data.size());
}

double mse_against_rowvec(const Tensor& rows, const std::vector<float>& mean) {
    const int64_t d = rows.shape[1];
    double acc = 0.0;
    for (int64_t r = 0; r < rows.shape[0]; ++r) {
        const float* row = rows.data.data() + r * d;
        for (int64_t j = 0; j < d; ++j) {
            const double e = static_cast<double>(row[j]) - mean[static_cast<size_t>(j)];
            acc += e * e;
        }
    }
    return acc / static_cast<double>(rows.numel());
}

} // namespace

ProbeReport reconstruct_probe(const std::vector<std::pair<Tensor, Tensor>>& pairs,
                              const ProbeConfig& cfg) {
    if (pairs.size() < 16) {
        throw Error("reconstruct_probe needs at least 16 pairs, got " +
                    std::to_string(pairs.size()));
    }
    const int64_t in_dim = cfg.k * cfg.d_q;
    const int64_t out_dim = static_cast<int64_t>(kNumMels) * kNumFrames;
    for (const auto& [z, mel] : pairs) {
        if (z.numel() != in_dim || mel.numel() != out_dim) {
            throw ShapeError("probe pair shapes " + shape_str(z.shape) + " / " +
                             shape_str(mel.shape) + " do not match config");
        }
    }

    const int64_t n_val = std::max<int64_t>(1, static_cast<int64_t>(pairs.size()) / 4);
    const int64_t n_train = static_cast<int64_t>(pairs.size()) - n_val;

    Tensor x_train({n_train, in_dim}), t_train({n_train, out_dim});
    Tensor x_val({n_val, in_dim}), t_val({n_val, out_dim});
    for (int64_t i = 0; i < n_train; ++i) {
        std::copy(pairs[static_cast<size_t>(i)].first.data.begin(),
                  pairs[static_cast<size_t>(i)].first.data.end(),
                  x_train.data.begin() + i * in_dim);
        std::copy(pairs[static_cast<size_t>(i)].second.data.begin(),
                  pairs[static_cast<size_t>(i)].second.data.end(),
                  t_train.data.begin() + i * out_dim);
    }
    for (int64_t i = 0; i < n_val; ++i) {
        const auto& p = pairs[static_cast<size_t>(n_train + i)];
        std::copy(p.first.data.begin(), p.first.data.end(), x_val.data.begin() + i * in_dim);
        std::copy(p.second.data.begin(), p.second.data.end(), t_val.data.begin() + i * out_dim);
    }

    // predict-mean baseline: per-element mean over the train split
    std::vector<float> mean(static_cast<size_t>(out_dim), 0.0f);
    for (int64_t i = 0; i < n_train; ++i) {
        const float* row = t_train.data.data() + i * out_dim;
        for (int64_t j = 0; j < out_dim; ++j) mean[static_cast<size_t>(j)] += row[j];
    }
    for (auto& v : mean) v /= static_cast<float>(n_train);

    // 2-layer GELU MLP trained with plain gradient descent; the output bias
    // starts at the train mean so training refines the baseline
    Rng rng(cfg.seed);
    Tensor w1 = Tensor::randn({in_dim, cfg.hidden}, rng, 0.02f);
    Tensor b1 = Tensor::zeros({cfg.hidden});
    Tensor w2 = Tensor::randn({cfg.hidden, out_dim}, rng, 0.02f);
    Tensor b2({out_dim}, std::vector<float>(mean.begin(), mean.end()));

    auto forward = [&](const Tensor& x, Tensor* h1_out, Tensor* act_out) {
        Tensor h1 = nn::matmul(x, w1);
        for (int64_t r = 0; r < h1.shape[0]; ++r) {
            for (int64_t j = 0; j < cfg.hidden; ++j) {
                h1.at(r, j) += b1.data[static_cast<size_t>(j)];
            }
        }
        Tensor act = nn::gelu(h1);
        Tensor y = nn::matmul(act, w2);
        for (int64_t r = 0; r < y.shape[0]; ++r) {
            float* row = y.data.data() + r * out_dim;
            for (int64_t j = 0; j < out_dim; ++j) row[j] += b2.data[static_cast<size_t>(j)];
        }
        if (h1_out) *h1_out = std::move(h1);
        if (act_out) *act_out = std::move(act);
        return y;
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Tensor h1, act;
        Tensor y = forward(x_train, &h1, &act);
        // dLoss/dY with loss = (1/(2N)) * sum of squared errors
        Tensor dy = y;
        const float inv_n = 1.0f / static_cast<float>(n_train);
        for (size_t i = 0; i < dy.data.size(); ++i) {
            dy.data[i] = (y.data[i] - t_train.data[i]) * inv_n;
        }
        Tensor dw2 = nn::matmul_tn(act, dy);
        std::vector<float> db2(static_cast<size_t>(out_dim), 0.0f);
        for (int64_t r = 0; r < n_train; ++r) {
            const float* row = dy.data.data() + r * out_dim;
            for (int64_t j = 0; j < out_dim; ++j) db2[static_cast<size_t>(j)] += row[j];
        }
        Tensor dact = nn::matmul_nt(dy, w2);
        Tensor dh1 = dact;
        for (size_t i = 0; i < dh1.data.size(); ++i) {
            dh1.data[i] *= nn::gelu_grad_scalar(h1.data[i]);
        }
        Tensor dw1 = nn::matmul_tn(x_train, dh1);
        std::vector<float> db1(static_cast<size_t>(cfg.hidden), 0.0f);
        for (int64_t r = 0; r < n_train; ++r) {
            const float* row = dh1.data.data() + r * cfg.hidden;
            for (int64_t j = 0; j < cfg.hidden; ++j) db1[static_cast<size_t>(j)] += row[j];
        }

        for (size_t i = 0; i < w1.data.size(); ++i) w1.data[i] -= cfg.lr * dw1.data[i];
        for (size_t i = 0; i < w2.data.size(); ++i) w2.data[i] -= cfg.lr * dw2.data[i];
        for (int64_t j = 0; j < cfg.hidden; ++j) {
            b1.data[static_cast<size_t>(j)] -= cfg.lr * db1[static_cast<size_t>(j)];
        }
        for (int64_t j = 0; j < out_dim; ++j) {
            b2.data[static_cast<size_t>(j)] -= cfg.lr * db2[static_cast<size_t>(j)];
        }
    }

    ProbeReport rep;
    rep.model_desc = "mlp " + std::to_string(in_dim) + "->" + std::to_string(cfg.hidden) + "->" +
                     std::to_string(out_dim) + " gelu, gd lr=" + std::to_string(cfg.lr) +
                     " epochs=" + std::to_string(cfg.epochs);
    rep.n_train = n_train;
    rep.n_val = n_val;
    rep.train_mse = mse_per_element(forward(x_train, nullptr, nullptr), t_train);
    rep.val_mse = mse_per_element(forward(x_val, nullptr, nullptr), t_val);
    rep.baseline_train_mse = mse_against_rowvec(t_train, mean);
    rep.baseline_val_mse = mse_against_rowvec(t_val, mean);
    rep.element_ratio = static_cast<double>(cfg.k * cfg.d_q) / static_cast<double>(out_dim);
    return rep;
}

std::vector<std::pair<Tensor, Tensor>> synthetic_probe_pairs(int count, const ProbeConfig& cfg,
                                                             uint64_t seed) {
    Rng rng(seed);
    std::vector<std::pair<Tensor, Tensor>> pairs;
    pairs.reserve(static_cast<size_t>(count));
    // fixed random readout so targets depend weakly on the features
    std::vector<float> readout(static_cast<size_t>(cfg.k));
    for (auto& v : readout) v = rng.next_gaussian();
    for (int i = 0; i < count; ++i) {
        Tensor z = Tensor::randn({cfg.k, cfg.d_q}, rng);
        std::vector<float> row_summary(static_cast<size_t>(cfg.k), 0.0f);
        for (int64_t r = 0; r < cfg.k; ++r) {
            float acc = 0.0f;
            for (int64_t c = 0; c < cfg.d_q; ++c) acc += z.at(r, c);
            row_summary[static_cast<size_t>(r)] = acc / static_cast<float>(cfg.d_q);
        }
        Tensor mel({kNumMels, kNumFrames});
        for (int64_t m = 0; m < kNumMels; ++m) {
            const float base = -8.0f + 0.05f * static_cast<float>(m % 16);
            const float drive = readout[static_cast<size_t>(m % cfg.k)] *
                                row_summary[static_cast<size_t>(m % cfg.k)];
            for (int64_t t = 0; t < kNumFrames; ++t) {
                mel.at(m, t) = base + drive + 0.1f * rng.next_gaussian();
            }
        }
        pairs.emplace_back(std::move(z), std::move(mel));
    }
    return pairs;
}

std::string format_probe(const ProbeReport& r) {
    std::ostringstream os;
    os << "scenario:probe model:\"" << r.model_desc << "\"\n";
    os << "n_train:" << r.n_train << " n_val:" << r.n_val << "\n";
    os << "train_mse:" << r.train_mse << " val_mse:" << r.val_mse << "\n";
    os << "baseline_train_mse:" << r.baseline_train_mse
       << " baseline_val_mse:" << r.baseline_val_mse << "\n";
    os << "element_ratio:" << r.element_ratio << "\n";
    return os.str();
}

std::vector<WireFinding> inspect_wire(const std::vector<std::vector<uint8_t>>& frames) {
    std::vector<WireFinding> findings;
    const auto& codes = Vocabulary::standard().language_codes();

    std::vector<wire::Envelope> decoded;
    decoded.reserve(frames.size());
    for (const auto& f : frames) decoded.push_back(wire::decode_envelope(f));  // may throw

    // (a) no ASCII language code inside a feature/ref frame's header region
    bool leak = false;
    std::string leak_detail;
    for (size_t i = 0; i < frames.size(); ++i) {
        const auto& msg = decoded[i];
        if (msg.msg_type != wire::MsgType::Features && msg.msg_type != wire::MsgType::CacheRef) {
            continue;
        }
        const size_t header_len =
            wire::kFixedHeaderBytes + 4 * msg.prompt_token_ids.size() + 4;
        const std::string_view header(reinterpret_cast<const char*>(frames[i].data()),
                                      std::min(header_len, frames[i].size()));
        for (const auto& code : codes) {
            if (header.find(code) != std::string_view::npos) {
                leak = true;
                leak_detail = "frame " + std::to_string(i) + " header contains \"" + code + "\"";
            }
        }
    }
    findings.push_back({"language-leak", !leak, leak ? leak_detail : "no ASCII language code in headers"});

    // (b) frames with equal header parameters have equal byte length
    std::map<std::tuple<uint8_t, uint8_t, uint16_t, uint16_t, uint16_t, size_t>,
             std::set<size_t>>
        lengths;
    for (size_t i = 0; i < frames.size(); ++i) {
        const auto& msg = decoded[i];
        if (msg.msg_type != wire::MsgType::Features && msg.msg_type != wire::MsgType::CacheRef) {
            continue;
        }
        lengths[{static_cast<uint8_t>(msg.msg_type), static_cast<uint8_t>(msg.dtype), msg.n,
                 msg.k, msg.d, msg.prompt_token_ids.size()}]
            .insert(frames[i].size());
    }
    bool const_len = true;
    std::string len_detail = "length-identical across durations";
    for (const auto& [key, sizes] : lengths) {
        if (sizes.size() > 1) {
            const_len = false;
            len_detail = "frames with identical header params differ in size";
        }
    }
    findings.push_back({"length-identical", const_len, len_detail});

    // (c) equal-content frames are byte-identical (no backend-dependent bytes)
    std::map<std::string, std::set<std::string>> by_content;
    for (size_t i = 0; i < frames.size(); ++i) {
        const auto& msg = decoded[i];
        if (msg.msg_type != wire::MsgType::Features && msg.msg_type != wire::MsgType::CacheRef) {
            continue;
        }
        std::string content(reinterpret_cast<const char*>(msg.cache_key.data()), 32);
        content.push_back(static_cast<char>(msg.msg_type));
        for (uint32_t id : msg.prompt_token_ids) content += std::to_string(id) + ",";
        content.append(msg.payload.begin(), msg.payload.end());
        by_content[content].insert(
            std::string(reinterpret_cast<const char*>(frames[i].data()), frames[i].size()));
    }
    bool backend_ok = true;
    for (const auto& [content, encodings] : by_content) {
        if (encodings.size() > 1) backend_ok = false;
    }
    findings.push_back({"backend-independent", backend_ok,
                        backend_ok ? "equal content encodes to identical bytes"
                                   : "same content produced different frames"});

    // (d) information-bottleneck ratio, reported per feature geometry
    std::set<std::pair<uint16_t, uint16_t>> geoms;
    for (const auto& msg : decoded) {
        if (msg.msg_type == wire::MsgType::Features) geoms.insert({msg.k, msg.d});
    }
    for (const auto& [k, d] : geoms) {
        const double ratio = static_cast<double>(kNumMels) * kNumFrames /
                             (static_cast<double>(k) * static_cast<double>(d));
        std::ostringstream os;
        os << "mel elements / feature elements = " << ratio << "x for k=" << k << " d=" << d;
        findings.push_back({"bottleneck-ratio", true, os.str()});
    }
    return findings;
}

std::string format_findings(const std::vector<WireFinding>& findings) {
    std::ostringstream os;
    for (const auto& f : findings) {
        os << f.check << ": " << (f.pass ? "pass" : "fail") << " (" << f.detail << ")\n";
    }
    return os.str();
}

} // namespace esrt::bench
