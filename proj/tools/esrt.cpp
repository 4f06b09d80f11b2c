// esrt: single binary for the edge-cloud split speech translation pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 network error.

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

#include "esrt/audio.hpp"
#include "esrt/bench.hpp"
#include "esrt/client.hpp"
#include "esrt/config.hpp"
#include "esrt/model_io.hpp"
#include "esrt/service.hpp"
#include "esrt/trainer.hpp"

namespace {

using namespace esrt;

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

CloudService* g_service = nullptr;

void handle_signal(int) {
    if (g_service) g_service->stop();
}

struct Options {
    std::string config_path;
    bool seed_set = false;
    uint64_t seed = 0;
    std::string host;
    int port = -1;
    int tokens = 0;  // 0 = keep config
    std::string cache_dir;
    int beam = 0;  // 0 = keep config

    GlobalConfig resolve() const {
        GlobalConfig cfg;
        std::string path = config_path;
        if (path.empty()) {
            if (const char* env = std::getenv("ESRT_CONFIG")) path = env;
        }
        if (!path.empty()) cfg = GlobalConfig::load(path);
        if (seed_set) cfg.seed = seed;
        if (!host.empty()) cfg.host = host;
        if (port >= 0) cfg.port = static_cast<uint16_t>(port);
        if (tokens > 0) cfg.qformer.k_queries = tokens;
        if (!cache_dir.empty()) cfg.cache.dir = cache_dir;
        if (beam > 0) cfg.decode.beam_width = beam;
        cfg.validate();
        return cfg;
    }
};

int cmd_edge_encode(const Options& opt, const std::string& wav_path, const std::string& out_path,
                    const std::string& src, const std::string& tgt) {
    const GlobalConfig cfg = opt.resolve();
    const EdgeModel model = build_edge_model(cfg);
    const AudioClip clip = decode_wav(read_file(wav_path));
    const CompressedFeatures features = model.encode(clip);
    const Vocabulary& vocab = Vocabulary::standard();
    const std::vector<uint32_t> prompt{vocab.language_id(src), vocab.language_id(tgt)};
    const auto frame = wire::encode_envelope(
        wire::make_features(features.cache_key, 1, static_cast<uint16_t>(features.k),
                            static_cast<uint16_t>(features.d_q), features.z.data, prompt));
    write_file(out_path, frame);
    std::cout << "wrote " << frame.size() << " bytes to " << out_path << " (key "
              << key_hex(features.cache_key).substr(0, 16) << "...)\n";
    return 0;
}

int cmd_cloud_serve(const Options& opt) {
    const GlobalConfig cfg = opt.resolve();
    CloudService service(build_cloud_model(cfg), cfg.cache, cfg.decode);
    g_service = &service;
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    std::cout << "serving on " << cfg.host << ":" << cfg.port << " (cache dir "
              << (cfg.cache.dir.empty() ? "<memory>" : cfg.cache.dir) << ")\n"
              << std::flush;
    service.serve(cfg.host, cfg.port);
    g_service = nullptr;
    std::cout << "shut down, cache flushed\n";
    return 0;
}

void print_translation(const TranslateResult& r) {
    if (r.is_error) {
        std::cout << r.target_code << ": <error> " << r.response_text << "\n";
        return;
    }
    std::cout << r.target_code << ": " << r.response_text << "\n";
}

int cmd_translate(const Options& opt, const std::string& wav_path, const std::string& src,
                  const std::vector<std::string>& tgts) {
    const GlobalConfig cfg = opt.resolve();
    const Vocabulary& vocab = Vocabulary::standard();
    vocab.language_id(src);  // validate before any network traffic
    for (const auto& t : tgts) vocab.language_id(t);

    const EdgeModel model = build_edge_model(cfg);
    const AudioClip clip = decode_wav(read_file(wav_path));
    EdgeClient client(model, cfg.host, cfg.port);
    const auto results = client.translate(clip, src, tgts);
    for (const auto& r : results) print_translation(r);

    const TrafficCounter& tc = client.traffic();
    std::cout << "traffic: features_frames=" << tc.sent_of(wire::MsgType::Features).frames
              << " feature_payload_bytes=" << tc.sent_of(wire::MsgType::Features).payload_bytes
              << " cache_ref_frames=" << tc.sent_of(wire::MsgType::CacheRef).frames
              << " sent_bytes=" << tc.total_sent_bytes()
              << " received_bytes=" << tc.total_received_bytes() << "\n";
    return 0;
}

int cmd_train(const Options& opt, const std::string& stage_id, int64_t steps,
              const std::string& manifest_path, int synth_count, const std::string& out_dir,
              float lr, const std::string& mode_str, const std::string& metrics_path) {
    const GlobalConfig cfg = opt.resolve();
    std::vector<TrainingExample> manifest;
    if (synth_count > 0) {
        manifest = make_synthetic_corpus(out_dir, synth_count, cfg.seed);
        std::cout << "wrote synthetic corpus (" << manifest.size() << " examples) under "
                  << out_dir << "\n";
    } else if (!manifest_path.empty()) {
        manifest = load_manifest(manifest_path);
    } else {
        throw Error("train needs --manifest or --synth");
    }

    if (steps == 0) {
        if (!metrics_path.empty()) write_metrics(metrics_path, {});
        std::cout << "0 steps requested, nothing to do\n";
        return 0;
    }

    TrainerModel model = TrainerModel::init(cfg.encoder, cfg.qformer, cfg.cloud, cfg.seed);
    TrainConfig tc;
    tc.steps = steps;
    tc.lr = lr;
    tc.seed = cfg.seed;
    tc.mode = mode_str == "mix" ? TrainConfig::Mode::Mix : TrainConfig::Mode::Sample;
    const CurriculumStage stage = CurriculumStage::stage(stage_id);
    const TrainReport report = train_stage(stage, manifest, model, tc);
    if (!metrics_path.empty()) write_metrics(metrics_path, report.curve);
    for (const auto& m : report.curve) {
        std::cout << "step=" << m.step << " task=" << task_name(m.task) << " loss=" << m.loss
                  << "\n";
    }
    std::cout << "final_asr_token_accuracy=" << report.final_asr_token_accuracy << "\n";
    return 0;
}

int cmd_bench(const Options&, int64_t clips, double audio_mb, int tokens, int langs,
              double link_mbps, bool simulate, int clients, const std::string& mode_str,
              int n_clips_sim, double duration) {
    if (simulate) {
        bench::TransferMode mode = bench::TransferMode::Tensor;
        if (mode_str == "audio") mode = bench::TransferMode::Audio;
        else if (mode_str == "tensor_cached") mode = bench::TransferMode::TensorCached;
        else if (mode_str != "tensor") throw Error("unknown simulate mode " + mode_str);
        std::vector<bench::ClipSpec> clips_spec;
        for (int i = 0; i < n_clips_sim; ++i) {
            clips_spec.push_back({duration, i});
        }
        const auto res = bench::simulate_session(clients, link_mbps, mode, clips_spec,
                                                 tokens > 0 ? tokens : 40);
        std::cout << "scenario:simulate clients:" << clients << " mode:" << mode_str
                  << " link_mbps:" << link_mbps << "\n"
                  << "total_time_s:" << res.total_time_s
                  << " bytes:" << res.total_bytes_delivered
                  << " throughput_mbps:" << res.aggregate_throughput_mbps << "\n";
        return 0;
    }
    bench::CorpusStats stats;
    stats.n_clips = clips;
    stats.total_audio_bytes = static_cast<int64_t>(audio_mb * 1e6);
    stats.tokens_per_clip = tokens > 0 ? tokens : 80;
    const auto report = bench::bandwidth_report(stats, langs, link_mbps);
    std::cout << bench::format_report(report);
    return 0;
}

int cmd_probe(const Options& opt, const std::string& pairs_spec, int epochs, int64_t k,
              int64_t d_q, int64_t hidden, float lr) {
    const GlobalConfig cfg = opt.resolve();
    bench::ProbeConfig pc;
    pc.k = k;
    pc.d_q = d_q;
    pc.hidden = hidden;
    pc.epochs = epochs;
    pc.lr = lr;
    pc.seed = cfg.seed;

    const std::string prefix = "synthetic:";
    if (pairs_spec.rfind(prefix, 0) != 0) {
        throw Error("only synthetic:<count> pair sources are supported, got " + pairs_spec);
    }
    const int count = std::stoi(pairs_spec.substr(prefix.size()));
    const auto pairs = bench::synthetic_probe_pairs(count, pc, cfg.seed);
    const auto report = bench::reconstruct_probe(pairs, pc);
    std::cout << bench::format_probe(report);
    return 0;
}

int cmd_inspect(const std::vector<std::string>& frame_files) {
    std::vector<std::vector<uint8_t>> frames;
    for (const auto& f : frame_files) frames.push_back(read_file(f));
    const auto findings = bench::inspect_wire(frames);
    std::cout << bench::format_findings(findings);
    for (const auto& f : findings) {
        if (!f.pass) return 2;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"edge-cloud split speech translation testbed"};
    app.require_subcommand(1);

    Options opt;
    app.add_option("--config", opt.config_path, "JSON config file (or $ESRT_CONFIG)");
    app.add_option("--seed", opt.seed, "PRNG seed override")->each([&](const std::string&) {
        opt.seed_set = true;
    });
    app.add_option("--host", opt.host, "service host");
    app.add_option("--port", opt.port, "service port");
    app.add_option("--tokens", opt.tokens, "query tokens per clip (paper scale: 40 or 80)");
    app.add_option("--cache-dir", opt.cache_dir, "feature cache directory");
    app.add_option("--beam", opt.beam, "beam width (1 = greedy, ablation uses 5)");

    // edge-encode
    auto* enc = app.add_subcommand("edge-encode", "encode a WAV into a FEATURES frame file");
    std::string wav_path, out_path, src = "eng", tgt = "deu";
    enc->add_option("--wav", wav_path, "input WAV (PCM16 mono 16 kHz)")->required();
    enc->add_option("--out", out_path, "output frame file")->required();
    enc->add_option("--src", src, "source language code");
    enc->add_option("--tgt", tgt, "target language code");

    // cloud-serve
    auto* serve = app.add_subcommand("cloud-serve", "run the cloud inference service");

    // translate
    auto* tr = app.add_subcommand("translate", "translate a WAV into one or more languages");
    std::string tr_wav, tr_src = "eng";
    std::vector<std::string> tr_tgts;
    tr->add_option("--wav", tr_wav, "input WAV")->required();
    tr->add_option("--src", tr_src, "source language code");
    tr->add_option("--tgt", tr_tgts, "target language code(s)")->required();

    // train
    auto* train = app.add_subcommand("train", "run the curriculum trainer");
    std::string stage_id = "I", manifest_path, out_dir = "synth_corpus", mode_str = "sample",
                metrics_path;
    int64_t steps = 100;
    int synth_count = 0;
    float lr = 0.05f;
    train->add_option("--stage", stage_id, "curriculum stage: I, II or III");
    train->add_option("--steps", steps, "training steps");
    train->add_option("--manifest", manifest_path, "JSONL manifest");
    train->add_option("--synth", synth_count, "generate a synthetic corpus of N examples");
    train->add_option("--out", out_dir, "directory for the synthetic corpus");
    train->add_option("--lr", lr, "learning rate");
    train->add_option("--mode", mode_str, "task weighting: sample or mix");
    train->add_option("--metrics", metrics_path, "write JSONL metrics here");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "bandwidth arithmetic and link simulation");
    int64_t clips = 647;
    double audio_mb = 392.0, link_mbps = 100.0, duration = 30.0;
    int langs = 1, clients = 1, n_clips_sim = 1;
    bool simulate = false;
    std::string sim_mode = "tensor";
    bench_cmd->add_option("--clips", clips, "corpus clip count");
    bench_cmd->add_option("--audio-mb", audio_mb, "total audio megabytes (10^6)");
    bench_cmd->add_option("--langs", langs, "number of target languages");
    bench_cmd->add_option("--link-mbps", link_mbps, "link capacity");
    bench_cmd->add_flag("--simulate", simulate, "run the concurrent-session link model");
    bench_cmd->add_option("--clients", clients, "concurrent clients (simulate)");
    bench_cmd->add_option("--mode", sim_mode, "simulate mode: audio, tensor, tensor_cached");
    bench_cmd->add_option("--n-clips", n_clips_sim, "clips per client (simulate)");
    bench_cmd->add_option("--duration", duration, "clip duration seconds (simulate)");

    // probe
    auto* probe = app.add_subcommand("probe", "reconstruction-attack probe");
    std::string pairs_spec = "synthetic:64";
    int epochs = 10;
    int64_t probe_k = 40, probe_dq = 768, hidden = 32;
    float probe_lr = 1e-3f;
    probe->add_option("--pairs", pairs_spec, "pair source, e.g. synthetic:64");
    probe->add_option("--epochs", epochs, "training epochs");
    probe->add_option("--k", probe_k, "feature rows");
    probe->add_option("--d-q", probe_dq, "feature dim");
    probe->add_option("--hidden", hidden, "probe hidden width");
    probe->add_option("--lr", probe_lr, "probe learning rate");

    // inspect
    auto* inspect = app.add_subcommand("inspect", "run wire-privacy inspections on frame files");
    std::vector<std::string> frame_files;
    inspect->add_option("files", frame_files, "frame files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (enc->parsed()) return cmd_edge_encode(opt, wav_path, out_path, src, tgt);
        if (serve->parsed()) return cmd_cloud_serve(opt);
        if (tr->parsed()) return cmd_translate(opt, tr_wav, tr_src, tr_tgts);
        if (train->parsed()) {
            return cmd_train(opt, stage_id, steps, manifest_path, synth_count, out_dir, lr,
                             mode_str, metrics_path);
        }
        if (bench_cmd->parsed()) {
            return cmd_bench(opt, clips, audio_mb, opt.tokens, langs, link_mbps, simulate,
                             clients, sim_mode, n_clips_sim, duration);
        }
        if (probe->parsed()) {
            return cmd_probe(opt, pairs_spec, epochs, probe_k, probe_dq, hidden, probe_lr);
        }
        if (inspect->parsed()) return cmd_inspect(frame_files);
    } catch (const NetError& e) {
        std::cerr << "network error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
