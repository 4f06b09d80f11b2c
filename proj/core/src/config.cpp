#include "esrt/config.hpp"

#include <json.hpp>

#include <fstream>

namespace esrt {

using json = nlohmann::json;

void GlobalConfig::validate() const {
    encoder.validate();
    qformer.validate(encoder.l_prime());
    cloud.validate();
    if (cache.capacity_bytes <= qformer.k_queries * qformer.d_q * 2) {
        throw ConfigError("cache capacity must exceed one feature entry");
    }
    if (decode.beam_width < 1) {
        throw ConfigError("beam width must be >= 1");
    }
}

GlobalConfig GlobalConfig::from_json_text(const std::string& text) {
    json j = json::parse(text);
    GlobalConfig cfg;
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("encoder")) {
        const auto& e = j["encoder"];
        cfg.encoder.d_w = e.value("d_w", cfg.encoder.d_w);
        cfg.encoder.layers = e.value("layers", cfg.encoder.layers);
        cfg.encoder.heads = e.value("heads", cfg.encoder.heads);
        cfg.encoder.downsample = e.value("downsample", cfg.encoder.downsample);
    }
    if (j.contains("qformer")) {
        const auto& q = j["qformer"];
        cfg.qformer.k_queries = q.value("k_queries", cfg.qformer.k_queries);
        cfg.qformer.d_q = q.value("d_q", cfg.qformer.d_q);
        cfg.qformer.layers = q.value("layers", cfg.qformer.layers);
        cfg.qformer.heads = q.value("heads", cfg.qformer.heads);
    }
    if (j.contains("cloud")) {
        const auto& c = j["cloud"];
        cfg.cloud.d_llm = c.value("d_llm", cfg.cloud.d_llm);
        cfg.cloud.decoder_layers = c.value("decoder_layers", cfg.cloud.decoder_layers);
        cfg.cloud.heads = c.value("heads", cfg.cloud.heads);
        cfg.cloud.max_new_tokens = c.value("max_new_tokens", cfg.cloud.max_new_tokens);
    }
    if (j.contains("cache")) {
        const auto& c = j["cache"];
        cfg.cache.capacity_bytes = c.value("capacity_bytes", cfg.cache.capacity_bytes);
        cfg.cache.dir = c.value("dir", cfg.cache.dir);
    }
    if (j.contains("decode")) {
        const auto& d = j["decode"];
        cfg.decode.beam_width = d.value("beam_width", cfg.decode.beam_width);
        cfg.decode.max_new_tokens = d.value("max_new_tokens", cfg.decode.max_new_tokens);
        cfg.decode.min_new_tokens = d.value("min_new_tokens", cfg.decode.min_new_tokens);
    }
    cfg.host = j.value("host", cfg.host);
    cfg.port = j.value("port", cfg.port);
    cfg.validate();
    return cfg;
}

GlobalConfig GlobalConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

std::string GlobalConfig::to_json_text() const {
    json j{
        {"seed", seed},
        {"encoder",
         {{"d_w", encoder.d_w},
          {"layers", encoder.layers},
          {"heads", encoder.heads},
          {"downsample", encoder.downsample}}},
        {"qformer",
         {{"k_queries", qformer.k_queries},
          {"d_q", qformer.d_q},
          {"layers", qformer.layers},
          {"heads", qformer.heads}}},
        {"cloud",
         {{"d_llm", cloud.d_llm},
          {"decoder_layers", cloud.decoder_layers},
          {"heads", cloud.heads},
          {"max_new_tokens", cloud.max_new_tokens}}},
        {"cache", {{"capacity_bytes", cache.capacity_bytes}, {"dir", cache.dir}}},
        {"decode",
         {{"beam_width", decode.beam_width},
          {"max_new_tokens", decode.max_new_tokens},
          {"min_new_tokens", decode.min_new_tokens}}},
        {"host", host},
        {"port", port},
    };
    return j.dump(2);
}

void GlobalConfig::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write config file " + path);
    out << to_json_text() << "\n";
}

EdgeModel build_edge_model(const GlobalConfig& cfg) {
    cfg.validate();
    return EdgeModel::init(cfg.encoder, cfg.qformer, cfg.seed);
}

CloudModel build_cloud_model(const GlobalConfig& cfg) {
    cfg.validate();
    return CloudModel::init(cfg.cloud, cfg.qformer.d_q, cfg.seed + 1);
}

} // namespace esrt
