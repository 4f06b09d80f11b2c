#include "esrt/model_io.hpp"

#include <cstring>
#include <fstream>

namespace esrt {

namespace {

void visit_linear(const std::string& prefix, LinearLayer& l, const ParamVisitor& visit) {
    visit(prefix + ".weight", l.weight);
    visit(prefix + ".bias", l.bias);
}

void visit_block(const std::string& prefix, TransformerBlock& b, const ParamVisitor& visit) {
    visit_linear(prefix + ".wq", b.wq, visit);
    visit_linear(prefix + ".wk", b.wk, visit);
    visit_linear(prefix + ".wv", b.wv, visit);
    visit_linear(prefix + ".wo", b.wo, visit);
    visit_linear(prefix + ".ffn1", b.ffn1, visit);
    visit_linear(prefix + ".ffn2", b.ffn2, visit);
    visit(prefix + ".ln1_g", b.ln1_g);
    visit(prefix + ".ln1_b", b.ln1_b);
    visit(prefix + ".ln2_g", b.ln2_g);
    visit(prefix + ".ln2_b", b.ln2_b);
}

} // namespace

void visit_params(EncoderWeights& w, const ParamVisitor& visit) {
    visit("encoder.conv_w", w.conv_w);
    visit("encoder.conv_b", w.conv_b);
    for (size_t i = 0; i < w.blocks.size(); ++i) {
        visit_block("encoder.block" + std::to_string(i), w.blocks[i], visit);
    }
    visit("encoder.ln_f_g", w.ln_f_g);
    visit("encoder.ln_f_b", w.ln_f_b);
}

void visit_params(QFormerWeights& w, const ParamVisitor& visit) {
    visit("qformer.queries", w.queries);
    for (size_t i = 0; i < w.blocks.size(); ++i) {
        const std::string p = "qformer.block" + std::to_string(i);
        visit_linear(p + ".wq", w.blocks[i].wq, visit);
        visit_linear(p + ".wk", w.blocks[i].wk, visit);
        visit_linear(p + ".wv", w.blocks[i].wv, visit);
        visit_linear(p + ".wo", w.blocks[i].wo, visit);
        visit_linear(p + ".ffn1", w.blocks[i].ffn1, visit);
        visit_linear(p + ".ffn2", w.blocks[i].ffn2, visit);
        visit(p + ".ln1_g", w.blocks[i].ln1_g);
        visit(p + ".ln1_b", w.blocks[i].ln1_b);
        visit(p + ".ln2_g", w.blocks[i].ln2_g);
        visit(p + ".ln2_b", w.blocks[i].ln2_b);
    }
    visit("qformer.ln_f_g", w.ln_f_g);
    visit("qformer.ln_f_b", w.ln_f_b);
}

void visit_params(MlpWeights& w, const ParamVisitor& visit) {
    visit_linear("mlp.fc1", w.fc1, visit);
    visit_linear("mlp.fc2", w.fc2, visit);
}

void visit_params(DecoderWeights& w, const ParamVisitor& visit) {
    visit("decoder.embedding", w.embedding);
    for (size_t i = 0; i < w.blocks.size(); ++i) {
        const std::string p = "decoder.block" + std::to_string(i);
        visit_linear(p + ".wq", w.blocks[i].wq, visit);
        visit_linear(p + ".wk", w.blocks[i].wk, visit);
        visit_linear(p + ".wv", w.blocks[i].wv, visit);
        visit_linear(p + ".wo", w.blocks[i].wo, visit);
        visit_linear(p + ".ffn1", w.blocks[i].ffn1, visit);
        visit_linear(p + ".ffn2", w.blocks[i].ffn2, visit);
        visit(p + ".ln1_g", w.blocks[i].ln1_g);
        visit(p + ".ln1_b", w.blocks[i].ln1_b);
        visit(p + ".ln2_g", w.blocks[i].ln2_g);
        visit(p + ".ln2_b", w.blocks[i].ln2_b);
    }
    visit("decoder.ln_f_g", w.ln_f_g);
    visit("decoder.ln_f_b", w.ln_f_b);
}

void visit_params(DecoderLora& lora, const ParamVisitor& visit) {
    static const char* kSlots[] = {"wq", "wk", "wv", "wo", "ffn1", "ffn2"};
    for (size_t i = 0; i < lora.size(); ++i) {
        for (size_t s = 0; s < lora[i].adapters.size() && s < 6; ++s) {
            const std::string p = "lora.block" + std::to_string(i) + "." + kSlots[s];
            visit(p + ".a", lora[i].adapters[s].a);
            visit(p + ".b", lora[i].adapters[s].b);
        }
    }
}

namespace {

void put_u16(std::ofstream& out, uint16_t v) {
    const uint8_t b[2] = {static_cast<uint8_t>(v & 0xFF), static_cast<uint8_t>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ofstream& out, uint32_t v) {
    uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ofstream& out, uint64_t v) {
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

uint16_t get_u16(std::ifstream& in) {
    uint8_t b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::ifstream& in) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

uint64_t get_u64(std::ifstream& in) {
    uint8_t b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

} // namespace

void save_weights(const std::string& path, uint64_t seed,
                  const std::map<std::string, Tensor>& params) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw WeightFileError("cannot open " + path + " for writing");
    out.write("ESRW", 4);
    const uint8_t header[4] = {1, 0, 0, 0};  // version + reserved
    out.write(reinterpret_cast<const char*>(header), 4);
    put_u64(out, seed);
    put_u32(out, static_cast<uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        put_u16(out, static_cast<uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        out.put(static_cast<char>(t.rank()));
        for (int64_t d : t.shape) put_u32(out, static_cast<uint32_t>(d));
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * 4));
    }
    if (!out) throw WeightFileError("short write to " + path);
}

WeightFile load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WeightFileError("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "ESRW", 4) != 0) {
        throw WeightFileError(path + " is not a weight file");
    }
    uint8_t header[4];
    in.read(reinterpret_cast<char*>(header), 4);
    if (header[0] != 1) throw WeightFileError("unknown weight file version");

    WeightFile wf;
    wf.seed = get_u64(in);
    const uint32_t count = get_u32(in);
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t name_len = get_u16(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const int rank = in.get();
        std::vector<int64_t> shape;
        for (int r = 0; r < rank; ++r) shape.push_back(get_u32(in));
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * 4));
        if (!in) throw WeightFileError("truncated weight file: " + path);
        wf.params.emplace(std::move(name), std::move(t));
    }
    return wf;
}

void save_edge_model(const std::string& path, const EdgeModel& model, uint64_t seed) {
    std::map<std::string, Tensor> params = snapshot_params(model.encoder);
    params.merge(snapshot_params(model.qformer));
    save_weights(path, seed, params);
}

void load_edge_model(const std::string& path, EdgeModel& model) {
    const WeightFile wf = load_weights(path);
    restore_params(model.encoder, wf.params);
    restore_params(model.qformer, wf.params);
}

void save_cloud_model(const std::string& path, const CloudModel& model, uint64_t seed) {
    std::map<std::string, Tensor> params = snapshot_params(model.mlp);
    params.merge(snapshot_params(model.decoder));
    if (model.lora) params.merge(snapshot_params(*model.lora));
    save_weights(path, seed, params);
}

void load_cloud_model(const std::string& path, CloudModel& model) {
    const WeightFile wf = load_weights(path);
    restore_params(model.mlp, wf.params);
    restore_params(model.decoder, wf.params);
    if (model.lora) restore_params(*model.lora, wf.params);
}

} // namespace esrt
