#pragma once

#include <functional>
#include <map>
#include <string>

#include "esrt/cloud.hpp"
#include "esrt/encoder.hpp"

namespace esrt {

struct WeightFileError : Error {
    using Error::Error;
};

// visits every learnable tensor with a stable dotted name; the visit order is
// the initialization draw order, which keeps save/load deterministic
using ParamVisitor = std::function<void(const std::string&, Tensor&)>;
using ConstParamVisitor = std::function<void(const std::string&, const Tensor&)>;

void visit_params(EncoderWeights& w, const ParamVisitor& visit);
void visit_params(QFormerWeights& w, const ParamVisitor& visit);
void visit_params(MlpWeights& w, const ParamVisitor& visit);
void visit_params(DecoderWeights& w, const ParamVisitor& visit);
void visit_params(DecoderLora& lora, const ParamVisitor& visit);

template <typename W>
void visit_params(const W& w, const ConstParamVisitor& visit) {
    visit_params(const_cast<W&>(w), [&](const std::string& name, Tensor& t) {
        visit(name, const_cast<const Tensor&>(t));
    });
}

// Weight file ("ESRW"): magic, version u8, 3 reserved bytes, seed u64, then
// a u32 count of records, each record being name_len u16 | name | rank u8 |
// dims u32[rank] | float32 data. All integers and floats little-endian.
void save_weights(const std::string& path, uint64_t seed,
                  const std::map<std::string, Tensor>& params);

struct WeightFile {
    uint64_t seed = 0;
    std::map<std::string, Tensor> params;
};

WeightFile load_weights(const std::string& path);

// snapshot / restore helpers built on the visitor
template <typename W>
std::map<std::string, Tensor> snapshot_params(const W& w) {
    std::map<std::string, Tensor> out;
    visit_params(w, ConstParamVisitor([&](const std::string& name, const Tensor& t) {
                     out.emplace(name, t);
                 }));
    return out;
}

// loads matching names into the weights; shapes must agree exactly
template <typename W>
void restore_params(W& w, const std::map<std::string, Tensor>& params) {
    visit_params(w, ParamVisitor([&](const std::string& name, Tensor& t) {
                     auto it = params.find(name);
                     if (it == params.end()) {
                         throw WeightFileError("missing parameter: " + name);
                     }
                     if (it->second.shape != t.shape) {
                         throw WeightFileError("parameter " + name + " has shape " +
                                               shape_str(it->second.shape) + ", expected " +
                                               shape_str(t.shape));
                     }
                     t = it->second;
                 }));
}

void save_edge_model(const std::string& path, const EdgeModel& model, uint64_t seed);
void load_edge_model(const std::string& path, EdgeModel& model);
void save_cloud_model(const std::string& path, const CloudModel& model, uint64_t seed);
void load_cloud_model(const std::string& path, CloudModel& model);

} // namespace esrt
