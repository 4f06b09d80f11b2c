#include "esrt/tensor.hpp"

#include <cmath>
#include <sstream>

namespace esrt {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int64_t> s, std::vector<float> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape)) {
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
}

Tensor::Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
}

Tensor Tensor::full(std::vector<int64_t> s, float value) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = value;
    return t;
}

Tensor Tensor::randn(std::vector<int64_t> s, Rng& rng, float stddev) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = rng.next_gaussian() * stddev;
    return t;
}

Tensor Tensor::uniform(std::vector<int64_t> s, Rng& rng, float lo, float hi) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = lo + (hi - lo) * rng.next_float();
    return t;
}

int64_t Tensor::numel() const {
    return shape_numel(shape);
}

Tensor Tensor::reshaped(std::vector<int64_t> new_shape) const {
    if (shape_numel(new_shape) != numel()) {
        throw ShapeError("reshape " + shape_str(shape) + " -> " + shape_str(new_shape) +
                         " changes element count");
    }
    Tensor t;
    t.shape = std::move(new_shape);
    t.data = data;
    return t;
}

bool Tensor::all_finite() const {
    for (float v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

LinearLayer::LinearLayer(int64_t d_in, int64_t d_out, Rng& rng, float stddev)
    : weight(Tensor::randn({d_in, d_out}, rng, stddev)), bias(Tensor::zeros({d_out})) {}

} // namespace esrt
