#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "esrt/errors.hpp"
#include "esrt/rng.hpp"

namespace esrt {

// Dense row-major float32 tensor. Shapes are explicit; the only implicit
// broadcasts anywhere in the project are bias-add and shared batch leading
// dims in matmul.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<int64_t> s, std::vector<float> d);
    explicit Tensor(std::vector<int64_t> s);  // zero-filled

    static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int64_t> s, float value);
    static Tensor randn(std::vector<int64_t> s, Rng& rng, float stddev = 1.0f);
    static Tensor uniform(std::vector<int64_t> s, Rng& rng, float lo, float hi);

    int64_t numel() const;
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

    // 2-D accessors (row-major)
    float& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * shape[1] + c)]; }
    float at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * shape[1] + c)]; }

    Tensor reshaped(std::vector<int64_t> new_shape) const;
    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;

    bool operator==(const Tensor&) const = default;
};

std::string shape_str(const std::vector<int64_t>& shape);
int64_t shape_numel(const std::vector<int64_t>& shape);

inline void require_shape(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

// weight [d_in x d_out], bias [d_out]
struct LinearLayer {
    Tensor weight;
    Tensor bias;

    LinearLayer() = default;
    LinearLayer(int64_t d_in, int64_t d_out, Rng& rng, float stddev);

    int64_t d_in() const { return weight.shape[0]; }
    int64_t d_out() const { return weight.shape[1]; }
};

} // namespace esrt
