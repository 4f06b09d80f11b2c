#pragma once

#include <functional>

#include "esrt/tensor.hpp"

namespace esrt::nn {

// Standard matrix product, batched over equal leading dimensions. A 2-D rhs
// (or lhs) is shared across the other side's batch.
Tensor matmul(const Tensor& a, const Tensor& b);

// like matmul but contracts against b transposed: [.., m, k] x [n, k] -> [.., m, n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// a^T * b with a [m x k], b [m x n] -> [k x n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);

// max-subtraction stabilized softmax along `axis`
Tensor softmax(const Tensor& x, int axis);

// per-row (last dim) normalization followed by gamma/beta affine
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);

// scaled dot-product attention: queries [Lq x d], keys [Lk x d], values [Lk x dv]
// -> [Lq x dv]. causal=true masks key j > query i (requires Lq == Lk offset use below).
Tensor cross_attention(const Tensor& queries, const Tensor& keys, const Tensor& values);

// self/cross attention with optional causal mask; query position i may attend
// to key positions j <= i + key_offset.
Tensor attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                 bool causal, int64_t key_offset = 0);

// multi-head wrapper: slices the feature dim into `heads` groups
Tensor multi_head_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                            int heads, bool causal = false, int64_t key_offset = 0);

// x [.., d_in] * W [d_in x d_out] + b
Tensor linear(const Tensor& x, const LinearLayer& layer);

// tanh-approximation GELU
Tensor gelu(const Tensor& x);
float gelu_scalar(float x);
float gelu_grad_scalar(float x);

Tensor add(const Tensor& a, const Tensor& b);

// adds scale * sinusoidal position encodings to rows of x [L x d], positions
// start..start+L-1
void add_sinusoidal_positions(Tensor& x, int64_t start = 0, float scale = 1.0f);

// Max |analytic - central finite difference| over all coordinates of x.
// f may accumulate in double; the difference is divided by the step actually
// representable in the float tensor, which keeps quadratics exact.
double grad_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                  const Tensor& analytic_grad, float eps);

} // namespace esrt::nn
