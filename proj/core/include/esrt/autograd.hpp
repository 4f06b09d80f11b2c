#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "esrt/nn.hpp"
#include "esrt/tensor.hpp"

namespace esrt::autograd {

// Small tape-based reverse-mode engine, sized for the toy training loop.
// Nodes are created in topological order on the tape; backward walks the
// tape in reverse.

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void()> backward_fn;
};

using Var = std::shared_ptr<Node>;

class Tape {
public:
    // constant input (no gradient)
    Var constant(Tensor value);
    // trainable leaf; grad is accumulated during backward
    Var param(Tensor value);

    Var matmul(const Var& a, const Var& b);
    // a [.., m, k] x b[n, k]^T; used for tied-embedding logits
    Var matmul_nt(const Var& a, const Var& b);
    Var linear(const Var& x, const Var& w, const Var& b);
    Var add(const Var& a, const Var& b);
    Var scale(const Var& a, float s);
    Var gelu(const Var& x);
    Var layer_norm(const Var& x, const Var& gamma, const Var& beta, float eps = 1e-5f);
    Var multi_head_attention(const Var& q, const Var& k, const Var& v, int heads,
                             bool causal = false);
    // embedding row lookup; grads scatter-add into the table
    Var gather_rows(const Var& table, std::vector<uint32_t> ids);
    Var concat_rows(const std::vector<Var>& parts);
    Var slice_rows(const Var& x, int64_t start, int64_t len);
    // adds fixed values (e.g. position encodings) with identity gradient
    Var add_const(const Var& x, Tensor addend);

    // mean cross entropy of logits [T x V] against targets on masked rows;
    // produces a scalar [1]
    Var cross_entropy(const Var& logits, std::span<const uint32_t> targets,
                      std::span<const uint8_t> mask);

    Var add_scalars(const std::vector<Var>& losses, const std::vector<float>& weights);

    // seeds d(loss)/d(loss) = 1 and propagates through the tape
    void backward(const Var& loss);

    size_t size() const { return order_.size(); }

private:
    Var record(Node node);
    std::vector<Var> order_;
};

inline void ensure_grad(const Var& v) {
    if (v->grad.data.empty()) v->grad = Tensor(v->value.shape);
}

} // namespace esrt::autograd
