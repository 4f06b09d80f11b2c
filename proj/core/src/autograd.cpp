#include "esrt/autograd.hpp"

#include <algorithm>
#include <cmath>

namespace esrt::autograd {

namespace {

// dB += A^T * C  with A [m x k], C [m x n], B [k x n]
void accumulate_at_b(const Tensor& a, const Tensor& c, Tensor& b_grad) {
    const int64_t m = a.shape[0];
    const int64_t k = a.shape[1];
    const int64_t n = c.shape[1];
    for (int64_t p = 0; p < m; ++p) {
        const float* arow = a.data.data() + p * k;
        const float* crow = c.data.data() + p * n;
        for (int64_t i = 0; i < k; ++i) {
            const float av = arow[i];
            if (av == 0.0f) continue;
            float* brow = b_grad.data.data() + i * n;
            for (int64_t j = 0; j < n; ++j) brow[j] += av * crow[j];
        }
    }
}

// dA += C * B^T  with C [m x n], B [k x n], A [m x k]
void accumulate_c_bt(const Tensor& c, const Tensor& b, Tensor& a_grad) {
    const int64_t m = c.shape[0];
    const int64_t n = c.shape[1];
    const int64_t k = b.shape[0];
    for (int64_t i = 0; i < m; ++i) {
        const float* crow = c.data.data() + i * n;
        float* arow = a_grad.data.data() + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const float* brow = b.data.data() + p * n;
            float acc = 0.0f;
            for (int64_t j = 0; j < n; ++j) acc += crow[j] * brow[j];
            arow[p] += acc;
        }
    }
}

} // namespace

Var Tape::record(Node node) {
    auto v = std::make_shared<Node>(std::move(node));
    order_.push_back(v);
    return v;
}

Var Tape::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = false;
    return record(std::move(n));
}

Var Tape::param(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    return record(std::move(n));
}

Var Tape::matmul(const Var& a, const Var& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2) {
        throw ShapeError("autograd matmul expects 2-D tensors");
    }
    Node n;
    n.value = nn::matmul(a->value, b->value);
    n.requires_grad = a->requires_grad || b->requires_grad;
    Var out = record(std::move(n));
    Node* o = out.get();
    out->backward_fn = [a, b, o] {
        if (a->requires_grad) {
            ensure_grad(a);
            accumulate_c_bt(o->grad, b->value, a->grad);  // dA = dY * B^T
        }
        if (b->requires_grad) {
            ensure_grad(b);
            accumulate_at_b(a->value, o->grad, b->grad);  // dB = A^T * dY
        }
    };
    return out;
}

Var Tape::matmul_nt(const Var& a, const Var& b) {
    Node n;
    n.value = nn::matmul_nt(a->value, b->value);
    n.requires_grad = a->requires_grad || b->requires_grad;
    Var out = record(std::move(n));
    Node* o = out.get();
    out->backward_fn = [a, b, o] {
        // Y = A * B^T: dA = dY * B; dB = dY^T * A
        if (a->requires_grad) {
            ensure_grad(a);
            const Tensor da = nn::matmul(o->grad, b->value);
            for (size_t i = 0; i < da.data.size(); ++i) a->grad.data[i] += da.data[i];
        }
        if (b->requires_grad) {
            ensure_grad(b);
            accumulate_at_b(o->grad, a->value, b->grad);
        }
    };
    return out;
}

Var Tape::linear(const Var& x, const Var& w, const Var& b) {
    Var y = matmul(x, w);
    // bias broadcast over rows
    Node n;
    n.value = y->value;
    const int64_t d = b->value.numel();
    const int64_t rows = n.value.numel() / d;
    for (int64_t r = 0; r < rows; ++r) {
        float* row = n.value.data.data() + r * d;
        for (int64_t j = 0; j < d; ++j) row[j] += b->value.data[static_cast<size_t>(j)];
    }
    n.requires_grad = y->requires_grad || b->requires_grad;
    Var out = record(std::move(n));
    Node* o = out.get();
    out->backward_fn = [y, b, o, rows, d] {
        if (y->requires_grad) {
            ensure_grad(y);
            for (size_t i = 0; i < y->grad.data.size(); ++i) y->grad.data[i] += o->grad.data[i];
        }
        if (b->requires_grad) {
            ensure_grad(b);
            for (int64_t r = 0; r < rows; ++r) {
                const float* row = o->grad.data.data() + r * d;
                for (int64_t j = 0; j < d; ++j) b->grad.data[static_cast<size_t>(j)] += row[j];
            }
        }
    };
    return out;
}

Var Tape::add(const Var& a, const Var& b) {
    Node n;
    n.value = nn::add(a->value, b->value);
    n.requires_grad = a->requires_grad || b->requires_grad;
    Var out = record(std::move(n));
    Node* o = out.get();
    out->backward_fn = [a, b, o] {
        for (const Var& p : {a, b}) {
            if (!p->requires_grad) continue;
            ensure_grad(p);
            for (size_t i = 0; i < p->grad.data.size(); ++i) p->grad.data[i] += o->grad.data[i];
        }
    };
    return out;
}

Var Tape::scale(const Var& a, float s) {
    Node n;
    n.value = a->value;
    for (auto& v : n.value.data) v *= s;
    n.requires_grad = a->requires_grad;
    Var out = record(std::move(n));
    Node* o = out.get();
    out->backward_fn = [a, o, s] {
        if (!a->requires_grad) return;
        ensure_grad(a);
        for (size_t i = 0; i < a->grad.data.size(); ++i) a->grad.data[i] += s * o->grad.data[i];
    };
    return out;
}

Var Tape::gelu(const Var& x) {
    Node n;
    n.value = nn::gelu(x->value);
    n.requires_grad = x->requires_grad;
    Var out = record(std::move(n));
    Node* o = out.get();
    out->backward_fn = [x, o] {
        if (!x->requires_grad) return;
        ensure_grad(x);
        for (size_t i = 0; i < x->grad.data.size(); ++i) {
            x->grad.data[i] += o->grad.data[i] * nn::gelu_grad_scalar(x->value.data[i]);
        }
    };
    return out;
}

Var Tape::layer_norm(const Var& x, const Var& gamma, const Var& beta, float eps) {
    Node n;
    n.value = nn::layer_norm(x->value, gamma->value, beta->value, eps);
    n.requires_grad = x->requires_grad || gamma->requires_grad || beta->requires_grad;
    Var out = record(std::move(n));
    Node* o = out.get();
    out->backward_fn = [x, gamma, beta, o, eps] {
        const int64_t d = x->value.shape[x->value.rank() - 1];
        const int64_t rows = x->value.numel() / d;
        std::vector<float> xhat(static_cast<size_t>(d));
        for (int64_t r = 0; r < rows; ++r) {
            const float* xrow = x->value.data.data() + r * d;
            const float* grow = o->grad.data.data() + r * d;
            float mean = 0.0f, var = 0.0f;
            for (int64_t i = 0; i < d; ++i) mean += xrow[i];
            mean /= static_cast<float>(d);
            for (int64_t i = 0; i < d; ++i) {
                const float c = xrow[i] - mean;
                var += c * c;
            }
            var /= static_cast<float>(d);
            const float inv = 1.0f / std::sqrt(var + eps);
            for (int64_t i = 0; i < d; ++i) xhat[static_cast<size_t>(i)] = (xrow[i] - mean) * inv;

            if (gamma->requires_grad) {
                ensure_grad(gamma);
                for (int64_t i = 0; i < d; ++i) {
                    gamma->grad.data[static_cast<size_t>(i)] +=
                        grow[i] * xhat[static_cast<size_t>(i)];
                }
            }
            if (beta->requires_grad) {
                ensure_grad(beta);
                for (int64_t i = 0; i < d; ++i) beta->grad.data[static_cast<size_t>(i)] += grow[i];
            }
            if (x->requires_grad) {
                ensure_grad(x);
                float mean_w = 0.0f, mean_wx = 0.0f;
                for (int64_t i = 0; i < d; ++i) {
                    const float w = grow[i] * gamma->value.data[static_cast<size_t>(i)];
                    mean_w += w;
                    mean_wx += w * xhat[static_cast<size_t>(i)];
                }
                mean_w /= static_cast<float>(d);
                mean_wx /= static_cast<float>(d);
                float* xg = x->grad.data.data() + r * d;
                for (int64_t i = 0; i < d; ++i) {
                    const float w = grow[i] * gamma->value.data[static_cast<size_t>(i)];
                    xg[i] += (w - mean_w - xhat[static_cast<size_t>(i)] * mean_wx) * inv;
                }
            }
        }
    };
    return out;
}

Var Tape::multi_head_attention(const Var& q, const Var& k, const Var& v, int heads,
                               bool causal) {
    const int64_t lq = q->value.shape[0];
    const int64_t lk = k->value.shape[0];
    const int64_t d = q->value.shape[1];
    const int64_t dv = v->value.shape[1];
    if (d % heads != 0 || dv % heads != 0) {
        throw ShapeError("attention dims not divisible by heads");
    }
    const int64_t hd = d / heads;
    const int64_t hv = dv / heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

    // keep per-head attention weights for backward
    auto attn = std::make_shared<std::vector<Tensor>>();
    attn->reserve(static_cast<size_t>(heads));

    Node n;
    n.value = Tensor({lq, dv});
    for (int h = 0; h < heads; ++h) {
        Tensor a({lq, lk});
        for (int64_t i = 0; i < lq; ++i) {
            const int64_t limit = causal ? std::min<int64_t>(lk, i + 1) : lk;
            const float* qrow = q->value.data.data() + i * d + h * hd;
            float mx = -1e30f;
            for (int64_t j = 0; j < limit; ++j) {
                const float* krow = k->value.data.data() + j * d + h * hd;
                float acc = 0.0f;
                for (int64_t p = 0; p < hd; ++p) acc += qrow[p] * krow[p];
                a.at(i, j) = acc * scale;
                mx = std::max(mx, a.at(i, j));
            }
            float sum = 0.0f;
            for (int64_t j = 0; j < limit; ++j) {
                const float e = std::exp(a.at(i, j) - mx);
                a.at(i, j) = e;
                sum += e;
            }
            const float inv = 1.0f / sum;
            for (int64_t j = 0; j < limit; ++j) a.at(i, j) *= inv;
            for (int64_t j = limit; j < lk; ++j) a.at(i, j) = 0.0f;

            float* orow = n.value.data.data() + i * dv + h * hv;
            for (int64_t j = 0; j < limit; ++j) {
                const float w = a.at(i, j);
                const float* vrow = v->value.data.data() + j * dv + h * hv;
                for (int64_t p = 0; p < hv; ++p) orow[p] += w * vrow[p];
            }
        }
        attn->push_back(std::move(a));
    }
    n.requires_grad = q->requires_grad || k->requires_grad || v->requires_grad;
    Var out = record(std::move(n));
    Node* o = out.get();
    out->backward_fn = [q, k, v, o, attn, heads, hd, hv, d, dv, lq, lk, scale, causal] {
        if (q->requires_grad) ensure_grad(q);
        if (k->requires_grad) ensure_grad(k);
        if (v->requires_grad) ensure_grad(v);
        std::vector<float> da(static_cast<size_t>(lk));
        for (int h = 0; h < heads; ++h) {
            const Tensor& a = (*attn)[static_cast<size_t>(h)];
            for (int64_t i = 0; i < lq; ++i) {
                const int64_t limit = causal ? std::min<int64_t>(lk, i + 1) : lk;
                const float* dout = o->grad.data.data() + i * dv + h * hv;

                // dV and dA
                float dot = 0.0f;  // rowsum(dA .* A)
                for (int64_t j = 0; j < limit; ++j) {
                    const float aij = a.at(i, j);
                    const float* vrow = v->value.data.data() + j * dv + h * hv;
                    float daij = 0.0f;
                    for (int64_t p = 0; p < hv; ++p) daij += dout[p] * vrow[p];
                    da[static_cast<size_t>(j)] = daij;
                    dot += daij * aij;
                    if (v->requires_grad) {
                        float* vg = v->grad.data.data() + j * dv + h * hv;
                        for (int64_t p = 0; p < hv; ++p) vg[p] += aij * dout[p];
                    }
                }
                // dS = A .* (dA - dot); dQ += dS*K*scale; dK += dS^T*Q*scale
                const float* qrow = q->value.data.data() + i * d + h * hd;
                float* qg = q->requires_grad ? q->grad.data.data() + i * d + h * hd : nullptr;
                for (int64_t j = 0; j < limit; ++j) {
                    const float ds = a.at(i, j) * (da[static_cast<size_t>(j)] - dot) * scale;
                    if (ds == 0.0f) continue;
                    const float* krow = k->value.data.data() + j * d + h * hd;
                    if (qg) {
                        for (int64_t p = 0; p < hd; ++p) qg[p] += ds * krow[p];
                    }
                    if (k->requires_grad) {
                        float* kg = k->grad.data.data() + j * d + h * hd;
                        for (int64_t p = 0; p < hd; ++p) kg[p] += ds * qrow[p];
                    }
                }
            }
        }
    };
    return out;
}

Var Tape::gather_rows(const Var& table, std::vector<uint32_t> ids) {
    const int64_t d = table->value.shape[1];
    Node n;
    n.value = Tensor({static_cast<int64_t>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i) {
        std::copy_n(table->value.data.data() + static_cast<int64_t>(ids[i]) * d, d,
                    n.value.data.data() + static_cast<int64_t>(i) * d);
    }
    n.requires_grad = table->requires_grad;
    Var out = record(std::move(n));
    Node* o = out.get();
    auto ids_ptr = std::make_shared<std::vector<uint32_t>>(std::move(ids));
    out->backward_fn = [table, o, ids_ptr, d] {
        if (!table->requires_grad) return;
        ensure_grad(table);
        for (size_t i = 0; i < ids_ptr->size(); ++i) {
            const float* src = o->grad.data.data() + static_cast<int64_t>(i) * d;
            float* dst = table->grad.data.data() + static_cast<int64_t>((*ids_ptr)[i]) * d;
            for (int64_t p = 0; p < d; ++p) dst[p] += src[p];
        }
    };
    return out;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows of nothing");
    const int64_t d = parts[0]->value.shape[1];
    int64_t rows = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p->value.rank() != 2 || p->value.shape[1] != d) {
            throw ShapeError("concat_rows feature dims differ");
        }
        rows += p->value.shape[0];
        rg = rg || p->requires_grad;
    }
    Node n;
    n.value = Tensor({rows, d});
    int64_t at = 0;
    for (const auto& p : parts) {
        std::copy(p->value.data.begin(), p->value.data.end(), n.value.data.begin() + at * d);
        at += p->value.shape[0];
    }
    n.requires_grad = rg;
    Var out = record(std::move(n));
    Node* o = out.get();
    auto parts_ptr = std::make_shared<std::vector<Var>>(parts);
    out->backward_fn = [parts_ptr, o] {
        int64_t at = 0;
        for (const auto& p : *parts_ptr) {
            const int64_t count = p->value.numel();
            if (p->requires_grad) {
                ensure_grad(p);
                for (int64_t i = 0; i < count; ++i) {
                    p->grad.data[static_cast<size_t>(i)] +=
                        o->grad.data[static_cast<size_t>(at + i)];
                }
            }
            at += count;
        }
    };
    return out;
}

Var Tape::slice_rows(const Var& x, int64_t start, int64_t len) {
    const int64_t d = x->value.shape[1];
    if (start < 0 || start + len > x->value.shape[0]) {
        throw ShapeError("slice_rows out of range");
    }
    Node n;
    n.value = Tensor({len, d});
    std::copy_n(x->value.data.data() + start * d, len * d, n.value.data.data());
    n.requires_grad = x->requires_grad;
    Var out = record(std::move(n));
    Node* o = out.get();
    out->backward_fn = [x, o, start, d, len] {
        if (!x->requires_grad) return;
        ensure_grad(x);
        for (int64_t i = 0; i < len * d; ++i) {
            x->grad.data[static_cast<size_t>(start * d + i)] += o->grad.data[static_cast<size_t>(i)];
        }
    };
    return out;
}

Var Tape::add_const(const Var& x, Tensor addend) {
    Node n;
    n.value = nn::add(x->value, addend);
    n.requires_grad = x->requires_grad;
    Var out = record(std::move(n));
    Node* o = out.get();
    out->backward_fn = [x, o] {
        if (!x->requires_grad) return;
        ensure_grad(x);
        for (size_t i = 0; i < x->grad.data.size(); ++i) x->grad.data[i] += o->grad.data[i];
    };
    return out;
}

Var Tape::cross_entropy(const Var& logits, std::span<const uint32_t> targets,
                        std::span<const uint8_t> mask) {
    const int64_t t_len = logits->value.shape[0];
    const int64_t vocab = logits->value.shape[1];
    if (static_cast<int64_t>(targets.size()) != t_len ||
        static_cast<int64_t>(mask.size()) != t_len) {
        throw ShapeError("cross_entropy targets/mask length mismatch");
    }
    // softmax rows kept for backward
    auto probs = std::make_shared<Tensor>(nn::softmax(logits->value, 1));
    int64_t count = 0;
    double loss = 0.0;
    for (int64_t i = 0; i < t_len; ++i) {
        if (!mask[static_cast<size_t>(i)]) continue;
        ++count;
        const float p = probs->at(i, targets[static_cast<size_t>(i)]);
        loss -= std::log(std::max(p, 1e-30f));
    }
    if (count == 0) throw ShapeError("cross_entropy with empty mask");
    loss /= static_cast<double>(count);

    Node n;
    n.value = Tensor({1}, {static_cast<float>(loss)});
    n.requires_grad = logits->requires_grad;
    Var out = record(std::move(n));
    Node* o = out.get();
    auto tgt = std::make_shared<std::vector<uint32_t>>(targets.begin(), targets.end());
    auto msk = std::make_shared<std::vector<uint8_t>>(mask.begin(), mask.end());
    out->backward_fn = [logits, o, probs, tgt, msk, t_len, vocab, count] {
        if (!logits->requires_grad) return;
        ensure_grad(logits);
        const float g = o->grad.data[0] / static_cast<float>(count);
        for (int64_t i = 0; i < t_len; ++i) {
            if (!(*msk)[static_cast<size_t>(i)]) continue;
            const float* prow = probs->data.data() + i * vocab;
            float* grow = logits->grad.data.data() + i * vocab;
            for (int64_t j = 0; j < vocab; ++j) grow[j] += g * prow[j];
            grow[(*tgt)[static_cast<size_t>(i)]] -= g;
        }
    };
    return out;
}

Var Tape::add_scalars(const std::vector<Var>& losses, const std::vector<float>& weights) {
    if (losses.size() != weights.size() || losses.empty()) {
        throw ShapeError("add_scalars needs matching non-empty inputs");
    }
    Node n;
    float acc = 0.0f;
    bool rg = false;
    for (size_t i = 0; i < losses.size(); ++i) {
        acc += weights[i] * losses[i]->value.data[0];
        rg = rg || losses[i]->requires_grad;
    }
    n.value = Tensor({1}, {acc});
    n.requires_grad = rg;
    Var out = record(std::move(n));
    Node* o = out.get();
    auto ls = std::make_shared<std::vector<Var>>(losses);
    auto ws = std::make_shared<std::vector<float>>(weights);
    out->backward_fn = [ls, ws, o] {
        for (size_t i = 0; i < ls->size(); ++i) {
            const Var& l = (*ls)[i];
            if (!l->requires_grad) continue;
            ensure_grad(l);
            l->grad.data[0] += (*ws)[i] * o->grad.data[0];
        }
    };
    return out;
}

void Tape::backward(const Var& loss) {
    if (loss->value.numel() != 1) {
        throw ShapeError("backward expects a scalar loss");
    }
    ensure_grad(loss);
    loss->grad.data[0] = 1.0f;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Node& node = **it;
        if (!node.requires_grad || !node.backward_fn) continue;
        if (node.grad.data.empty()) continue;  // not on the path to the loss
        node.backward_fn();
    }
}

} // namespace esrt::autograd
