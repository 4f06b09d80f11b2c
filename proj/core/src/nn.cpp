#include "esrt/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace esrt::nn {

namespace {

// core 2-D kernel: C[m x n] += A[m x k] * B[k x n], ikj order for locality
void matmul_2d(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        float* crow = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const float av = a[i * k + p];
            if (av == 0.0f) continue;
            const float* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw ShapeError("matmul requires rank >= 2, got " + shape_str(a.shape) + " and " +
                         shape_str(b.shape));
    }
    const int64_t m = a.shape[a.rank() - 2];
    const int64_t k = a.shape[a.rank() - 1];
    const int64_t kb = b.shape[b.rank() - 2];
    const int64_t n = b.shape[b.rank() - 1];
    if (k != kb) {
        throw ShapeError("matmul inner dimension mismatch: " + shape_str(a.shape) + " x " +
                         shape_str(b.shape));
    }

    std::vector<int64_t> a_batch(a.shape.begin(), a.shape.end() - 2);
    std::vector<int64_t> b_batch(b.shape.begin(), b.shape.end() - 2);
    if (!a_batch.empty() && !b_batch.empty() && a_batch != b_batch) {
        throw ShapeError("matmul batch dims mismatch: " + shape_str(a.shape) + " x " +
                         shape_str(b.shape));
    }
    const std::vector<int64_t>& batch = a_batch.empty() ? b_batch : a_batch;
    const int64_t nbatch = shape_numel(batch);

    std::vector<int64_t> out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor out(std::move(out_shape));

    const int64_t a_stride = a_batch.empty() ? 0 : m * k;
    const int64_t b_stride = b_batch.empty() ? 0 : kb * n;
    for (int64_t i = 0; i < nbatch; ++i) {
        matmul_2d(a.data.data() + i * a_stride, b.data.data() + i * b_stride,
                  out.data.data() + i * m * n, m, k, n);
    }
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() != 2) {
        throw ShapeError("matmul_nt requires a rank >= 2 and b rank 2, got " +
                         shape_str(a.shape) + " and " + shape_str(b.shape));
    }
    const int64_t k = a.shape[a.rank() - 1];
    const int64_t n = b.shape[0];
    if (k != b.shape[1]) {
        throw ShapeError("matmul_nt inner dimension mismatch: " + shape_str(a.shape) + " x " +
                         shape_str(b.shape) + "^T");
    }
    std::vector<int64_t> out_shape(a.shape.begin(), a.shape.end() - 1);
    out_shape.push_back(n);
    Tensor out(std::move(out_shape));
    const int64_t rows = a.numel() / k;
    for (int64_t i = 0; i < rows; ++i) {
        const float* arow = a.data.data() + i * k;
        float* crow = out.data.data() + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const float* brow = b.data.data() + j * k;
            float acc = 0.0f;
            for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    }
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[0] != b.shape[0]) {
        throw ShapeError("matmul_tn shape mismatch: " + shape_str(a.shape) + "^T x " +
                         shape_str(b.shape));
    }
    const int64_t m = a.shape[0];
    const int64_t k = a.shape[1];
    const int64_t n = b.shape[1];
    Tensor out({k, n});
    for (int64_t p = 0; p < m; ++p) {
        const float* arow = a.data.data() + p * k;
        const float* brow = b.data.data() + p * n;
        for (int64_t i = 0; i < k; ++i) {
            const float av = arow[i];
            if (av == 0.0f) continue;
            float* crow = out.data.data() + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return out;
}

Tensor softmax(const Tensor& x, int axis) {
    if (axis < 0 || axis >= x.rank()) {
        throw ShapeError("softmax axis " + std::to_string(axis) + " invalid for shape " +
                         shape_str(x.shape));
    }
    const int64_t axis_len = x.shape[axis];
    int64_t inner = 1;
    for (int i = axis + 1; i < x.rank(); ++i) inner *= x.shape[i];
    int64_t outer = x.numel() / (axis_len * inner);

    Tensor out = x;
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            float* base = out.data.data() + o * axis_len * inner + in;
            float mx = base[0];
            for (int64_t i = 1; i < axis_len; ++i) mx = std::max(mx, base[i * inner]);
            float sum = 0.0f;
            for (int64_t i = 0; i < axis_len; ++i) {
                float e = std::exp(base[i * inner] - mx);
                base[i * inner] = e;
                sum += e;
            }
            const float inv = 1.0f / sum;
            for (int64_t i = 0; i < axis_len; ++i) base[i * inner] *= inv;
        }
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    if (x.rank() < 1) throw ShapeError("layer_norm requires rank >= 1");
    const int64_t d = x.shape[x.rank() - 1];
    if (gamma.numel() != d || beta.numel() != d) {
        throw ShapeError("layer_norm gamma/beta " + shape_str(gamma.shape) + "/" +
                         shape_str(beta.shape) + " do not match last dim of " +
                         shape_str(x.shape));
    }
    Tensor out = x;
    const int64_t rows = x.numel() / d;
    for (int64_t r = 0; r < rows; ++r) {
        float* row = out.data.data() + r * d;
        float mean = 0.0f;
        for (int64_t i = 0; i < d; ++i) mean += row[i];
        mean /= static_cast<float>(d);
        float var = 0.0f;
        for (int64_t i = 0; i < d; ++i) {
            const float c = row[i] - mean;
            var += c * c;
        }
        var /= static_cast<float>(d);
        const float inv = 1.0f / std::sqrt(var + eps);
        for (int64_t i = 0; i < d; ++i) {
            row[i] = (row[i] - mean) * inv * gamma.data[static_cast<size_t>(i)] +
                     beta.data[static_cast<size_t>(i)];
        }
    }
    return out;
}

Tensor attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                 bool causal, int64_t key_offset) {
    if (queries.rank() != 2 || keys.rank() != 2 || values.rank() != 2) {
        throw ShapeError("attention expects 2-D q/k/v");
    }
    const int64_t lq = queries.shape[0];
    const int64_t d = queries.shape[1];
    const int64_t lk = keys.shape[0];
    if (keys.shape[1] != d) {
        throw ShapeError("attention query/key feature dims differ: " + shape_str(queries.shape) +
                         " vs " + shape_str(keys.shape));
    }
    if (values.shape[0] != lk) {
        throw ShapeError("attention key/value sequence lengths differ: " + shape_str(keys.shape) +
                         " vs " + shape_str(values.shape));
    }
    const int64_t dv = values.shape[1];
    const float scale = 1.0f / std::sqrt(static_cast<float>(d));

    Tensor out({lq, dv});
    std::vector<float> scores(static_cast<size_t>(lk));
    for (int64_t i = 0; i < lq; ++i) {
        const int64_t limit = causal ? std::min<int64_t>(lk, i + key_offset + 1) : lk;
        if (limit <= 0) {
            throw ShapeError("attention causal mask leaves query row " + std::to_string(i) +
                             " with no keys");
        }
        const float* q = queries.data.data() + i * d;
        float mx = -std::numeric_limits<float>::infinity();
        for (int64_t j = 0; j < limit; ++j) {
            const float* k = keys.data.data() + j * d;
            float acc = 0.0f;
            for (int64_t p = 0; p < d; ++p) acc += q[p] * k[p];
            scores[static_cast<size_t>(j)] = acc * scale;
            mx = std::max(mx, scores[static_cast<size_t>(j)]);
        }
        float sum = 0.0f;
        for (int64_t j = 0; j < limit; ++j) {
            float e = std::exp(scores[static_cast<size_t>(j)] - mx);
            scores[static_cast<size_t>(j)] = e;
            sum += e;
        }
        const float inv = 1.0f / sum;
        float* orow = out.data.data() + i * dv;
        for (int64_t j = 0; j < limit; ++j) {
            const float w = scores[static_cast<size_t>(j)] * inv;
            const float* vrow = values.data.data() + j * dv;
            for (int64_t p = 0; p < dv; ++p) orow[p] += w * vrow[p];
        }
    }
    return out;
}

Tensor cross_attention(const Tensor& queries, const Tensor& keys, const Tensor& values) {
    return attention(queries, keys, values, /*causal=*/false);
}

Tensor multi_head_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                            int heads, bool causal, int64_t key_offset) {
    const int64_t d = queries.shape[1];
    const int64_t dv = values.shape[1];
    if (d % heads != 0 || dv % heads != 0) {
        throw ShapeError("feature dims " + shape_str(queries.shape) + "/" +
                         shape_str(values.shape) + " not divisible by " + std::to_string(heads) +
                         " heads");
    }
    const int64_t hd = d / heads;
    const int64_t hv = dv / heads;
    const int64_t lq = queries.shape[0];
    const int64_t lk = keys.shape[0];

    Tensor out({lq, dv});
    Tensor qh({lq, hd}), kh({lk, hd}), vh({lk, hv});
    for (int h = 0; h < heads; ++h) {
        for (int64_t i = 0; i < lq; ++i)
            std::copy_n(queries.data.data() + i * d + h * hd, hd, qh.data.data() + i * hd);
        for (int64_t i = 0; i < lk; ++i) {
            std::copy_n(keys.data.data() + i * d + h * hd, hd, kh.data.data() + i * hd);
            std::copy_n(values.data.data() + i * dv + h * hv, hv, vh.data.data() + i * hv);
        }
        Tensor oh = attention(qh, kh, vh, causal, key_offset);
        for (int64_t i = 0; i < lq; ++i)
            std::copy_n(oh.data.data() + i * hv, hv, out.data.data() + i * dv + h * hv);
    }
    return out;
}

Tensor linear(const Tensor& x, const LinearLayer& layer) {
    Tensor out = matmul(x, layer.weight);
    const int64_t d_out = layer.d_out();
    if (layer.bias.numel() != d_out) {
        throw ShapeError("linear bias " + shape_str(layer.bias.shape) + " does not match weight " +
                         shape_str(layer.weight.shape));
    }
    const int64_t rows = out.numel() / d_out;
    for (int64_t r = 0; r < rows; ++r) {
        float* row = out.data.data() + r * d_out;
        for (int64_t j = 0; j < d_out; ++j) row[j] += layer.bias.data[static_cast<size_t>(j)];
    }
    return out;
}

float gelu_scalar(float x) {
    const float c = 0.7978845608028654f;  // sqrt(2/pi)
    const float inner = c * (x + 0.044715f * x * x * x);
    return 0.5f * x * (1.0f + std::tanh(inner));
}

float gelu_grad_scalar(float x) {
    const float c = 0.7978845608028654f;
    const float x3 = x * x * x;
    const float inner = c * (x + 0.044715f * x3);
    const float t = std::tanh(inner);
    const float sech2 = 1.0f - t * t;
    return 0.5f * (1.0f + t) + 0.5f * x * sech2 * c * (1.0f + 3.0f * 0.044715f * x * x);
}

Tensor gelu(const Tensor& x) {
    Tensor out = x;
    for (auto& v : out.data) v = gelu_scalar(v);
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("add shape mismatch: " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    }
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

void add_sinusoidal_positions(Tensor& x, int64_t start, float scale) {
    const int64_t l = x.shape[0];
    const int64_t d = x.shape[1];
    for (int64_t pos = 0; pos < l; ++pos) {
        float* row = x.data.data() + pos * d;
        for (int64_t i = 0; i < d; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
            const double angle = static_cast<double>(pos + start) * freq;
            row[i] += scale * static_cast<float>(std::sin(angle));
            if (i + 1 < d) row[i + 1] += scale * static_cast<float>(std::cos(angle));
        }
    }
}

double grad_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                  const Tensor& analytic_grad, float eps) {
    if (!x.same_shape(analytic_grad)) {
        throw ShapeError("grad_check gradient shape " + shape_str(analytic_grad.shape) +
                         " does not match input " + shape_str(x.shape));
    }
    Tensor probe = x;
    double max_err = 0.0;
    for (size_t i = 0; i < probe.data.size(); ++i) {
        const float orig = probe.data[i];
        probe.data[i] = orig + eps;
        const double fp = f(probe);
        const double hi = probe.data[i];
        probe.data[i] = orig - eps;
        const double fm = f(probe);
        const double lo = probe.data[i];
        probe.data[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw Error("grad_check: non-finite function evaluation at coordinate " +
                        std::to_string(i));
        }
        const double fd = (fp - fm) / (hi - lo);
        max_err = std::max(max_err, std::abs(fd - static_cast<double>(analytic_grad.data[i])));
    }
    return max_err;
}

} // namespace esrt::nn
