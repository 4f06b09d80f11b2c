#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "esrt/nn.hpp"
#include "testutil.hpp"

using namespace esrt;

namespace {

// arbitrary-precision softmax reference
std::vector<long double> softmax_oracle(const std::vector<long double>& xs) {
    long double mx = xs[0];
    for (long double v : xs) mx = std::max(mx, v);
    long double sum = 0.0L;
    std::vector<long double> out(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) {
        out[i] = expl(xs[i] - mx);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

// exhaustive scaled dot-product attention in long double
Tensor attention_oracle(const Tensor& q, const Tensor& k, const Tensor& v) {
    const int64_t lq = q.shape[0], lk = k.shape[0], d = q.shape[1], dv = v.shape[1];
    Tensor out({lq, dv});
    for (int64_t i = 0; i < lq; ++i) {
        std::vector<long double> scores(static_cast<size_t>(lk));
        for (int64_t j = 0; j < lk; ++j) {
            long double acc = 0.0L;
            for (int64_t p = 0; p < d; ++p) {
                acc += static_cast<long double>(q.at(i, p)) * k.at(j, p);
            }
            scores[static_cast<size_t>(j)] = acc / sqrtl(static_cast<long double>(d));
        }
        const auto weights = softmax_oracle(scores);
        for (int64_t p = 0; p < dv; ++p) {
            long double acc = 0.0L;
            for (int64_t j = 0; j < lk; ++j) {
                acc += weights[static_cast<size_t>(j)] * static_cast<long double>(v.at(j, p));
            }
            out.at(i, p) = static_cast<float>(acc);
        }
    }
    return out;
}

} // namespace

TEST_CASE("matmul identity") {
    Rng rng(1);
    const Tensor a = Tensor::randn({2, 2}, rng);
    const Tensor eye({2, 2}, {1, 0, 0, 1});
    const Tensor out = nn::matmul(eye, a);
    CHECK(testutil::max_abs_diff(out, a) == 0.0f);
}

TEST_CASE("matmul hand-computed 2x2") {
    const Tensor a({2, 2}, {1, 2, 3, 4});
    const Tensor b({2, 2}, {5, 6, 7, 8});
    const Tensor out = nn::matmul(a, b);
    CHECK(out.data == std::vector<float>{19, 22, 43, 50});
}

TEST_CASE("matmul shape mismatch names both shapes") {
    const Tensor a({2, 3});
    const Tensor b({4, 5});
    try {
        nn::matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x5]") != std::string::npos);
    }
}

TEST_CASE("matmul batched leading dims") {
    Rng rng(2);
    const Tensor a = Tensor::randn({3, 2, 4}, rng);
    const Tensor b = Tensor::randn({3, 4, 5}, rng);
    const Tensor out = nn::matmul(a, b);
    CHECK(out.shape == std::vector<int64_t>{3, 2, 5});
    // batch 1 equals the standalone 2-D product
    Tensor a1({2, 4}), b1({4, 5});
    std::copy_n(a.data.begin() + 8, 8, a1.data.begin());
    std::copy_n(b.data.begin() + 20, 20, b1.data.begin());
    const Tensor o1 = nn::matmul(a1, b1);
    for (int64_t i = 0; i < 10; ++i) {
        CHECK(out.data[static_cast<size_t>(10 + i)] ==
              doctest::Approx(o1.data[static_cast<size_t>(i)]));
    }
}

TEST_CASE("matmul associativity on random tensors") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor a = Tensor::randn({4, 3}, rng);
        const Tensor b = Tensor::randn({3, 5}, rng);
        const Tensor c = Tensor::randn({5, 2}, rng);
        const Tensor left = nn::matmul(nn::matmul(a, b), c);
        const Tensor right = nn::matmul(a, nn::matmul(b, c));
        CHECK(testutil::max_abs_diff(left, right) < 1e-4f);
    }
}

TEST_CASE("softmax symmetric input") {
    const Tensor x({3}, {0, 0, 0});
    const Tensor out = nn::softmax(x, 0);
    for (float v : out.data) CHECK(v == doctest::Approx(1.0f / 3.0f));
}

TEST_CASE("softmax survives huge inputs via max subtraction") {
    const Tensor x({2}, {1000, 1000});
    const Tensor out = nn::softmax(x, 0);
    CHECK(out.all_finite());
    CHECK(out.data[0] == doctest::Approx(0.5f));
    CHECK(out.data[1] == doctest::Approx(0.5f));
}

TEST_CASE("softmax matches high-precision oracle") {
    const Tensor x({3}, {1, 2, 3});
    const Tensor out = nn::softmax(x, 0);
    const auto expect = softmax_oracle({1.0L, 2.0L, 3.0L});
    for (size_t i = 0; i < 3; ++i) {
        CHECK(std::abs(out.data[i] - static_cast<float>(expect[i])) < 1e-6f);
    }
}

TEST_CASE("softmax invalid axis") {
    const Tensor x({2, 2});
    CHECK_THROWS_AS(nn::softmax(x, 2), ShapeError);
    CHECK_THROWS_AS(nn::softmax(x, -1), ShapeError);
}

TEST_CASE("softmax slices sum to 1 for random tensors on every axis") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor x = Tensor::uniform({3, 4, 5}, rng, -30.0f, 30.0f);
        for (int axis = 0; axis < 3; ++axis) {
            const Tensor out = nn::softmax(x, axis);
            // sum along axis must be 1 everywhere
            const int64_t axis_len = x.shape[axis];
            int64_t inner = 1;
            for (int i = axis + 1; i < 3; ++i) inner *= x.shape[i];
            const int64_t outer = x.numel() / (axis_len * inner);
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t in = 0; in < inner; ++in) {
                    float sum = 0.0f;
                    for (int64_t j = 0; j < axis_len; ++j) {
                        sum += out.data[static_cast<size_t>(o * axis_len * inner + j * inner +
                                                            in)];
                    }
                    CHECK(std::abs(sum - 1.0f) < 1e-6f);
                }
            }
        }
    }
}

TEST_CASE("layer_norm constant row becomes zeros") {
    const Tensor x({1, 4}, {7, 7, 7, 7});
    const Tensor gamma = Tensor::full({4}, 1.0f);
    const Tensor beta = Tensor::zeros({4});
    const Tensor out = nn::layer_norm(x, gamma, beta);
    for (float v : out.data) CHECK(std::abs(v) < 1e-4f);
}

TEST_CASE("layer_norm gamma zero yields beta") {
    Rng rng(5);
    const Tensor x = Tensor::randn({2, 4}, rng);
    const Tensor gamma = Tensor::zeros({4});
    const Tensor beta({4}, {1, 2, 3, 4});
    const Tensor out = nn::layer_norm(x, gamma, beta);
    for (int64_t r = 0; r < 2; ++r) {
        for (int64_t c = 0; c < 4; ++c) CHECK(out.at(r, c) == doctest::Approx(beta.data[c]));
    }
}

TEST_CASE("layer_norm matches two-pass oracle") {
    Rng rng(6);
    const Tensor x = Tensor::randn({1, 4}, rng, 3.0f);
    const Tensor gamma({4}, {1.5f, 0.5f, 2.0f, 1.0f});
    const Tensor beta({4}, {0.1f, -0.2f, 0.3f, 0.0f});
    const float eps = 1e-5f;
    const Tensor out = nn::layer_norm(x, gamma, beta, eps);

    long double mean = 0.0L, var = 0.0L;
    for (int i = 0; i < 4; ++i) mean += x.data[i];
    mean /= 4.0L;
    for (int i = 0; i < 4; ++i) var += (x.data[i] - mean) * (x.data[i] - mean);
    var /= 4.0L;
    for (int i = 0; i < 4; ++i) {
        const long double want =
            (x.data[i] - mean) / sqrtl(var + eps) * gamma.data[i] + beta.data[i];
        CHECK(std::abs(out.data[i] - static_cast<float>(want)) < 1e-6f);
    }
}

TEST_CASE("layer_norm rows have zero mean unit variance") {
    Rng rng(7);
    const Tensor gamma = Tensor::full({32}, 1.0f);
    const Tensor beta = Tensor::zeros({32});
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor x = Tensor::randn({5, 32}, rng, 2.0f);
        const Tensor out = nn::layer_norm(x, gamma, beta, 1e-6f);
        for (int64_t r = 0; r < 5; ++r) {
            float mean = 0.0f, var = 0.0f;
            for (int64_t c = 0; c < 32; ++c) mean += out.at(r, c);
            mean /= 32.0f;
            for (int64_t c = 0; c < 32; ++c) {
                var += (out.at(r, c) - mean) * (out.at(r, c) - mean);
            }
            var /= 32.0f;
            CHECK(std::abs(mean) < 1e-6f);
            CHECK(std::abs(var - 1.0f) < 1e-4f);
        }
    }
}

TEST_CASE("layer_norm shape mismatch") {
    const Tensor x({2, 4});
    CHECK_THROWS_AS(nn::layer_norm(x, Tensor::zeros({3}), Tensor::zeros({4})), ShapeError);
}

TEST_CASE("cross_attention single key/value row returns the value") {
    Rng rng(8);
    const Tensor q = Tensor::randn({3, 4}, rng);
    const Tensor k = Tensor::randn({1, 4}, rng);
    const Tensor v = Tensor::randn({1, 6}, rng);
    const Tensor out = nn::cross_attention(q, k, v);
    for (int64_t i = 0; i < 3; ++i) {
        for (int64_t p = 0; p < 6; ++p) CHECK(out.at(i, p) == doctest::Approx(v.at(0, p)));
    }
}

TEST_CASE("cross_attention identical keys average the values") {
    Rng rng(9);
    const Tensor q = Tensor::randn({2, 4}, rng);
    Tensor k({3, 4});
    for (int64_t j = 0; j < 3; ++j) {
        for (int64_t p = 0; p < 4; ++p) k.at(j, p) = 0.3f * static_cast<float>(p);
    }
    const Tensor v = Tensor::randn({3, 5}, rng);
    const Tensor out = nn::cross_attention(q, k, v);
    for (int64_t i = 0; i < 2; ++i) {
        for (int64_t p = 0; p < 5; ++p) {
            const float mean = (v.at(0, p) + v.at(1, p) + v.at(2, p)) / 3.0f;
            CHECK(out.at(i, p) == doctest::Approx(mean).epsilon(1e-5));
        }
    }
}

TEST_CASE("cross_attention matches exhaustive oracle on small integers") {
    const Tensor q({2, 2}, {1, 0, 0, 2});
    const Tensor k({3, 2}, {1, 1, 2, 0, 0, 1});
    const Tensor v({3, 2}, {1, 2, 3, 4, 5, 6});
    const Tensor out = nn::cross_attention(q, k, v);
    const Tensor want = attention_oracle(q, k, v);
    CHECK(testutil::max_abs_diff(out, want) < 1e-6f);
}

TEST_CASE("cross_attention oracle equality on random inputs") {
    Rng rng(10);
    for (int trial = 0; trial < 25; ++trial) {
        const Tensor q = Tensor::randn({4, 8}, rng);
        const Tensor k = Tensor::randn({6, 8}, rng);
        const Tensor v = Tensor::randn({6, 3}, rng);
        CHECK(testutil::max_abs_diff(nn::cross_attention(q, k, v), attention_oracle(q, k, v)) <
              1e-6f);
    }
}

TEST_CASE("cross_attention permutation equivariance in paired key/value order") {
    Rng rng(11);
    const Tensor q = Tensor::randn({3, 4}, rng);
    const Tensor k = Tensor::randn({5, 4}, rng);
    const Tensor v = Tensor::randn({5, 2}, rng);
    const Tensor base = nn::cross_attention(q, k, v);

    const std::vector<int64_t> perm{3, 0, 4, 1, 2};
    Tensor kp({5, 4}), vp({5, 2});
    for (int64_t j = 0; j < 5; ++j) {
        for (int64_t p = 0; p < 4; ++p) kp.at(j, p) = k.at(perm[static_cast<size_t>(j)], p);
        for (int64_t p = 0; p < 2; ++p) vp.at(j, p) = v.at(perm[static_cast<size_t>(j)], p);
    }
    const Tensor permuted = nn::cross_attention(q, kp, vp);
    CHECK(testutil::max_abs_diff(base, permuted) < 1e-6f);
}

TEST_CASE("cross_attention dimension mismatches") {
    CHECK_THROWS_AS(nn::cross_attention(Tensor({2, 3}), Tensor({4, 5}), Tensor({4, 2})),
                    ShapeError);
    CHECK_THROWS_AS(nn::cross_attention(Tensor({2, 3}), Tensor({4, 3}), Tensor({5, 2})),
                    ShapeError);
}

TEST_CASE("grad_check quadratic") {
    Rng rng(12);
    const Tensor x = Tensor::randn({6}, rng);
    Tensor grad = x;
    for (auto& v : grad.data) v *= 2.0f;
    const auto f = [](const Tensor& t) {
        double acc = 0.0;
        for (float v : t.data) acc += static_cast<double>(v) * v;
        return acc;
    };
    CHECK(nn::grad_check(f, x, grad, 1e-3f) < 1e-5);
}

TEST_CASE("grad_check constant function") {
    const Tensor x({4}, {1, 2, 3, 4});
    const Tensor zero = Tensor::zeros({4});
    CHECK(nn::grad_check([](const Tensor&) { return 2.5; }, x, zero, 1e-3f) < 1e-8);
}

TEST_CASE("grad_check rejects non-finite evaluations") {
    const Tensor x({1}, {1.0f});
    const Tensor g({1}, {0.0f});
    CHECK_THROWS_AS(
        nn::grad_check([](const Tensor&) { return std::numeric_limits<double>::infinity(); },
                       x, g, 1e-3f),
        Error);
}

TEST_CASE("multi_head_attention single head equals cross_attention") {
    Rng rng(13);
    const Tensor q = Tensor::randn({3, 8}, rng);
    const Tensor k = Tensor::randn({5, 8}, rng);
    const Tensor v = Tensor::randn({5, 8}, rng);
    CHECK(testutil::max_abs_diff(nn::multi_head_attention(q, k, v, 1),
                                 nn::cross_attention(q, k, v)) == 0.0f);
}

TEST_CASE("causal attention masks future keys") {
    Rng rng(14);
    const Tensor q = Tensor::randn({4, 4}, rng);
    const Tensor k = Tensor::randn({4, 4}, rng);
    Tensor v = Tensor::randn({4, 3}, rng);
    const Tensor out = nn::attention(q, k, v, /*causal=*/true);
    // row 0 only sees key 0 regardless of later values
    Tensor v2 = v;
    for (int64_t p = 0; p < 3; ++p) v2.at(3, p) += 100.0f;
    const Tensor out2 = nn::attention(q, k, v2, /*causal=*/true);
    for (int64_t p = 0; p < 3; ++p) {
        CHECK(out.at(0, p) == out2.at(0, p));
        CHECK(out.at(2, p) == out2.at(2, p));
        CHECK(out.at(3, p) != out2.at(3, p));
    }
}
