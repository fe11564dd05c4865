#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "clipvqa/gradcheck.hpp"
#include "clipvqa/nn.hpp"
#include "clipvqa/rng.hpp"
#include "clipvqa/tensor.hpp"

using namespace clipvqa;

namespace {

TensorPtr random_tensor(Shape shape, RngState& rng, bool req_grad = true,
                        double lo = -1.0, double hi = 1.0) {
    auto t = Tensor::create(std::move(shape));
    for (auto& v : t->data) v = rng.uniform(lo, hi);
    t->requires_grad = req_grad;
    return t;
}

// Independent oracle for the softmax example values: plain exp/normalize
// evaluated without the library path.
std::vector<double> softmax_oracle(const std::vector<double>& z) {
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    std::vector<double> e;
    double sum = 0.0;
    for (double v : z) {
        e.push_back(std::exp(v - m));
        sum += e.back();
    }
    for (auto& v : e) v /= sum;
    return e;
}

double fd_check(const std::function<TensorPtr()>& f, const ParamList& params) {
    return grad_check(f, params).max_rel_err;
}

}  // namespace

TEST_CASE("softmax of uniform logits is uniform") {
    finite_checks() = true;
    auto z = Tensor::create({5}, {0, 0, 0, 0, 0});
    auto y = softmax(z);
    for (double v : y->data) CHECK(v == Catch::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("softmax shift invariance") {
    RngState rng(3, "softmax-shift");
    auto z = random_tensor({7}, rng, false, -2, 2);
    auto y1 = softmax(z);
    auto shifted = Tensor::create({7});
    for (int i = 0; i < 7; ++i) shifted->data[i] = z->data[i] + 3.25;
    auto y2 = softmax(shifted);
    for (int i = 0; i < 7; ++i) CHECK(y1->data[i] == Catch::Approx(y2->data[i]).margin(1e-13));
}

TEST_CASE("softmax matches the hand-evaluated oracle") {
    // z = [-4,-1,0,-1,-4] appears throughout the quality head.
    const std::vector<double> z{-4, -1, 0, -1, -4};
    const auto expect = softmax_oracle(z);
    // Frozen oracle values.
    CHECK(expect[0] == Catch::Approx(0.01033).margin(1e-5));
    CHECK(expect[1] == Catch::Approx(0.20756).margin(1e-5));
    CHECK(expect[2] == Catch::Approx(0.56421).margin(1e-5));

    auto y = softmax(Tensor::create({5}, z));
    for (int i = 0; i < 5; ++i) CHECK(y->data[i] == Catch::Approx(expect[i]).margin(1e-12));
}

TEST_CASE("softmax rows are positive and sum to 1") {
    RngState rng(11, "softmax-rows");
    auto x = random_tensor({6, 9}, rng, false, -30, 30);
    auto y = softmax(x);
    for (int i = 0; i < 6; ++i) {
        double sum = 0.0;
        for (int j = 0; j < 9; ++j) {
            CHECK(y->at(i, j) > 0.0);
            sum += y->at(i, j);
        }
        CHECK(sum == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("shape mismatches raise structured errors naming both shapes") {
    auto a = Tensor::create({2, 3});
    auto b = Tensor::create({3, 3});
    CHECK_THROWS_MATCHES(add(a, b), ShapeError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("add") &&
                             Catch::Matchers::ContainsSubstring("[2,3]") &&
                             Catch::Matchers::ContainsSubstring("[3,3]")));
    auto c = Tensor::create({4, 5});
    CHECK_THROWS_AS(matmul(a, c), ShapeError);
}

TEST_CASE("gradients of every primitive match finite differences") {
    finite_checks() = true;
    RngState rng(17, "prim-grads");

    SECTION("matmul") {
        auto a = random_tensor({3, 4}, rng);
        auto b = random_tensor({4, 2}, rng);
        auto f = [&] { return mean_axis(reshape(matmul(a, b), {6}), 0); };
        CHECK(fd_check(f, {{"a", a, false}, {"b", b, false}}) < 1e-4);
    }
    SECTION("transpose, slice, concat") {
        auto a = random_tensor({3, 5}, rng);
        auto b = random_tensor({2, 5}, rng);
        auto f = [&] {
            auto cat = concat({transpose(transpose(a)), b}, 0);  // [5 x 5]
            auto s = slice(cat, 1, 1, 3);
            return mean_axis(reshape(s, {15}), 0);
        };
        CHECK(fd_check(f, {{"a", a, false}, {"b", b, false}}) < 1e-4);
    }
    SECTION("mul, scale, add_rowvec, mul_rowvec") {
        auto a = random_tensor({4, 3}, rng);
        auto b = random_tensor({4, 3}, rng);
        auto v = random_tensor({3}, rng);
        auto f = [&] {
            auto x = mul_rowvec(add_rowvec(scale(mul(a, b), 1.7), v), v);
            return mean_axis(reshape(x, {12}), 0);
        };
        CHECK(fd_check(f, {{"a", a, false}, {"b", b, false}, {"v", v, false}}) < 1e-4);
    }
    SECTION("softmax") {
        auto a = random_tensor({3, 4}, rng);
        auto w = random_tensor({3, 4}, rng, false);
        auto f = [&] {
            return mean_axis(reshape(mul(softmax(a), w), {12}), 0);
        };
        CHECK(fd_check(f, {{"a", a, false}}) < 1e-4);
    }
    SECTION("gelu") {
        auto a = random_tensor({2, 6}, rng);
        auto f = [&] { return mean_axis(reshape(gelu(a), {12}), 0); };
        CHECK(fd_check(f, {{"a", a, false}}) < 1e-4);
    }
    SECTION("mean over each axis of a rank-3 tensor") {
        auto a = random_tensor({2, 3, 4}, rng);
        for (int axis = 0; axis < 3; ++axis) {
            auto f = [&] {
                auto m = mean_axis(a, axis);
                return mean_axis(reshape(m, {static_cast<int>(numel(m->shape))}), 0);
            };
            CHECK(fd_check(f, {{"a", a, false}}) < 1e-4);
        }
    }
    SECTION("embedding") {
        auto table = random_tensor({7, 4}, rng);
        const std::vector<int> ids{1, 3, 3, 0};
        auto f = [&] { return mean_axis(reshape(embedding(table, ids), {16}), 0); };
        CHECK(fd_check(f, {{"table", table, false}}) < 1e-4);
    }
    SECTION("cosine distance w.r.t. both sides") {
        auto a = random_tensor({5}, rng, true, 0.1, 1.0);
        auto b = random_tensor({5}, rng, true, 0.1, 1.0);
        auto f = [&] { return cosine_distance(a, b); };
        CHECK(fd_check(f, {{"a", a, false}, {"b", b, false}}) < 1e-4);
    }
    SECTION("cross entropy w.r.t. predictions") {
        auto p = Tensor::create({4}, {0.1, 0.2, 0.3, 0.4});
        auto q = random_tensor({4}, rng, true, 0.05, 1.0);
        auto f = [&] { return cross_entropy(p, softmax(q)); };
        CHECK(fd_check(f, {{"q", q, false}}) < 1e-4);
    }
}

TEST_CASE("layer norm normalizes rows before gain and bias") {
    RngState rng(23, "ln");
    auto x = random_tensor({4, 8}, rng, false, -3, 3);
    auto gain = Tensor::create({8}, std::vector<double>(8, 1.0));
    auto bias = Tensor::create({8});
    auto y = layer_norm(x, gain, bias);
    for (int i = 0; i < 4; ++i) {
        double mean = 0.0, var = 0.0;
        for (int j = 0; j < 8; ++j) mean += y->at(i, j);
        mean /= 8;
        for (int j = 0; j < 8; ++j) var += (y->at(i, j) - mean) * (y->at(i, j) - mean);
        var /= 8;
        CHECK(mean == Catch::Approx(0.0).margin(1e-6));
        CHECK(var == Catch::Approx(1.0).margin(1e-4));  // eps=1e-5 shifts variance slightly
    }
}

TEST_CASE("layer norm gain/bias gradients on a random 4x8 input") {
    finite_checks() = true;
    RngState rng(29, "ln-grad");
    auto x = random_tensor({4, 8}, rng);
    auto gain = random_tensor({8}, rng, true, 0.5, 1.5);
    auto bias = random_tensor({8}, rng);
    auto w = random_tensor({4, 8}, rng, false);
    auto f = [&] { return mean_axis(reshape(mul(layer_norm(x, gain, bias), w), {32}), 0); };
    auto report = grad_check(f, {{"x", x, false}, {"gain", gain, false}, {"bias", bias, false}},
                             {.eps = 1e-5});
    CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("grad_check basics") {
    SECTION("f(x) = x*x at x=3 gives gradient 6") {
        auto x = Tensor::create({1}, {3.0}, true);
        auto f = [&] { return mul(x, x); };
        auto report = grad_check(f, {{"x", x, false}}, {.eps = 1e-5});
        REQUIRE(report.params.size() == 1);
        CHECK(report.params[0].max_rel_err < 1e-7);
        // Analytic value itself:
        zero_grads({{"x", x, false}});
        auto loss = f();
        backward(loss);
        CHECK(x->grad[0] == Catch::Approx(6.0).margin(1e-12));
    }
    SECTION("frozen parameters are excluded from the report") {
        auto x = Tensor::create({1}, {2.0}, true);
        auto y = Tensor::create({1}, {4.0}, true);
        auto f = [&] { return mul(x, y); };
        auto report = grad_check(f, {{"x", x, false}, {"y", y, true}});
        REQUIRE(report.params.size() == 1);
        CHECK(report.params[0].name == "x");
    }
    SECTION("non-scalar f is a usage error") {
        auto x = Tensor::create({2}, {1.0, 2.0}, true);
        auto f = [&] { return add(x, x); };
        CHECK_THROWS_AS(grad_check(f, {{"x", x, false}}), std::invalid_argument);
    }
}

TEST_CASE("gradient accumulation is additive and caller-zeroed") {
    auto x = Tensor::create({1}, {1.5}, true);
    auto f = [&] { return mul(x, x); };
    auto l1 = f();
    backward(l1);
    const double once = x->grad[0];
    auto l2 = f();
    backward(l2);
    CHECK(x->grad[0] == Catch::Approx(2.0 * once).margin(1e-12));
    x->zero_grad();
    CHECK(x->grad[0] == 0.0);
}

TEST_CASE("finite guard rejects NaN results when enabled") {
    finite_checks() = true;
    auto a = Tensor::create({1}, {1e308});
    CHECK_THROWS_WITH(mul(a, a), Catch::Matchers::ContainsSubstring("non-finite"));
}

TEST_CASE("rng streams are deterministic and independent") {
    RngState a(42, "x");
    RngState b(42, "x");
    for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
    RngState c(42, "y");
    CHECK(RngState(42, "x").next_u64() != c.next_u64());
    RngState d(43, "x");
    CHECK(RngState(42, "x").next_u64() != d.next_u64());
}
