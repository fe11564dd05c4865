#pragma once

// Transformer building blocks on top of the tensor primitives:
// linear layers, layer norm with learnable affine, multi-head attention
// (self and cross), MLP, and the pre-LN encoder layer.

#include <cmath>
#include <string>
#include <vector>

#include "clipvqa/rng.hpp"
#include "clipvqa/tensor.hpp"

namespace clipvqa {

struct Parameter {
    std::string name;
    TensorPtr tensor;
    bool frozen = false;
};

using ParamList = std::vector<Parameter>;

inline TensorPtr make_param(Shape shape) {
    auto t = Tensor::create(std::move(shape));
    t->requires_grad = true;
    return t;
}

inline TensorPtr randn_param(Shape shape, RngState& rng, double stddev) {
    auto t = make_param(std::move(shape));
    for (auto& v : t->data) v = rng.normal(0.0, stddev);
    return t;
}

// Glorot-normal init for weight matrices.
inline TensorPtr glorot_param(int fan_in, int fan_out, RngState& rng) {
    const double stddev = std::sqrt(2.0 / (fan_in + fan_out));
    return randn_param({fan_in, fan_out}, rng, stddev);
}

struct Linear {
    TensorPtr weight;  // [in x out]
    TensorPtr bias;    // [out], absent for projection-style maps

    Linear() = default;
    Linear(int in, int out, RngState& rng, bool with_bias = true)
        : weight(glorot_param(in, out, rng)),
          bias(with_bias ? make_param({out}) : nullptr) {}

    TensorPtr operator()(const TensorPtr& x) const {
        auto y = matmul(x, weight);
        return bias ? add_rowvec(y, bias) : y;
    }

    void collect(const std::string& prefix, ParamList& out, bool frozen = false) const {
        out.push_back({prefix + ".weight", weight, frozen});
        if (bias) out.push_back({prefix + ".bias", bias, frozen});
    }
};

struct LayerNorm {
    TensorPtr gain;
    TensorPtr bias;
    double eps = 1e-5;

    LayerNorm() = default;
    explicit LayerNorm(int dim) : gain(make_param({dim})), bias(make_param({dim})) {
        std::fill(gain->data.begin(), gain->data.end(), 1.0);
    }

    TensorPtr operator()(const TensorPtr& x) const { return layer_norm(x, gain, bias, eps); }

    void collect(const std::string& prefix, ParamList& out, bool frozen = false) const {
        out.push_back({prefix + ".gain", gain, frozen});
        out.push_back({prefix + ".bias", bias, frozen});
    }
};

// Scaled dot-product multi-head attention with learnable input projections
// and output projection, each with bias. Per-head scale is 1/sqrt(dim/heads).
struct MultiHeadAttention {
    int dim = 0;
    int heads = 1;
    bool causal = false;
    Linear wq, wk, wv, wo;

    MultiHeadAttention() = default;
    MultiHeadAttention(int dim_, int heads_, RngState& rng, bool causal_ = false)
        : dim(dim_), heads(heads_), causal(causal_) {
        if (heads <= 0 || dim % heads != 0)
            throw ConfigError("attention: heads " + std::to_string(heads) +
                              " does not divide width " + std::to_string(dim));
        wq = Linear(dim, dim, rng);
        wk = Linear(dim, dim, rng);
        wv = Linear(dim, dim, rng);
        wo = Linear(dim, dim, rng);
    }

    // Upper-triangular -1e30 mask; exp() of the shifted logits underflows
    // to exactly zero so future positions contribute nothing.
    static TensorPtr causal_mask(int n) {
        auto m = Tensor::create({n, n});
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) m->data[static_cast<std::size_t>(i) * n + j] = -1e30;
        return m;
    }

    TensorPtr operator()(const TensorPtr& q_src, const TensorPtr& k_src,
                         const TensorPtr& v_src) const {
        if (q_src->shape.size() != 2 || q_src->shape[1] != dim)
            shape_fail("attention(q)", q_src->shape, {q_src->shape.empty() ? 0 : q_src->shape[0], dim});
        if (k_src->shape != v_src->shape) shape_fail("attention(k,v)", k_src->shape, v_src->shape);
        const int n_q = q_src->shape[0];
        const int dh = dim / heads;
        const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

        auto q = wq(q_src);
        auto k = wk(k_src);
        auto v = wv(v_src);

        TensorPtr mask = causal ? causal_mask(n_q) : nullptr;
        std::vector<TensorPtr> ctx;
        ctx.reserve(heads);
        for (int h = 0; h < heads; ++h) {
            auto qh = slice(q, 1, h * dh, dh);
            auto kh = slice(k, 1, h * dh, dh);
            auto vh = slice(v, 1, h * dh, dh);
            auto logits = scale(matmul(qh, transpose(kh)), att_scale);
            if (mask) logits = add(logits, mask);
            auto weights = softmax(logits);  // rows sum to 1
            ctx.push_back(matmul(weights, vh));
        }
        return wo(heads == 1 ? ctx[0] : concat(ctx, 1));
    }

    TensorPtr operator()(const TensorPtr& x) const { return (*this)(x, x, x); }

    // Attention weights of one head, for inspection in tests.
    TensorPtr weights_of_head(const TensorPtr& q_src, const TensorPtr& k_src, int h) const {
        NoGradGuard ng;
        const int dh = dim / heads;
        auto qh = slice(wq(q_src), 1, h * dh, dh);
        auto kh = slice(wk(k_src), 1, h * dh, dh);
        auto logits = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
        if (causal) logits = add(logits, causal_mask(q_src->shape[0]));
        return softmax(logits);
    }

    void collect(const std::string& prefix, ParamList& out, bool frozen = false) const {
        wq.collect(prefix + ".wq", out, frozen);
        wk.collect(prefix + ".wk", out, frozen);
        wv.collect(prefix + ".wv", out, frozen);
        wo.collect(prefix + ".wo", out, frozen);
    }
};

struct Mlp {
    Linear fc1, fc2;

    Mlp() = default;
    Mlp(int dim, RngState& rng, int expansion = 4)
        : fc1(dim, dim * expansion, rng), fc2(dim * expansion, dim, rng) {}

    TensorPtr operator()(const TensorPtr& x) const { return fc2(gelu(fc1(x))); }

    void collect(const std::string& prefix, ParamList& out, bool frozen = false) const {
        fc1.collect(prefix + ".fc1", out, frozen);
        fc2.collect(prefix + ".fc2", out, frozen);
    }
};

// Pre-LN transformer layer: x + MSA(LN(x)), then x + MLP(LN(x)).
struct EncoderLayer {
    LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    Mlp mlp;

    EncoderLayer() = default;
    EncoderLayer(int dim, int heads, RngState& rng, bool causal = false, int expansion = 4)
        : ln1(dim), ln2(dim), attn(dim, heads, rng, causal), mlp(dim, rng, expansion) {}

    TensorPtr operator()(const TensorPtr& x) const {
        auto y = add(x, attn(ln1(x)));
        return add(y, mlp(ln2(y)));
    }

    void collect(const std::string& prefix, ParamList& out, bool frozen = false) const {
        ln1.collect(prefix + ".ln1", out, frozen);
        attn.collect(prefix + ".attn", out, frozen);
        ln2.collect(prefix + ".ln2", out, frozen);
        mlp.collect(prefix + ".mlp", out, frozen);
    }
};

inline void zero_grads(const ParamList& params) {
    for (const auto& p : params) {
        p.tensor->ensure_grad();
        p.tensor->zero_grad();
    }
}

}  // namespace clipvqa
