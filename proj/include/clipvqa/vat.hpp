#pragma once

// Video content and language aggregation. The frame-token representation is
// reduced to a g x r content matrix by a small convolutional stage (3x3
// same-padded conv over each frame's patch grid, global average pool, then a
// linear map over the frame axis), and fused with the language encoding by
// B CandLA cross-attention blocks.

#include <string>
#include <vector>

#include "clipvqa/nn.hpp"
#include "clipvqa/tensor.hpp"

namespace clipvqa {

// Constant 0/1 row-selection matrix that shifts a row-major grid by
// (dy, dx) with zero padding: out[t] = in[t shifted] or zero row.
inline TensorPtr grid_shift_matrix(int grid_h, int grid_w, int dy, int dx) {
    const int p = grid_h * grid_w;
    auto m = Tensor::create({p, p});
    for (int gy = 0; gy < grid_h; ++gy)
        for (int gx = 0; gx < grid_w; ++gx) {
            const int sy = gy + dy, sx = gx + dx;
            if (sy < 0 || sy >= grid_h || sx < 0 || sx >= grid_w) continue;
            const int t = gy * grid_w + gx;
            const int s = sy * grid_w + sx;
            m->data[static_cast<std::size_t>(t) * p + s] = 1.0;
        }
    return m;
}

// Two-stage reduction of M_frame (N matrices of P x d tokens) to Y_c (g x r):
// stage 1 treats each frame's tokens as a grid_h x grid_w image with d
// channels, applies a 3x3 same-padded convolution to r channels and a global
// average pool; stage 2 maps the N frame axis to g rows linearly.
struct ContentReducer {
    int grid_h = 0, grid_w = 0;
    int dim = 0, repr = 0;
    std::vector<TensorPtr> shift_mats;  // 9 constant [P x P] matrices
    TensorPtr conv_weight;              // [9*d x r], one d x r block per tap
    TensorPtr conv_bias;                // [r]
    TensorPtr frame_weight;             // [g x N]
    TensorPtr frame_bias;               // [g]

    ContentReducer() = default;
    ContentReducer(int grid_h_, int grid_w_, int dim_, int repr_, int n_frames, int g,
                   RngState& rng)
        : grid_h(grid_h_), grid_w(grid_w_), dim(dim_), repr(repr_) {
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
                shift_mats.push_back(grid_shift_matrix(grid_h, grid_w, dy, dx));
        const double stddev = std::sqrt(2.0 / (9.0 * dim_ + repr_));
        conv_weight = randn_param({9 * dim_, repr_}, rng, stddev);
        conv_bias = make_param({repr_});
        frame_weight = glorot_param(g, n_frames, rng);
        frame_bias = make_param({g});
    }

    TensorPtr operator()(const std::vector<TensorPtr>& frame_tokens) const {
        const int p = grid_h * grid_w;
        std::vector<TensorPtr> frame_rows;
        frame_rows.reserve(frame_tokens.size());
        for (const auto& tokens : frame_tokens) {
            if (tokens->shape.size() != 2 || tokens->shape[0] != p || tokens->shape[1] != dim)
                shape_fail("reduce_content", tokens->shape, {p, dim});
            TensorPtr acc;
            for (int tap = 0; tap < 9; ++tap) {
                auto shifted = matmul(shift_mats[static_cast<std::size_t>(tap)], tokens);
                auto w_tap = slice(conv_weight, 0, tap * dim, dim);  // [d x r]
                auto term = matmul(shifted, w_tap);                  // [P x r]
                acc = acc ? add(acc, term) : term;
            }
            acc = add_rowvec(acc, conv_bias);
            frame_rows.push_back(reshape(mean_axis(acc, 0), {1, repr}));  // global average
        }
        auto per_frame = concat(frame_rows, 0);  // [N x r]
        auto mapped = matmul(frame_weight, per_frame);  // [g x r]
        // Per-row bias over the g axis.
        return transpose(add_rowvec(transpose(mapped), frame_bias));
    }

    void collect(const std::string& prefix, ParamList& out) const {
        out.push_back({prefix + ".conv.weight", conv_weight, false});
        out.push_back({prefix + ".conv.bias", conv_bias, false});
        out.push_back({prefix + ".frame_map.weight", frame_weight, false});
        out.push_back({prefix + ".frame_map.bias", frame_bias, false});
    }
};

// CandLA block: Y_t + MCA(LN_q(Y_t), LN_k(Y_c), LN_v(Y_c)) followed by a
// residual MLP. Queries come from the language stream, keys/values from
// the content stream.
struct CandlaBlock {
    LayerNorm ln_q, ln_k, ln_v, ln_mlp;
    MultiHeadAttention mca;
    Mlp mlp;

    CandlaBlock() = default;
    CandlaBlock(int repr, int heads, RngState& rng)
        : ln_q(repr), ln_k(repr), ln_v(repr), ln_mlp(repr), mca(repr, heads, rng), mlp(repr, rng) {}

    TensorPtr operator()(const TensorPtr& y_lang, const TensorPtr& y_content) const {
        auto attended = add(y_lang, mca(ln_q(y_lang), ln_k(y_content), ln_v(y_content)));
        return add(attended, mlp(ln_mlp(attended)));
    }

    void collect(const std::string& prefix, ParamList& out) const {
        ln_q.collect(prefix + ".ln_q", out);
        ln_k.collect(prefix + ".ln_k", out);
        ln_v.collect(prefix + ".ln_v", out);
        mca.collect(prefix + ".mca", out);
        ln_mlp.collect(prefix + ".ln_mlp", out);
        mlp.collect(prefix + ".mlp", out);
    }
};

struct Vat {
    ContentReducer reduce;
    std::vector<CandlaBlock> blocks;

    Vat() = default;
    Vat(int grid_h, int grid_w, int dim, int repr, int n_frames, int g, int n_blocks, int heads,
        RngState& rng)
        : reduce(grid_h, grid_w, dim, repr, n_frames, g, rng) {
        if (n_blocks < 1) throw ConfigError("vat: block count must be >= 1");
        for (int b = 0; b < n_blocks; ++b) blocks.emplace_back(repr, heads, rng);
    }

    // Block 1 consumes Y_t; each later block consumes the previous block's
    // output as its query stream. Y_c is shared across blocks.
    TensorPtr operator()(const TensorPtr& y_text, const std::vector<TensorPtr>& frame_tokens) const {
        auto y_content = reduce(frame_tokens);
        auto y = y_text;
        for (const auto& block : blocks) y = block(y, y_content);
        return y;
    }

    void collect(const std::string& prefix, ParamList& out) const {
        reduce.collect(prefix + ".reduce", out);
        for (std::size_t b = 0; b < blocks.size(); ++b)
            blocks[b].collect(prefix + ".block" + std::to_string(b + 1), out);
    }
};

}  // namespace clipvqa
