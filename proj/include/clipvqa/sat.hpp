#pragma once

// Spatiotemporal quality aggregation: temporal positions are added to the
// pseudo-MOS tokens, one MSA layer mixes them across frames, the per-frame
// fusion tokens are averaged over blocks and scaled channel-wise by a
// learnable delta, and the frame mean of the combined matrix is projected
// to the video-level representation y_v.

#include <string>
#include <vector>

#include "clipvqa/fpt.hpp"
#include "clipvqa/frame_ingest.hpp"
#include "clipvqa/nn.hpp"

namespace clipvqa {

struct Sat {
    int dim = 0;
    int repr = 0;
    TensorPtr v_pos;  // [N x d] sinusoid over frame index; fixed, not trained
    LayerNorm ln_inner, ln_outer;
    MultiHeadAttention msa;
    TensorPtr delta;  // [d]
    Linear out_proj;  // d -> r, projection style (no bias)

    Sat() = default;
    Sat(int dim_, int n_frames, int repr_, int heads, RngState& rng)
        : dim(dim_),
          repr(repr_),
          v_pos(sinusoid_table(n_frames, dim_)),
          ln_inner(dim_),
          ln_outer(dim_),
          msa(dim_, heads, rng),
          delta(randn_param({dim_}, rng, 0.02)),
          out_proj(dim_, repr_, rng, /*with_bias=*/false) {}

    TensorPtr operator()(const TokenBundle& bundle, bool use_fusion = true) const {
        if (bundle.empty() || !bundle.mos_tokens)
            throw std::invalid_argument("sat: empty token bundle");
        auto m = add(bundle.mos_tokens, v_pos);
        m = ln_outer(add(m, msa(ln_inner(m))));

        if (use_fusion && bundle.n_fusion_levels() > 0) {
            std::vector<TensorPtr> averaged;
            averaged.reserve(bundle.fusion_tokens.size());
            for (const auto& per_frame : bundle.fusion_tokens) {
                auto stacked = concat(per_frame, 0);  // [L x d]
                averaged.push_back(reshape(mean_axis(stacked, 0), {1, dim}));
            }
            auto fusion = mul_rowvec(concat(averaged, 0), delta);  // [N x d]
            m = add(fusion, m);
        }
        auto pooled = reshape(mean_axis(m, 0), {1, dim});
        return reshape(out_proj(pooled), {repr});  // [r]
    }

    void collect(const std::string& prefix, ParamList& out) const {
        ln_inner.collect(prefix + ".ln_inner", out);
        msa.collect(prefix + ".msa", out);
        ln_outer.collect(prefix + ".ln_outer", out);
        out.push_back({prefix + ".delta", delta, false});
        out_proj.collect(prefix + ".out_proj", out);
    }
};

}  // namespace clipvqa
