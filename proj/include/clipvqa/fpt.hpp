#pragma once

// Frame perception Transformer: L CAT blocks. Each block runs every frame's
// token matrix through its own pre-LN encoder layer, lets the N updated
// pseudo-MOS tokens exchange information through a fusion MSA, and appends
// the resulting fusion token to each frame's matrix. Fusion tokens from all
// blocks are retained (the aggressive strategy), so the per-frame sequence
// grows from P+1 to P+1+L rows.

#include <string>
#include <vector>

#include "clipvqa/nn.hpp"
#include "clipvqa/tensor.hpp"

namespace clipvqa {

struct CatBlock {
    EncoderLayer frame_layer;
    LayerNorm fusion_ln;
    MultiHeadAttention fusion_msa;

    CatBlock() = default;
    CatBlock(int dim, int heads, RngState& rng)
        : frame_layer(dim, heads, rng), fusion_ln(dim), fusion_msa(dim, heads, rng) {}

    void collect(const std::string& prefix, ParamList& out) const {
        frame_layer.collect(prefix + ".frame", out);
        fusion_ln.collect(prefix + ".fusion.ln", out);
        fusion_msa.collect(prefix + ".fusion.attn", out);
    }
};

struct FptOptions {
    // Test hook: replaces the fusion MSA with the identity, severing the
    // only cross-frame path while keeping token growth intact.
    bool fusion_msa_identity = false;
    // Ablation: no fusion tokens at all (no fusion MSA, no concatenation);
    // per-frame sequences stay at P+1 rows.
    bool fusion_tokens = true;
};

struct TokenBundle {
    std::vector<TensorPtr> frame_tokens;               // N entries, each [P x d]
    TensorPtr mos_tokens;                              // [N x d]
    std::vector<std::vector<TensorPtr>> fusion_tokens;  // N x L entries, each [1 x d]

    int n_frames() const { return static_cast<int>(frame_tokens.size()); }
    int n_fusion_levels() const {
        return fusion_tokens.empty() ? 0 : static_cast<int>(fusion_tokens[0].size());
    }
    bool empty() const { return frame_tokens.empty(); }
};

struct Fpt {
    int dim = 0;
    int patches = 0;  // P
    std::vector<CatBlock> blocks;

    Fpt() = default;
    Fpt(int dim_, int patches_, int n_blocks, int heads, RngState& rng)
        : dim(dim_), patches(patches_) {
        if (n_blocks < 1) throw ConfigError("fpt: block count must be >= 1");
        blocks.reserve(static_cast<std::size_t>(n_blocks));
        for (int l = 0; l < n_blocks; ++l) blocks.emplace_back(dim, heads, rng);
    }

    int n_blocks() const { return static_cast<int>(blocks.size()); }

    // One CAT block: per-frame encoding, cross-frame fusion MSA with
    // residual, and fusion-token concatenation. `level` is 1-based.
    static std::vector<TensorPtr> cat_block(const CatBlock& block, int level, int patches,
                                            const std::vector<TensorPtr>& frames,
                                            std::vector<TensorPtr>* fusion_rows,
                                            const FptOptions& opts = {}) {
        const int expected = opts.fusion_tokens ? patches + 1 + (level - 1) : patches + 1;
        std::vector<TensorPtr> encoded;
        encoded.reserve(frames.size());
        for (const auto& m : frames) {
            if (m->shape.size() != 2 || m->shape[0] != expected)
                throw ShapeError("cat_block " + std::to_string(level) + ": expected " +
                                 std::to_string(expected) + " tokens per frame, got " +
                                 shape_str(m->shape));
            encoded.push_back(block.frame_layer(m));
        }

        if (!opts.fusion_tokens) return encoded;

        std::vector<TensorPtr> mos_rows;
        mos_rows.reserve(encoded.size());
        for (const auto& m : encoded) mos_rows.push_back(slice(m, 0, 0, 1));
        auto m_mos = concat(mos_rows, 0);  // [N x d]
        auto m_fusion = opts.fusion_msa_identity
                            ? m_mos
                            : add(block.fusion_msa(block.fusion_ln(m_mos)), m_mos);

        std::vector<TensorPtr> out;
        out.reserve(encoded.size());
        for (std::size_t n = 0; n < encoded.size(); ++n) {
            auto f_row = slice(m_fusion, 0, static_cast<int>(n), 1);
            if (fusion_rows) fusion_rows->push_back(f_row);
            out.push_back(concat({encoded[n], f_row}, 0));
        }
        return out;
    }

    // Runs all L blocks over the initial per-frame matrices (each [P+1 x d])
    // and splits the result into the three representations. Fusion tokens are
    // snapshots taken at emission; the copies kept inside the per-frame
    // matrices keep evolving through later blocks.
    TokenBundle run(const std::vector<TensorPtr>& initial_frames,
                    const FptOptions& opts = {}) const {
        if (blocks.empty()) throw ConfigError("fpt: no blocks configured");
        const int n = static_cast<int>(initial_frames.size());
        std::vector<TensorPtr> frames = initial_frames;
        std::vector<std::vector<TensorPtr>> fusion(static_cast<std::size_t>(n));

        for (int l = 1; l <= n_blocks(); ++l) {
            std::vector<TensorPtr> rows;
            frames = cat_block(blocks[static_cast<std::size_t>(l - 1)], l, patches, frames,
                               opts.fusion_tokens ? &rows : nullptr, opts);
            if (opts.fusion_tokens)
                for (int i = 0; i < n; ++i) fusion[static_cast<std::size_t>(i)].push_back(rows[i]);
        }

        TokenBundle bundle;
        bundle.frame_tokens.reserve(static_cast<std::size_t>(n));
        std::vector<TensorPtr> mos_rows;
        mos_rows.reserve(static_cast<std::size_t>(n));
        for (const auto& m : frames) {
            bundle.frame_tokens.push_back(slice(m, 0, 1, patches));
            mos_rows.push_back(slice(m, 0, 0, 1));
        }
        bundle.mos_tokens = concat(mos_rows, 0);
        bundle.fusion_tokens = std::move(fusion);
        return bundle;
    }

    void collect(const std::string& prefix, ParamList& out) const {
        for (std::size_t l = 0; l < blocks.size(); ++l)
            blocks[l].collect(prefix + ".block" + std::to_string(l + 1), out);
    }
};

}  // namespace clipvqa
