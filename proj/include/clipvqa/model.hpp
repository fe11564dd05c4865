#pragma once

// Full model: frame token extraction -> FPT -> SAT for the video-level
// representation, frozen text encoding -> VAT for the video-language
// representation, and softmax fusion into the g-way prediction. The text
// encoding Y_t is computed once at construction (the encoder is frozen)
// and reused as a constant.

#include <string>
#include <vector>

#include "clipvqa/fpt.hpp"
#include "clipvqa/frame_ingest.hpp"
#include "clipvqa/mos2language.hpp"
#include "clipvqa/nn.hpp"
#include "clipvqa/quality_head.hpp"
#include "clipvqa/sat.hpp"
#include "clipvqa/vat.hpp"

namespace clipvqa {

struct ModelConfig {
    int n_frames = 32;     // N
    int crop_h = 224;      // h
    int crop_w = 224;      // w
    int patch = 16;        // s
    int repr = 512;        // r
    int g = 5;
    int cat_blocks = 12;   // L
    int candla_blocks = 2; // B
    int text_layers = 2;   // L_t
    int heads = 0;         // 0 = auto: d/64 when divisible, else 4
    int heads_vat = 0;     // heads for the r-wide attention, same rule
    int stride = 4;        // frame sample rate
    int context_len = 16;
    std::uint64_t seed = 0;
    QualityLanguage quality_language = QualityLanguage::kShort;

    // Ablation switches (on = full model).
    bool use_fusion_tokens = true;
    bool use_vat = true;

    int dim() const { return patch * patch * 3; }          // d = s*s*3
    int grid_h() const { return crop_h / patch; }
    int grid_w() const { return crop_w / patch; }
    int patches() const { return grid_h() * grid_w(); }    // P

    static int auto_heads(int width) { return width % 64 == 0 ? width / 64 : 4; }
    int resolved_heads() const { return heads > 0 ? heads : auto_heads(dim()); }
    int resolved_heads_vat() const { return heads_vat > 0 ? heads_vat : auto_heads(repr); }

    void validate() const {
        if (n_frames < 1 || crop_h < 1 || crop_w < 1 || patch < 1 || repr < 1 || g < 2 ||
            cat_blocks < 1 || candla_blocks < 1 || text_layers < 1 || stride < 1)
            throw ConfigError("model config: all dimensions must be positive");
        if (patches() < 1) throw ConfigError("model config: patch size exceeds crop");
        if (dim() % resolved_heads() != 0)
            throw ConfigError("model config: heads " + std::to_string(resolved_heads()) +
                              " does not divide token width " + std::to_string(dim()));
        if (repr % resolved_heads_vat() != 0)
            throw ConfigError("model config: heads " + std::to_string(resolved_heads_vat()) +
                              " does not divide representation width " + std::to_string(repr));
    }

    static ModelConfig toy(std::uint64_t seed = 0) {
        ModelConfig c;
        c.n_frames = 4;
        c.crop_h = c.crop_w = 16;
        c.patch = 4;   // d = 48
        c.repr = 16;
        c.g = 5;
        c.cat_blocks = 2;
        c.candla_blocks = 1;
        c.text_layers = 2;
        c.stride = 4;
        c.seed = seed;
        return c;
    }
};

class ClipVqaModel {
public:
    explicit ClipVqaModel(const ModelConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        RngState rng(cfg_.seed, "init");
        const int d = cfg_.dim();

        auto rng_ingest = rng.substream("ingest");
        theta_ = glorot_param(d, d, rng_ingest);
        // "Randomly generate a pseudo-MOS token": one learnable d-vector,
        // randomly initialized, shared across frames.
        mos_token_ = randn_param({d}, rng_ingest, 0.02);

        auto rng_fpt = rng.substream("fpt");
        fpt_ = Fpt(d, cfg_.patches(), cfg_.cat_blocks, cfg_.resolved_heads(), rng_fpt);
        auto rng_sat = rng.substream("sat");
        sat_ = Sat(d, cfg_.n_frames, cfg_.repr, cfg_.resolved_heads(), rng_sat);
        auto rng_text = rng.substream("text");
        text_ = TextEncoder(d, cfg_.repr, cfg_.text_layers, cfg_.resolved_heads(), rng_text,
                            cfg_.context_len);
        auto rng_vat = rng.substream("vat");
        vat_ = Vat(cfg_.grid_h(), cfg_.grid_w(), d, cfg_.repr, cfg_.n_frames, cfg_.g,
                   cfg_.candla_blocks, cfg_.resolved_heads_vat(), rng_vat);

        refresh_text_encoding();
    }

    const ModelConfig& config() const { return cfg_; }
    const TensorPtr& theta() const { return theta_; }
    const TensorPtr& mos_token() const { return mos_token_; }
    const Fpt& fpt() const { return fpt_; }
    const Sat& sat() const { return sat_; }
    const TextEncoder& text_encoder() const { return text_; }
    const Vat& vat() const { return vat_; }
    const TensorPtr& text_encoding() const { return y_text_; }

    // Y_t is frozen; evaluate it once without recording a graph and keep
    // the result as a constant. Call again after loading a checkpoint.
    void refresh_text_encoding() {
        NoGradGuard ng;
        y_text_ = text_.encode_texts(build_quality_texts(cfg_.quality_language));
    }

    ParamList parameters() const {
        ParamList out;
        out.push_back({"ingest.theta", theta_, false});
        out.push_back({"ingest.mos_token", mos_token_, false});
        fpt_.collect("fpt", out);
        sat_.collect("sat", out);
        text_.collect("text", out);
        vat_.collect("vat", out);
        return out;
    }

    // Initial per-frame token matrices from raw patch matrices.
    std::vector<TensorPtr> embed_frames(const std::vector<TensorPtr>& patch_mats,
                                        bool positional = true) const {
        std::vector<TensorPtr> frames;
        frames.reserve(patch_mats.size());
        for (const auto& p : patch_mats)
            frames.push_back(embed_frame_tokens(p, theta_, mos_token_, positional));
        return frames;
    }

    TokenBundle run_fpt(const std::vector<TensorPtr>& patch_mats,
                        const FptOptions& opts = {}) const {
        return fpt_.run(embed_frames(patch_mats), opts);
    }

    // Full forward pass: patch matrices (one [P x d] per sampled frame) to
    // the predicted g-way distribution.
    TensorPtr forward_probs(const std::vector<TensorPtr>& patch_mats) const {
        if (static_cast<int>(patch_mats.size()) != cfg_.n_frames)
            throw ShapeError("forward: expected " + std::to_string(cfg_.n_frames) +
                             " frames, got " + std::to_string(patch_mats.size()));
        FptOptions opts;
        opts.fusion_tokens = cfg_.use_fusion_tokens;
        auto bundle = run_fpt(patch_mats, opts);
        auto y_video = sat_(bundle, cfg_.use_fusion_tokens);
        auto y_lang_video = cfg_.use_vat ? vat_(y_text_, bundle.frame_tokens) : y_text_;
        return fuse(y_lang_video, y_video);
    }

private:
    ModelConfig cfg_;
    TensorPtr theta_;
    TensorPtr mos_token_;
    Fpt fpt_;
    Sat sat_;
    TextEncoder text_;
    Vat vat_;
    TensorPtr y_text_;
};

}  // namespace clipvqa
