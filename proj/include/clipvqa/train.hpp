#pragma once

// Training and evaluation harness: deterministic 8:2 split, SGD with
// momentum and step decay, per-epoch JSON-lines logging, checkpointing
// with best-SROCC retention, and the SROCC/PLCC evaluation protocol
// (deterministic center crops, expected-value decoding by default).

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "clipvqa/checkpoint.hpp"
#include "clipvqa/dataset.hpp"
#include "clipvqa/metrics.hpp"
#include "clipvqa/model.hpp"
#include "clipvqa/quality_head.hpp"

namespace clipvqa {

enum class LossKind { kVr, kCrossEntropy };

inline LossKind parse_loss_kind(const std::string& s) {
    if (s == "vr") return LossKind::kVr;
    if (s == "ce" || s == "cross_entropy") return LossKind::kCrossEntropy;
    throw std::invalid_argument("loss must be 'vr' or 'ce', got '" + s + "'");
}

struct TrainConfig {
    ModelConfig model;
    double lr = 0.005;
    double momentum = 0.9;
    double lr_decay = 0.1;
    int decay_epochs = 10;
    int epochs = 30;
    int batch_size = 4;
    double split_ratio = 0.8;
    std::uint64_t seed = 0;
    int views = 1;  // evaluation views
    LossKind loss = LossKind::kVr;
    bool grad_clip = false;
    double clip_norm = 5.0;

    void validate() const {
        model.validate();
        if (!(split_ratio > 0.0 && split_ratio < 1.0))
            throw ConfigError("train config: split_ratio must be in (0,1)");
        if (epochs < 1 || batch_size < 1 || decay_epochs < 1 || views < 1)
            throw ConfigError("train config: epochs/batch_size/decay_epochs/views must be positive");
    }
};

// Config JSON uses the notation-letter keys (N, h, w, s, r, g, L, B, L_t,
// heads, ...). Unknown keys are rejected; "d" is accepted only as a
// consistency check since it is derived from s.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        const auto& v = it.value();
        if (k == "N") c.model.n_frames = v.get<int>();
        else if (k == "h") c.model.crop_h = v.get<int>();
        else if (k == "w") c.model.crop_w = v.get<int>();
        else if (k == "s") c.model.patch = v.get<int>();
        else if (k == "r") c.model.repr = v.get<int>();
        else if (k == "g") c.model.g = v.get<int>();
        else if (k == "L") c.model.cat_blocks = v.get<int>();
        else if (k == "B") c.model.candla_blocks = v.get<int>();
        else if (k == "L_t") c.model.text_layers = v.get<int>();
        else if (k == "heads") c.model.heads = v.get<int>();
        else if (k == "heads_vat") c.model.heads_vat = v.get<int>();
        else if (k == "stride") c.model.stride = v.get<int>();
        else if (k == "quality_language") c.model.quality_language = parse_quality_language(v.get<std::string>());
        else if (k == "use_fusion_tokens") c.model.use_fusion_tokens = v.get<bool>();
        else if (k == "use_vat") c.model.use_vat = v.get<bool>();
        else if (k == "d") { /* derived from s; validated below */ }
        else if (k == "lr") c.lr = v.get<double>();
        else if (k == "momentum") c.momentum = v.get<double>();
        else if (k == "lr_decay") c.lr_decay = v.get<double>();
        else if (k == "decay_epochs") c.decay_epochs = v.get<int>();
        else if (k == "epochs") c.epochs = v.get<int>();
        else if (k == "batch_size") c.batch_size = v.get<int>();
        else if (k == "split_ratio") c.split_ratio = v.get<double>();
        else if (k == "seed") c.seed = v.get<std::uint64_t>();
        else if (k == "views") c.views = v.get<int>();
        else if (k == "loss") c.loss = parse_loss_kind(v.get<std::string>());
        else if (k == "grad_clip") c.grad_clip = v.get<bool>();
        else if (k == "clip_norm") c.clip_norm = v.get<double>();
        else throw ConfigError("config: unknown key '" + k + "'");
    }
    if (j.contains("d") && j.at("d").get<int>() != c.model.dim())
        throw ConfigError("config: d=" + j.at("d").dump() + " inconsistent with s=" +
                          std::to_string(c.model.patch) + " (d = s*s*3)");
    c.model.seed = c.seed;
    c.validate();
    return c;
}

inline TrainConfig load_train_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open: " + path);
    nlohmann::json j;
    is >> j;
    return train_config_from_json(j);
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {
        {"N", c.model.n_frames}, {"h", c.model.crop_h}, {"w", c.model.crop_w},
        {"s", c.model.patch}, {"r", c.model.repr}, {"g", c.model.g},
        {"L", c.model.cat_blocks}, {"B", c.model.candla_blocks}, {"L_t", c.model.text_layers},
        {"heads", c.model.resolved_heads()}, {"heads_vat", c.model.resolved_heads_vat()},
        {"stride", c.model.stride},
        {"quality_language", quality_language_name(c.model.quality_language)},
        {"use_fusion_tokens", c.model.use_fusion_tokens}, {"use_vat", c.model.use_vat},
        {"lr", c.lr}, {"momentum", c.momentum}, {"lr_decay", c.lr_decay},
        {"decay_epochs", c.decay_epochs}, {"epochs", c.epochs}, {"batch_size", c.batch_size},
        {"split_ratio", c.split_ratio}, {"seed", c.seed}, {"views", c.views},
        {"loss", c.loss == LossKind::kVr ? "vr" : "ce"},
    };
}

// lr(e) = lr0 * decay^floor((e-1)/decay_epochs), e 1-based.
inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    return cfg.lr * std::pow(cfg.lr_decay, (epoch - 1) / cfg.decay_epochs);
}

struct Split {
    std::vector<int> train;
    std::vector<int> test;
};

// Deterministic shuffle-split of [0, count) from (seed, manifest order).
inline Split make_split(int count, double ratio, std::uint64_t seed) {
    std::vector<int> idx(static_cast<std::size_t>(count));
    std::iota(idx.begin(), idx.end(), 0);
    RngState rng(seed, "split");
    for (int i = count - 1; i > 0; --i)
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
    const int n_train = static_cast<int>(std::lround(ratio * count));
    Split s;
    s.train.assign(idx.begin(), idx.begin() + n_train);
    s.test.assign(idx.begin() + n_train, idx.end());
    return s;
}

// SGD with momentum (v = mu*v + g; p -= lr*v) over the non-frozen subset.
class SgdOptimizer {
public:
    SgdOptimizer(ParamList params, double momentum)
        : params_(std::move(params)), momentum_(momentum) {
        for (const auto& p : params_)
            velocity_.emplace_back(p.frozen ? 0 : p.tensor->data.size(), 0.0);
    }

    void zero_grad() { zero_grads(params_); }

    void step(double lr, bool clip = false, double clip_norm = 5.0) {
        double scale_g = 1.0;
        if (clip) {
            double total = 0.0;
            for (const auto& p : params_) {
                if (p.frozen) continue;
                for (double g : p.tensor->grad) total += g * g;
            }
            total = std::sqrt(total);
            if (total > clip_norm) scale_g = clip_norm / total;
        }
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const auto& p = params_[i];
            if (p.frozen) continue;  // frozen tensors are never modified
            p.tensor->ensure_grad();
            auto& vel = velocity_[i];
            for (std::size_t k = 0; k < vel.size(); ++k) {
                vel[k] = momentum_ * vel[k] + scale_g * p.tensor->grad[k];
                p.tensor->data[k] -= lr * vel[k];
            }
        }
    }

    const ParamList& params() const { return params_; }

private:
    ParamList params_;
    double momentum_;
    std::vector<std::vector<double>> velocity_;
};

// Deterministic per-sample view pipeline: sampled frame indices and crop
// origins derive from (seed, purpose, sample id), so evaluation is
// reproducible and training augmentation varies by epoch.
inline std::vector<TensorPtr> sample_patches(const VideoSample& sample, const ModelConfig& cfg,
                                             RngState rng, bool center_crop) {
    auto indices = sample_frame_indices(sample.frames.frame_count, cfg.n_frames, cfg.stride, rng);
    std::vector<TensorPtr> mats;
    mats.reserve(indices.size());
    for (int idx : indices) {
        const CropOrigin origin =
            center_crop
                ? center_crop_origin(sample.frames.height, sample.frames.width, cfg.crop_h, cfg.crop_w)
                : random_crop_origin(sample.frames.height, sample.frames.width, cfg.crop_h,
                                     cfg.crop_w, rng);
        mats.push_back(crop_and_patchify(sample.frames, idx, origin, cfg.crop_h, cfg.crop_w,
                                         cfg.patch));
    }
    return mats;
}

// Evaluation views: view 0 of 1 is the center crop; multiple views are
// spaced uniformly along the diagonal of valid crop origins.
inline CropOrigin view_crop_origin(int frame_h, int frame_w, int h, int w, int view, int views) {
    const double f = views == 1 ? 0.5 : static_cast<double>(view) / (views - 1);
    return {static_cast<int>(std::lround(f * (frame_h - h))),
            static_cast<int>(std::lround(f * (frame_w - w)))};
}

struct EvalReport {
    double srocc = 0.0;
    double plcc = 0.0;
    bool zero_variance = false;
    std::vector<std::string> ids;
    std::vector<double> predictions;  // c_hat
    std::vector<double> labels;       // c
};

inline double predict_score(const ClipVqaModel& model, const VideoSample& sample,
                            const MosDecoder& decoder, DecodeMode mode, int views,
                            std::uint64_t seed) {
    NoGradGuard ng;
    const auto& cfg = model.config();
    RngState rng(seed, "eval/" + sample.id);
    auto indices = sample_frame_indices(sample.frames.frame_count, cfg.n_frames, cfg.stride, rng);
    double total = 0.0;
    for (int v = 0; v < views; ++v) {
        const auto origin = view_crop_origin(sample.frames.height, sample.frames.width,
                                             cfg.crop_h, cfg.crop_w, v, views);
        std::vector<TensorPtr> mats;
        mats.reserve(indices.size());
        for (int idx : indices)
            mats.push_back(crop_and_patchify(sample.frames, idx, origin, cfg.crop_h, cfg.crop_w,
                                             cfg.patch));
        auto probs = model.forward_probs(mats);
        total += decoder.decode(probs->data, mode);
    }
    return total / views;
}

inline EvalReport evaluate(const ClipVqaModel& model, const Dataset& dataset,
                           const std::vector<int>& subset, const MosDecoder& decoder,
                           DecodeMode mode = DecodeMode::kExpectedValue, int views = 1,
                           std::uint64_t seed = 0) {
    if (subset.size() < 3)
        throw std::invalid_argument("evaluate: need at least 3 samples, got " +
                                    std::to_string(subset.size()));
    EvalReport report;
    for (int i : subset) {
        const auto& sample = dataset.samples()[static_cast<std::size_t>(i)];
        report.ids.push_back(sample.id);
        report.predictions.push_back(predict_score(model, sample, decoder, mode, views, seed));
        report.labels.push_back(sample.scaled_mos);
    }
    const auto corr = correlations(report.predictions, report.labels);
    report.srocc = corr.srocc;
    report.plcc = corr.plcc;
    report.zero_variance = corr.zero_variance;
    return report;
}

inline std::vector<int> all_indices(const Dataset& ds) {
    std::vector<int> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_srocc = 0.0;
    double val_plcc = 0.0;
    bool best = false;
};

inline nlohmann::json epoch_log_to_json(const EpochLog& e) {
    return {{"epoch", e.epoch},         {"lr", e.lr},
            {"train_loss", e.train_loss}, {"val_srocc", e.val_srocc},
            {"val_plcc", e.val_plcc},   {"best", e.best}};
}

struct TrainResult {
    std::vector<EpochLog> logs;
    double best_srocc = -2.0;
    double best_plcc = 0.0;
    int best_epoch = 0;
    std::string best_checkpoint;
    std::string last_checkpoint;
    Split split;
};

// Full training run. Checkpoints and the epoch log are written under
// out_dir ("last.ckpt", "best.ckpt", "train_log.jsonl"); pass an empty
// out_dir to keep everything in memory. The trained model is handed back
// through final_model when requested.
inline TrainResult train(const TrainConfig& cfg, const Dataset& dataset,
                         const std::string& out_dir = "",
                         std::shared_ptr<ClipVqaModel>* final_model = nullptr) {
    cfg.validate();
    auto model_ptr = std::make_shared<ClipVqaModel>(cfg.model);
    ClipVqaModel& model = *model_ptr;
    auto params = model.parameters();
    SgdOptimizer opt(params, cfg.momentum);
    const auto ratings = ReferenceRatings::make(1.0, 5.0, cfg.model.g);
    MosDecoder decoder(ratings);

    TrainResult result;
    result.split = make_split(static_cast<int>(dataset.size()), cfg.split_ratio, cfg.seed);
    if (result.split.test.size() < 3)
        throw std::runtime_error("train: held-out split has fewer than 3 samples");

    std::optional<std::ofstream> log_os;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        log_os.emplace(std::filesystem::path(out_dir) / "train_log.jsonl", std::ios::trunc);
    }

    // Pre-encoded labels.
    std::vector<TensorPtr> labels;
    labels.reserve(dataset.size());
    for (const auto& s : dataset.samples())
        labels.push_back(encode_mos_tensor(s.scaled_mos, ratings));

    long step_index = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg, epoch);

        // Deterministic epoch shuffle of the training indices.
        auto order = result.split.train;
        RngState shuffle_rng(cfg.seed, "epoch_order/" + std::to_string(epoch));
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
            std::swap(order[static_cast<std::size_t>(i)],
                      order[static_cast<std::size_t>(shuffle_rng.uniform_int(i + 1))]);

        double loss_sum = 0.0;
        long loss_count = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            opt.zero_grad();
            for (std::size_t k = start; k < end; ++k) {
                const int si = order[k];
                const auto& sample = dataset.samples()[static_cast<std::size_t>(si)];
                RngState aug(cfg.seed,
                             "aug/" + std::to_string(epoch) + "/" + sample.id);
                auto mats = sample_patches(sample, cfg.model, aug, /*center_crop=*/false);
                auto probs = model.forward_probs(mats);
                auto loss = cfg.loss == LossKind::kVr
                                ? vr_loss(labels[static_cast<std::size_t>(si)], probs)
                                : cross_entropy(labels[static_cast<std::size_t>(si)], probs);
                const double value = loss->data[0];
                if (!std::isfinite(value))
                    throw std::runtime_error("train: non-finite loss at step " +
                                             std::to_string(step_index));
                loss_sum += value;
                ++loss_count;
                backward(loss, inv_batch);  // gradient averaged over the batch
            }
            opt.step(lr, cfg.grad_clip, cfg.clip_norm);
            ++step_index;
        }

        auto report = evaluate(model, dataset, result.split.test, decoder,
                               DecodeMode::kExpectedValue, /*views=*/1, cfg.seed);
        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        log.train_loss = loss_sum / static_cast<double>(loss_count);
        log.val_srocc = report.srocc;
        log.val_plcc = report.plcc;
        log.best = report.srocc > result.best_srocc;
        if (log.best) {
            result.best_srocc = report.srocc;
            result.best_plcc = report.plcc;
            result.best_epoch = epoch;
            if (!out_dir.empty()) {
                result.best_checkpoint =
                    (std::filesystem::path(out_dir) / "best.ckpt").string();
                save_checkpoint(result.best_checkpoint, params);
            }
        }
        if (!out_dir.empty()) {
            result.last_checkpoint = (std::filesystem::path(out_dir) / "last.ckpt").string();
            save_checkpoint(result.last_checkpoint, params);
            *log_os << epoch_log_to_json(log).dump() << "\n";
            log_os->flush();
        }
        result.logs.push_back(log);
    }
    if (final_model) *final_model = model_ptr;
    return result;
}

}  // namespace clipvqa
