// Command-line front end: synthetic data generation, training, evaluation,
// prediction, gradient checking, and MOS encoding. All reports are JSON;
// eval can additionally emit an "id,pred,label" CSV.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "clipvqa/clipvqa.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

clipvqa::TrainConfig load_config_or_default(const std::string& path) {
    if (path.empty()) {
        clipvqa::TrainConfig cfg;
        cfg.model = clipvqa::ModelConfig::toy();
        return cfg;
    }
    return clipvqa::load_train_config(path);
}

void apply_seed_override(clipvqa::TrainConfig& cfg, const CLI::Option* opt, std::uint64_t seed) {
    if (opt->count() > 0) {
        cfg.seed = seed;
        cfg.model.seed = seed;
    }
}

void write_csv(const std::string& path, const clipvqa::EvalReport& report) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("csv: cannot open for write: " + path);
    os << "id,pred,label\n";
    for (std::size_t i = 0; i < report.ids.size(); ++i)
        os << report.ids[i] << ',' << report.predictions[i] << ',' << report.labels[i] << "\n";
}

json eval_report_to_json(const clipvqa::EvalReport& report) {
    json j{{"srocc", report.srocc},
           {"plcc", report.plcc},
           {"samples", report.ids.size()}};
    if (report.zero_variance) j["warning"] = "zero-variance predictions or labels";
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CLIPVQA-style video quality assessment toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    app.add_option("--config", config_path, "JSON config file")->expected(1);
    auto* seed_opt = app.add_option("--seed", seed, "Seed override");
    app.add_option("--out", out_dir, "Output directory");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic video corpus");
    clipvqa::SyntheticSpec spec;
    gen->add_option("--count", spec.count, "Number of videos");
    gen->add_option("--frames", spec.frames, "Frames per video");
    gen->add_option("--height", spec.height, "Frame height");
    gen->add_option("--width", spec.width, "Frame width");

    // train
    auto* tr = app.add_subcommand("train", "Train on a manifest");
    std::string manifest_path;
    tr->add_option("--manifest", manifest_path, "Dataset manifest (JSON lines)")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
    std::string ckpt_path, csv_path, decode_mode = "ev";
    int views = 1;
    ev->add_option("--checkpoint", ckpt_path, "Model checkpoint")->required();
    ev->add_option("--manifest", manifest_path, "Dataset manifest (JSON lines)")->required();
    ev->add_option("--csv", csv_path, "Write per-sample (id,pred,label) CSV");
    ev->add_option("--views", views, "Evaluation crop views");
    ev->add_option("--decoder", decode_mode, "Score decoder: ev or svr");

    // predict
    auto* pr = app.add_subcommand("predict", "Predict distributions and scores");
    pr->add_option("--checkpoint", ckpt_path, "Model checkpoint")->required();
    pr->add_option("--manifest", manifest_path, "Dataset manifest (JSON lines)")->required();
    pr->add_option("--decoder", decode_mode, "Score decoder: ev or svr");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
    int entries = 6;
    double eps = 1e-5;
    gc->add_option("--entries", entries, "Entries sampled per parameter (0 = all)");
    gc->add_option("--eps", eps, "Finite-difference step");

    // encode-mos
    auto* em = app.add_subcommand("encode-mos", "Encode a scaled MOS as a probability vector");
    double mos_value = 0.0;
    int g = 5;
    double t_low = 1.0, u_high = 5.0;
    em->add_option("value", mos_value, "Scaled MOS in [T,U]")->required();
    em->add_option("--g", g, "Number of reference ratings");
    em->add_option("--t", t_low, "Lower bound T");
    em->add_option("--u", u_high, "Upper bound U");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors exit 1, --help exits 0
    }

    try {
        if (*gen) {
            clipvqa::TrainConfig cfg = load_config_or_default(config_path);
            spec.seed = cfg.seed;
            if (seed_opt->count() > 0) spec.seed = seed;
            const std::string manifest = clipvqa::generate_synthetic(spec, out_dir);
            json j{{"manifest", manifest}, {"count", spec.count}, {"seed", spec.seed}};
            std::cout << j.dump() << "\n";
            return 0;
        }

        if (*tr) {
            auto cfg = load_config_or_default(config_path);
            apply_seed_override(cfg, seed_opt, seed);
            auto dataset = clipvqa::Dataset::load(manifest_path,
                                                  clipvqa::ReferenceRatings::make(1.0, 5.0, cfg.model.g));
            auto result = clipvqa::train(cfg, dataset, out_dir);
            json j{{"best_srocc", result.best_srocc},
                   {"best_plcc", result.best_plcc},
                   {"best_epoch", result.best_epoch},
                   {"epochs", cfg.epochs},
                   {"best_checkpoint", result.best_checkpoint},
                   {"last_checkpoint", result.last_checkpoint},
                   {"log", (fs::path(out_dir) / "train_log.jsonl").string()}};
            std::cout << j.dump() << "\n";
            return 0;
        }

        if (*ev || *pr) {
            auto cfg = load_config_or_default(config_path);
            apply_seed_override(cfg, seed_opt, seed);
            const auto ratings = clipvqa::ReferenceRatings::make(1.0, 5.0, cfg.model.g);
            clipvqa::ClipVqaModel model(cfg.model);
            clipvqa::load_checkpoint_into(ckpt_path, model.parameters());
            model.refresh_text_encoding();
            auto dataset = clipvqa::Dataset::load(manifest_path, ratings);

            clipvqa::MosDecoder decoder(ratings);
            const auto mode = clipvqa::parse_decode_mode(decode_mode);
            if (mode == clipvqa::DecodeMode::kSvr) decoder.fit_svr();

            if (*ev) {
                auto report = clipvqa::evaluate(model, dataset, clipvqa::all_indices(dataset),
                                                decoder, mode, views, cfg.seed);
                if (!csv_path.empty()) write_csv(csv_path, report);
                std::cout << eval_report_to_json(report).dump() << "\n";
                return 0;
            }
            for (const auto& sample : dataset.samples()) {
                clipvqa::NoGradGuard ng;
                clipvqa::RngState rng(cfg.seed, "eval/" + sample.id);
                auto indices = clipvqa::sample_frame_indices(sample.frames.frame_count,
                                                             cfg.model.n_frames, cfg.model.stride, rng);
                const auto origin = clipvqa::center_crop_origin(sample.frames.height,
                                                                sample.frames.width,
                                                                cfg.model.crop_h, cfg.model.crop_w);
                std::vector<clipvqa::TensorPtr> mats;
                for (int idx : indices)
                    mats.push_back(clipvqa::crop_and_patchify(sample.frames, idx, origin,
                                                              cfg.model.crop_h, cfg.model.crop_w,
                                                              cfg.model.patch));
                auto probs = model.forward_probs(mats);
                json j{{"id", sample.id},
                       {"probs", probs->data},
                       {"score", decoder.decode(probs->data, mode)}};
                std::cout << j.dump() << "\n";
            }
            return 0;
        }

        if (*gc) {
            auto cfg = load_config_or_default(config_path);
            apply_seed_override(cfg, seed_opt, seed);
            clipvqa::finite_checks() = true;
            clipvqa::ClipVqaModel model(cfg.model);
            auto report = clipvqa::model_grad_check(
                model, {.eps = eps, .max_entries_per_param = entries, .seed = cfg.seed + 11});
            json modules = json::array();
            bool ok = true;
            for (const auto& m : clipvqa::by_module(report)) {
                modules.push_back({{"module", m.module},
                                   {"max_rel_err", m.max_rel_err},
                                   {"params", m.params_checked}});
                ok = ok && m.max_rel_err < 1e-4;
            }
            json j{{"modules", modules}, {"max_rel_err", report.max_rel_err}, {"pass", ok}};
            std::cout << j.dump(2) << "\n";
            return ok ? 0 : 2;
        }

        if (*em) {
            const auto ratings = clipvqa::ReferenceRatings::make(t_low, u_high, g);
            const auto y = clipvqa::encode_mos(mos_value, ratings);
            json j{{"c", mos_value},
                   {"ratings", ratings.b},
                   {"probs", y},
                   {"expected_value", clipvqa::decode_expected_value(y, ratings)}};
            std::cout << j.dump() << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
