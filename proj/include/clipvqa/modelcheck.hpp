#pragma once

// End-to-end gradient verification of the assembled model: the VR loss on
// one fixed synthetic input is differentiated against every non-frozen
// parameter and compared with central finite differences.

#include <map>
#include <string>
#include <vector>

#include "clipvqa/gradcheck.hpp"
#include "clipvqa/model.hpp"
#include "clipvqa/quality_head.hpp"

namespace clipvqa {

struct ModuleGradReport {
    std::string module;
    double max_rel_err = 0.0;
    int params_checked = 0;
};

inline std::vector<TensorPtr> random_patch_input(const ModelConfig& cfg, RngState& rng) {
    std::vector<TensorPtr> mats;
    for (int n = 0; n < cfg.n_frames; ++n) {
        auto m = Tensor::create({cfg.patches(), cfg.dim()});
        for (auto& v : m->data) v = rng.uniform01();
        mats.push_back(std::move(m));
    }
    return mats;
}

// Per-parameter finite-difference report for the end-to-end VR loss.
inline GradCheckReport model_grad_check(const ClipVqaModel& model,
                                        const GradCheckOptions& opts = {.eps = 1e-5,
                                                                        .max_entries_per_param = 6,
                                                                        .seed = 11}) {
    RngState rng(opts.seed, "modelcheck/input");
    auto input = random_patch_input(model.config(), rng);
    const auto ratings = ReferenceRatings::make(1.0, 5.0, model.config().g);
    auto label = encode_mos_tensor(2.7, ratings);
    auto f = [&]() { return vr_loss(label, model.forward_probs(input)); };
    return grad_check(f, model.parameters(), opts);
}

inline std::string module_of(const std::string& param_name) {
    const auto dot = param_name.find('.');
    return dot == std::string::npos ? param_name : param_name.substr(0, dot);
}

inline std::vector<ModuleGradReport> by_module(const GradCheckReport& report) {
    std::map<std::string, ModuleGradReport> groups;
    for (const auto& p : report.params) {
        auto& g = groups[module_of(p.name)];
        g.module = module_of(p.name);
        g.max_rel_err = std::max(g.max_rel_err, p.max_rel_err);
        ++g.params_checked;
    }
    std::vector<ModuleGradReport> out;
    for (auto& [_, v] : groups) out.push_back(v);
    return out;
}

}  // namespace clipvqa
