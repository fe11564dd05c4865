#pragma once

// Central finite-difference verification of analytic gradients.
// f must be a scalar-valued forward pass closed over the parameters.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "clipvqa/nn.hpp"
#include "clipvqa/rng.hpp"
#include "clipvqa/tensor.hpp"

namespace clipvqa {

struct GradCheckOptions {
    double eps = 1e-5;
    // 0 checks every entry; otherwise a deterministic random subset per
    // parameter (keeps end-to-end checks inside their time budget).
    int max_entries_per_param = 0;
    std::uint64_t seed = 0;
};

struct ParamGradError {
    std::string name;
    double max_rel_err = 0.0;
    int entries_checked = 0;
};

struct GradCheckReport {
    std::vector<ParamGradError> params;
    double max_rel_err = 0.0;
};

inline GradCheckReport grad_check(const std::function<TensorPtr()>& f, const ParamList& params,
                                  const GradCheckOptions& opts = {}) {
    auto eval = [&]() -> double {
        NoGradGuard ng;
        auto out = f();
        if (out->size() != 1)
            throw std::invalid_argument("grad_check: f must be scalar-valued, got " +
                                        shape_str(out->shape));
        return out->data[0];
    };

    // Analytic gradients in one reverse pass.
    zero_grads(params);
    {
        auto out = f();
        if (out->size() != 1)
            throw std::invalid_argument("grad_check: f must be scalar-valued, got " +
                                        shape_str(out->shape));
        backward(out);
    }

    GradCheckReport report;
    RngState pick(opts.seed, "gradcheck");
    for (const auto& p : params) {
        if (p.frozen) continue;  // frozen parameters are excluded from the report
        std::vector<double> analytic = p.tensor->grad;
        if (analytic.empty()) analytic.assign(p.tensor->data.size(), 0.0);

        std::vector<int> entries;
        const int n = static_cast<int>(p.tensor->data.size());
        if (opts.max_entries_per_param <= 0 || n <= opts.max_entries_per_param) {
            entries.resize(n);
            for (int i = 0; i < n; ++i) entries[i] = i;
        } else {
            for (int i = 0; i < opts.max_entries_per_param; ++i) entries.push_back(pick.uniform_int(n));
        }

        ParamGradError pe{p.name, 0.0, static_cast<int>(entries.size())};
        for (int idx : entries) {
            const double saved = p.tensor->data[idx];
            p.tensor->data[idx] = saved + opts.eps;
            const double f_plus = eval();
            p.tensor->data[idx] = saved - opts.eps;
            const double f_minus = eval();
            p.tensor->data[idx] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * opts.eps);
            const double rel = std::abs(analytic[idx] - numeric) / std::max(1.0, std::abs(numeric));
            pe.max_rel_err = std::max(pe.max_rel_err, rel);
        }
        report.max_rel_err = std::max(report.max_rel_err, pe.max_rel_err);
        report.params.push_back(std::move(pe));
    }
    return report;
}

}  // namespace clipvqa
