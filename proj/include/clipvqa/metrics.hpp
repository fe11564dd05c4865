#pragma once

// Rank-correlation metrics. SROCC is the Pearson correlation of average
// ranks (ties receive their mean rank); PLCC is the Pearson correlation of
// the raw values. Zero-variance inputs yield 0 with a warning flag rather
// than NaN.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace clipvqa {

inline std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        // 1-based ranks; tied entries share the mean of their positions.
        const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

struct PearsonResult {
    double value = 0.0;
    bool zero_variance = false;
};

inline PearsonResult pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
    const std::size_t n = a.size();
    if (n < 2) throw std::invalid_argument("pearson: need at least 2 samples");
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return {0.0, true};
    return {sab / std::sqrt(saa * sbb), false};
}

struct Correlations {
    double srocc = 0.0;
    double plcc = 0.0;
    bool zero_variance = false;
};

inline Correlations correlations(const std::vector<double>& predictions,
                                 const std::vector<double>& labels) {
    const auto s = pearson(average_ranks(predictions), average_ranks(labels));
    const auto p = pearson(predictions, labels);
    return {s.value, p.value, s.zero_variance || p.zero_variance};
}

}  // namespace clipvqa
