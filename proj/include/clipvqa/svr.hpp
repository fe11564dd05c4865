#pragma once

// Epsilon-insensitive support vector regression with an RBF kernel.
// The dual is solved in the beta = alpha - alpha* form by repeatedly
// optimizing the maximal KKT-violating pair exactly (the objective is
// piecewise quadratic in the pair step because of the eps * |beta| term).

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace clipvqa {

struct SvrParams {
    double c = 10.0;
    double eps = 0.01;
    double gamma = 1.0;
    double tol = 1e-6;
    int max_iters = 200000;
};

class RbfSvr {
public:
    void fit(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
             const SvrParams& params = {}) {
        if (x.empty() || x.size() != y.size())
            throw std::invalid_argument("svr: empty or mismatched training data");
        params_ = params;
        x_ = x;
        const int n = static_cast<int>(x.size());

        std::vector<double> kernel(static_cast<std::size_t>(n) * n);
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                const double k = rbf(x[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(j)]);
                kernel[static_cast<std::size_t>(i) * n + j] = k;
                kernel[static_cast<std::size_t>(j) * n + i] = k;
            }

        beta_.assign(static_cast<std::size_t>(n), 0.0);
        // Gradient of the smooth part: G_i = (K beta)_i - y_i
        std::vector<double> g(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = -y[static_cast<std::size_t>(i)];

        const double c = params_.c, eps = params_.eps;
        int iter = 0;
        for (; iter < params_.max_iters; ++iter) {
            // KKT: there must exist b with -b in [lo_i, hi_i] for every i.
            double max_lo = -std::numeric_limits<double>::infinity();
            double min_hi = std::numeric_limits<double>::infinity();
            int i_up = -1, i_dn = -1;
            for (int i = 0; i < n; ++i) {
                const double bi = beta_[static_cast<std::size_t>(i)];
                const double gi = g[static_cast<std::size_t>(i)];
                double lo, hi;
                if (bi >= c) {
                    lo = gi + eps;
                    hi = std::numeric_limits<double>::infinity();
                } else if (bi > 0.0) {
                    lo = hi = gi + eps;
                } else if (bi == 0.0) {
                    lo = gi - eps;
                    hi = gi + eps;
                } else if (bi > -c) {
                    lo = hi = gi - eps;
                } else {
                    lo = -std::numeric_limits<double>::infinity();
                    hi = gi - eps;
                }
                if (lo > max_lo) {
                    max_lo = lo;
                    i_up = i;
                }
                if (hi < min_hi) {
                    min_hi = hi;
                    i_dn = i;
                }
            }
            if (max_lo - min_hi < params_.tol || i_up < 0 || i_dn < 0 || i_up == i_dn) break;

            const double delta = optimal_pair_step(i_up, i_dn, kernel, g, n);
            if (std::abs(delta) < 1e-15) break;
            beta_[static_cast<std::size_t>(i_up)] += delta;
            beta_[static_cast<std::size_t>(i_dn)] -= delta;
            const double* krow_i = kernel.data() + static_cast<std::size_t>(i_up) * n;
            const double* krow_j = kernel.data() + static_cast<std::size_t>(i_dn) * n;
            for (int t = 0; t < n; ++t)
                g[static_cast<std::size_t>(t)] += delta * (krow_i[t] - krow_j[t]);
        }

        // Offset b from the feasible multiplier interval.
        double max_lo = -std::numeric_limits<double>::infinity();
        double min_hi = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            const double bi = beta_[static_cast<std::size_t>(i)];
            const double gi = g[static_cast<std::size_t>(i)];
            if (bi >= c) {
                max_lo = std::max(max_lo, gi + eps);
            } else if (bi > 0.0) {
                max_lo = std::max(max_lo, gi + eps);
                min_hi = std::min(min_hi, gi + eps);
            } else if (bi == 0.0) {
                max_lo = std::max(max_lo, gi - eps);
                min_hi = std::min(min_hi, gi + eps);
            } else if (bi > -c) {
                max_lo = std::max(max_lo, gi - eps);
                min_hi = std::min(min_hi, gi - eps);
            } else {
                min_hi = std::min(min_hi, gi - eps);
            }
        }
        if (std::isfinite(max_lo) && std::isfinite(min_hi))
            bias_ = -0.5 * (max_lo + min_hi);
        else if (std::isfinite(max_lo))
            bias_ = -max_lo;
        else if (std::isfinite(min_hi))
            bias_ = -min_hi;
        else
            bias_ = 0.0;
        fitted_ = true;
    }

    double predict(const std::vector<double>& x) const {
        if (!fitted_) throw std::logic_error("svr: predict before fit");
        double out = bias_;
        for (std::size_t i = 0; i < x_.size(); ++i) {
            if (beta_[i] == 0.0) continue;
            out += beta_[i] * rbf(x_[i], x);
        }
        return out;
    }

    bool fitted() const { return fitted_; }
    int support_count() const {
        int c = 0;
        for (double b : beta_)
            if (b != 0.0) ++c;
        return c;
    }

private:
    double rbf(const std::vector<double>& a, const std::vector<double>& b) const {
        double d2 = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = a[i] - b[i];
            d2 += d * d;
        }
        return std::exp(-params_.gamma * d2);
    }

    // Exact minimizer of the piecewise-quadratic objective along the pair
    // direction (beta_i + delta, beta_j - delta), subject to the box.
    double optimal_pair_step(int i, int j, const std::vector<double>& kernel,
                             const std::vector<double>& g, int n) const {
        const double c = params_.c, eps = params_.eps;
        const double bi = beta_[static_cast<std::size_t>(i)];
        const double bj = beta_[static_cast<std::size_t>(j)];
        const double eta = kernel[static_cast<std::size_t>(i) * n + i] +
                           kernel[static_cast<std::size_t>(j) * n + j] -
                           2.0 * kernel[static_cast<std::size_t>(i) * n + j];
        const double slope0 = g[static_cast<std::size_t>(i)] - g[static_cast<std::size_t>(j)];
        const double lo = std::max(-c - bi, bj - c);
        const double hi = std::min(c - bi, bj + c);

        // Piece boundaries where |beta_i + delta| or |beta_j - delta| kink.
        std::vector<double> knots{lo, hi};
        if (-bi > lo && -bi < hi) knots.push_back(-bi);
        if (bj > lo && bj < hi) knots.push_back(bj);
        std::sort(knots.begin(), knots.end());

        auto objective = [&](double delta) {
            return 0.5 * eta * delta * delta + slope0 * delta +
                   eps * (std::abs(bi + delta) + std::abs(bj - delta) - std::abs(bi) - std::abs(bj));
        };

        double best_delta = 0.0;
        double best_val = 0.0;  // objective(0) == 0
        auto consider = [&](double delta) {
            if (delta < lo || delta > hi) return;
            const double v = objective(delta);
            if (v < best_val - 1e-18) {
                best_val = v;
                best_delta = delta;
            }
        };

        for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
            const double a = knots[k], b = knots[k + 1];
            if (b <= a) continue;
            const double mid = 0.5 * (a + b);
            const double si = (bi + mid) >= 0.0 ? 1.0 : -1.0;
            const double sj = (bj - mid) >= 0.0 ? 1.0 : -1.0;
            const double lin = slope0 + eps * (si - sj);
            if (eta > 1e-12) {
                consider(std::clamp(-lin / eta, a, b));
            } else {
                consider(lin < 0.0 ? b : a);
            }
            consider(a);
            consider(b);
        }
        return best_delta;
    }

    SvrParams params_;
    std::vector<std::vector<double>> x_;
    std::vector<double> beta_;
    double bias_ = 0.0;
    bool fitted_ = false;
};

}  // namespace clipvqa
