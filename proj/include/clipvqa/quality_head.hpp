#pragma once

// Feature fusion, MOS vector encoding, vectorized-regression loss, and
// score decoding. Reference ratings are g equally spaced anchors over
// [T, U]; a scalar MOS c is vectorized as softmax(-(c - b_i)^2), and the
// VR loss is one minus the cosine similarity between the encoded label
// and the predicted distribution.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "clipvqa/svr.hpp"
#include "clipvqa/tensor.hpp"

namespace clipvqa {

struct ReferenceRatings {
    double t_low = 1.0;
    double u_high = 5.0;
    int g = 5;
    std::vector<double> b;

    static ReferenceRatings make(double t = 1.0, double u = 5.0, int g = 5) {
        if (g < 2) throw std::invalid_argument("reference ratings: g must be >= 2");
        if (!(t < u)) throw std::invalid_argument("reference ratings: need T < U");
        ReferenceRatings r{t, u, g, {}};
        r.b.resize(static_cast<std::size_t>(g));
        for (int i = 0; i < g; ++i) r.b[static_cast<std::size_t>(i)] = t + (u - t) / (g - 1) * i;
        return r;
    }
};

// Fusion of the video-language matrix with the video-level vector:
// y_hat = softmax(Y_tilde * y_v).
inline TensorPtr fuse(const TensorPtr& y_lang_video, const TensorPtr& y_video) {
    if (y_lang_video->shape.size() != 2 || y_video->shape.size() != 1 ||
        y_lang_video->shape[1] != y_video->shape[0])
        shape_fail("fuse", y_lang_video->shape, y_video->shape);
    const int g = y_lang_video->shape[0];
    auto logits = reshape(matmul(y_lang_video, reshape(y_video, {y_video->shape[0], 1})), {g});
    return softmax(logits);
}

// Linear rescale of a raw MOS from its dataset-native range to [T, U].
inline double scale_mos(double raw, double raw_min, double raw_max, double t = 1.0,
                        double u = 5.0) {
    if (!(raw_min < raw_max))
        throw std::invalid_argument("scale_mos: degenerate raw range [" + std::to_string(raw_min) +
                                    "," + std::to_string(raw_max) + "]");
    if (raw < raw_min || raw > raw_max)
        throw std::invalid_argument("scale_mos: raw value " + std::to_string(raw) +
                                    " outside [" + std::to_string(raw_min) + "," +
                                    std::to_string(raw_max) + "]");
    return t + (u - t) * (raw - raw_min) / (raw_max - raw_min);
}

// Vectorizes a scaled MOS c: z_i = -(c - b_i)^2, y = softmax(z).
inline std::vector<double> encode_mos(double c, const ReferenceRatings& ratings) {
    if (c < ratings.t_low || c > ratings.u_high)
        throw std::invalid_argument("encode_mos: c=" + std::to_string(c) + " outside [" +
                                    std::to_string(ratings.t_low) + "," +
                                    std::to_string(ratings.u_high) + "]");
    std::vector<double> z(static_cast<std::size_t>(ratings.g));
    double zmax = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < ratings.g; ++i) {
        const double d = c - ratings.b[static_cast<std::size_t>(i)];
        z[static_cast<std::size_t>(i)] = -d * d;
        zmax = std::max(zmax, z[static_cast<std::size_t>(i)]);
    }
    double sum = 0.0;
    for (auto& v : z) {
        v = std::exp(v - zmax);
        sum += v;
    }
    for (auto& v : z) v /= sum;
    return z;
}

inline TensorPtr encode_mos_tensor(double c, const ReferenceRatings& ratings) {
    return Tensor::create({ratings.g}, encode_mos(c, ratings));
}

// VR loss: 1 - <y, y_hat> / (|y| |y_hat|). Differentiable through both
// arguments; symmetric by construction.
inline TensorPtr vr_loss(const TensorPtr& y, const TensorPtr& y_hat) {
    return cosine_distance(y, y_hat);
}

inline double vr_loss_value(const std::vector<double>& y, const std::vector<double>& y_hat) {
    NoGradGuard ng;
    return cosine_distance(Tensor::create({static_cast<int>(y.size())}, y),
                           Tensor::create({static_cast<int>(y_hat.size())}, y_hat))
        ->data[0];
}

enum class DecodeMode { kExpectedValue, kSvr };

inline DecodeMode parse_decode_mode(const std::string& s) {
    if (s == "ev" || s == "expected_value") return DecodeMode::kExpectedValue;
    if (s == "svr") return DecodeMode::kSvr;
    throw std::invalid_argument("decode mode must be 'ev' or 'svr', got '" + s + "'");
}

// Expected-value decode: c_hat = sum_i y_hat_i * b_i.
inline double decode_expected_value(const std::vector<double>& probs,
                                    const ReferenceRatings& ratings) {
    if (static_cast<int>(probs.size()) != ratings.g)
        throw std::invalid_argument("decode: probability vector length " +
                                    std::to_string(probs.size()) + " != g=" +
                                    std::to_string(ratings.g));
    double c = 0.0;
    for (int i = 0; i < ratings.g; ++i)
        c += probs[static_cast<std::size_t>(i)] * ratings.b[static_cast<std::size_t>(i)];
    return c;
}

// SVR decode per the inference scheme: an RBF regressor fitted on
// (encode_mos(c), c) pairs sampled over [T, U] maps distributions back to
// real-valued scores.
class MosDecoder {
public:
    explicit MosDecoder(ReferenceRatings ratings = ReferenceRatings::make())
        : ratings_(std::move(ratings)) {}

    const ReferenceRatings& ratings() const { return ratings_; }

    void fit_svr(double grid_step = 0.01, const SvrParams& params = {}) {
        std::vector<std::vector<double>> xs;
        std::vector<double> ys;
        for (double c = ratings_.t_low; c <= ratings_.u_high + 1e-12; c += grid_step) {
            const double cc = std::min(c, ratings_.u_high);
            xs.push_back(encode_mos(cc, ratings_));
            ys.push_back(cc);
        }
        svr_.fit(xs, ys, params);
    }

    bool svr_fitted() const { return svr_.fitted(); }

    double decode(const std::vector<double>& probs, DecodeMode mode) const {
        if (mode == DecodeMode::kExpectedValue) return decode_expected_value(probs, ratings_);
        if (!svr_.fitted())
            throw std::logic_error("decode: SVR mode requested but no regressor fitted");
        return svr_.predict(probs);
    }

private:
    ReferenceRatings ratings_;
    RbfSvr svr_;
};

}  // namespace clipvqa
