#pragma once

// Synthetic video corpus for desk-scale learning experiments. Each video is
// a band-limited procedural texture drifting a little per frame, degraded by
// a per-video sample of blur / noise / contrast knobs. The ground-truth raw
// MOS is a fixed monotone function of the total distortion magnitude.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "clipvqa/frame_ingest.hpp"
#include "clipvqa/rng.hpp"

namespace clipvqa {

struct SyntheticSpec {
    int count = 200;
    std::uint64_t seed = 7;
    int frames = 16;
    int height = 32;
    int width = 32;
    double blur_max = 4.0;
    double noise_max = 0.3;
    double contrast_min = 0.3;
};

// raw = 5 - 4 * clamp(0.5*(blur/4) + 0.35*(noise/0.3) + 0.15*(1-contrast)/0.7, 0, 1)
inline double synthetic_mos(double blur, double noise, double contrast,
                            const SyntheticSpec& spec = {}) {
    const double total = 0.5 * (blur / spec.blur_max) + 0.35 * (noise / spec.noise_max) +
                         0.15 * (1.0 - contrast) / (1.0 - spec.contrast_min);
    return 5.0 - 4.0 * std::clamp(total, 0.0, 1.0);
}

namespace detail {

struct Wave {
    double amp, fx, fy, phase;
};

inline void separable_gaussian_blur(std::vector<double>& img, int h, int w, int channels,
                                    double sigma) {
    if (sigma < 1e-6) return;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += kernel[static_cast<std::size_t>(i + radius)];
    }
    for (auto& k : kernel) k /= sum;

    std::vector<double> tmp(img.size());
    auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
    // Horizontal pass, replicated borders.
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int xx = clampi(x + i, 0, w - 1);
                    acc += kernel[static_cast<std::size_t>(i + radius)] *
                           img[(static_cast<std::size_t>(y) * w + xx) * channels + c];
                }
                tmp[(static_cast<std::size_t>(y) * w + x) * channels + c] = acc;
            }
    // Vertical pass.
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int yy = clampi(y + i, 0, h - 1);
                    acc += kernel[static_cast<std::size_t>(i + radius)] *
                           tmp[(static_cast<std::size_t>(yy) * w + x) * channels + c];
                }
                img[(static_cast<std::size_t>(y) * w + x) * channels + c] = acc;
            }
}

}  // namespace detail

struct SyntheticVideo {
    FrameTensor frames;
    double raw_mos = 5.0;
    double blur = 0.0, noise = 0.0, contrast = 1.0;
};

// Renders one video deterministically from (spec.seed, index).
inline SyntheticVideo render_synthetic_video(const SyntheticSpec& spec, int index) {
    RngState rng(spec.seed, "video/" + std::to_string(index));

    // Distortion knobs.
    SyntheticVideo out;
    out.blur = rng.uniform(0.0, spec.blur_max);
    out.noise = rng.uniform(0.0, spec.noise_max);
    out.contrast = rng.uniform(spec.contrast_min, 1.0);
    out.raw_mos = synthetic_mos(out.blur, out.noise, out.contrast, spec);

    // Band-limited texture: a handful of oriented sinusoids per channel,
    // sharing geometry across channels with per-channel phase offsets.
    constexpr int kWaves = 6;
    std::vector<detail::Wave> waves;
    std::vector<std::array<double, 3>> channel_phase;
    double amp_total = 0.0;
    for (int i = 0; i < kWaves; ++i) {
        const double angle = rng.uniform(0.0, 2.0 * M_PI);
        const double freq = rng.uniform(0.03, 0.25);  // cycles per pixel
        const double amp = rng.uniform(0.4, 1.0);
        waves.push_back({amp, freq * std::cos(angle), freq * std::sin(angle),
                         rng.uniform(0.0, 2.0 * M_PI)});
        channel_phase.push_back({0.0, rng.uniform(0.0, 1.2), rng.uniform(0.0, 1.2)});
        amp_total += amp;
    }
    const double drift_x = rng.uniform(-1.5, 1.5);
    const double drift_y = rng.uniform(-1.5, 1.5);

    auto noise_rng = rng.substream("noise");

    out.frames.frame_count = spec.frames;
    out.frames.height = spec.height;
    out.frames.width = spec.width;
    out.frames.channels = 3;
    out.frames.pixels.resize(out.frames.frame_bytes() * static_cast<std::size_t>(spec.frames));

    std::vector<double> img(static_cast<std::size_t>(spec.height) * spec.width * 3);
    for (int t = 0; t < spec.frames; ++t) {
        const double ox = t * drift_x, oy = t * drift_y;
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x)
                for (int c = 0; c < 3; ++c) {
                    double v = 0.0;
                    for (int i = 0; i < kWaves; ++i) {
                        const auto& wv = waves[static_cast<std::size_t>(i)];
                        v += wv.amp *
                             std::sin(2.0 * M_PI * (wv.fx * (x + ox) + wv.fy * (y + oy)) +
                                      wv.phase + channel_phase[static_cast<std::size_t>(i)][c]);
                    }
                    // Map +-amp_total to [0,1] around mid-gray.
                    double p = 0.5 + 0.5 * v / amp_total;
                    // Contrast attenuation about mid-gray.
                    p = 0.5 + out.contrast * (p - 0.5);
                    img[(static_cast<std::size_t>(y) * spec.width + x) * 3 + c] = p;
                }

        detail::separable_gaussian_blur(img, spec.height, spec.width, 3, out.blur);

        std::uint8_t* dst = out.frames.frame(t);
        for (std::size_t i = 0; i < img.size(); ++i) {
            double p = img[i] + noise_rng.normal(0.0, out.noise);
            p = std::clamp(p, 0.0, 1.0);
            dst[i] = static_cast<std::uint8_t>(std::lround(p * 255.0));
        }
    }
    return out;
}

}  // namespace clipvqa
