#pragma once

// Frame sampling, cropping, patch tokenization, and token assembly.
// Raw video input is the FTB1 container: pre-decoded u8 frames,
// frame-major, each frame H x W x 3 row-major.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "clipvqa/rng.hpp"
#include "clipvqa/tensor.hpp"

namespace clipvqa {

struct FrameTensor {
    int frame_count = 0;
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<std::uint8_t> pixels;  // frame-major, HxWxC row-major

    std::size_t frame_bytes() const {
        return static_cast<std::size_t>(height) * width * channels;
    }
    const std::uint8_t* frame(int idx) const { return pixels.data() + frame_bytes() * idx; }
    std::uint8_t* frame(int idx) { return pixels.data() + frame_bytes() * idx; }
};

inline constexpr char kFrameMagic[4] = {'F', 'T', 'B', '1'};

inline void write_frame_tensor(const std::string& path, const FrameTensor& ft) {
    if (ft.channels != 3)
        throw std::invalid_argument("frame tensor: channels must be 3");
    if (ft.pixels.size() != ft.frame_bytes() * static_cast<std::size_t>(ft.frame_count))
        throw std::invalid_argument("frame tensor: payload length mismatch");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("frame tensor: cannot open for write: " + path);
    os.write(kFrameMagic, 4);
    auto put_u32 = [&os](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        os.write(reinterpret_cast<const char*>(b), 4);
    };
    put_u32(static_cast<std::uint32_t>(ft.frame_count));
    put_u32(static_cast<std::uint32_t>(ft.height));
    put_u32(static_cast<std::uint32_t>(ft.width));
    put_u32(static_cast<std::uint32_t>(ft.channels));
    os.write(reinterpret_cast<const char*>(ft.pixels.data()),
             static_cast<std::streamsize>(ft.pixels.size()));
    if (!os) throw std::runtime_error("frame tensor: write failed: " + path);
}

inline FrameTensor read_frame_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("frame tensor: cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kFrameMagic, 4) != 0)
        throw std::runtime_error("frame tensor: bad magic in " + path);
    auto get_u32 = [&is, &path]() {
        unsigned char b[4];
        if (!is.read(reinterpret_cast<char*>(b), 4))
            throw std::runtime_error("frame tensor: truncated header in " + path);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    };
    FrameTensor ft;
    ft.frame_count = static_cast<int>(get_u32());
    ft.height = static_cast<int>(get_u32());
    ft.width = static_cast<int>(get_u32());
    ft.channels = static_cast<int>(get_u32());
    if (ft.channels != 3)
        throw std::runtime_error("frame tensor: channels must be 3, got " +
                                 std::to_string(ft.channels) + " in " + path);
    ft.pixels.resize(ft.frame_bytes() * static_cast<std::size_t>(ft.frame_count));
    if (!is.read(reinterpret_cast<char*>(ft.pixels.data()),
                 static_cast<std::streamsize>(ft.pixels.size())))
        throw std::runtime_error("frame tensor: truncated payload in " + path);
    return ft;
}

// Equal-interval sampling: a uniformly drawn start offset, then a fixed
// stride; indices wrap modulo the video length when the span exceeds it.
inline std::vector<int> sample_frame_indices(int f_total, int n, int stride, RngState& rng) {
    if (n <= 0) throw std::invalid_argument("sample_frame_indices: N must be positive");
    if (stride <= 0) throw std::invalid_argument("sample_frame_indices: stride must be positive");
    if (f_total < 1) throw std::invalid_argument("sample_frame_indices: empty video");
    const int span = (n - 1) * stride;
    const int max_offset = f_total - span - 1;
    const int offset = max_offset > 0 ? rng.uniform_int(max_offset + 1) : 0;
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[i] = (offset + i * stride) % f_total;
    return out;
}

struct CropOrigin {
    int y = 0;
    int x = 0;
};

inline CropOrigin random_crop_origin(int frame_h, int frame_w, int h, int w, RngState& rng) {
    if (frame_h < h || frame_w < w)
        throw std::invalid_argument("crop: frame " + std::to_string(frame_h) + "x" +
                                    std::to_string(frame_w) + " smaller than crop " +
                                    std::to_string(h) + "x" + std::to_string(w));
    return {rng.uniform_int(frame_h - h + 1), rng.uniform_int(frame_w - w + 1)};
}

inline CropOrigin center_crop_origin(int frame_h, int frame_w, int h, int w) {
    if (frame_h < h || frame_w < w)
        throw std::invalid_argument("crop: frame " + std::to_string(frame_h) + "x" +
                                    std::to_string(frame_w) + " smaller than crop " +
                                    std::to_string(h) + "x" + std::to_string(w));
    return {(frame_h - h) / 2, (frame_w - w) / 2};
}

// Cuts the h x w crop at `origin` into non-overlapping s x s patches and
// flattens each into a row of length s*s*3, pixel values scaled to [0,1].
// Patches are ordered row-major over the patch grid.
inline TensorPtr crop_and_patchify(const FrameTensor& ft, int frame_idx, CropOrigin origin,
                                   int h, int w, int s) {
    if (frame_idx < 0 || frame_idx >= ft.frame_count)
        throw std::invalid_argument("patchify: frame index out of range");
    if (origin.y + h > ft.height || origin.x + w > ft.width)
        throw std::invalid_argument("patchify: crop exceeds frame bounds");
    const int grid_h = h / s, grid_w = w / s;
    if (grid_h < 1 || grid_w < 1)
        throw std::invalid_argument("patchify: patch size exceeds crop");
    const int p = grid_h * grid_w;
    const int d = s * s * 3;
    auto out = Tensor::create({p, d});
    const std::uint8_t* frame = ft.frame(frame_idx);
    const int stride_row = ft.width * 3;
    for (int gy = 0; gy < grid_h; ++gy) {
        for (int gx = 0; gx < grid_w; ++gx) {
            double* row = out->data.data() + static_cast<std::size_t>(gy * grid_w + gx) * d;
            for (int py = 0; py < s; ++py) {
                const std::uint8_t* src =
                    frame + (origin.y + gy * s + py) * stride_row + (origin.x + gx * s) * 3;
                for (int px = 0; px < s * 3; ++px)
                    row[py * s * 3 + px] = static_cast<double>(src[px]) / 255.0;
            }
        }
    }
    return out;
}

// Sinusoid positional vector for patch position p: channel 2j holds
// sin(p / 10000^(2j/d)), channel 2j+1 the matching cos.
inline std::vector<double> sinusoid_position(int pos, int dim) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (int ch = 0; ch < dim; ++ch) {
        const int j = ch / 2;
        const double angle = pos / std::pow(10000.0, 2.0 * j / dim);
        v[ch] = (ch % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
    return v;
}

inline TensorPtr sinusoid_table(int count, int dim) {
    auto t = Tensor::create({count, dim});
    for (int p = 0; p < count; ++p) {
        auto v = sinusoid_position(p, dim);
        std::copy(v.begin(), v.end(), t->data.begin() + static_cast<std::size_t>(p) * dim);
    }
    return t;
}

// Frame token extraction: e_p = Theta * x_p + v_p, then the shared learnable
// pseudo-MOS token is prepended as row 0. Spatial positions attach to the
// patch tokens only. `positional` is a test hook that zeroes the v_p term.
inline TensorPtr embed_frame_tokens(const TensorPtr& patches, const TensorPtr& theta,
                                    const TensorPtr& mos_token, bool positional = true) {
    if (patches->shape.size() != 2) throw ShapeError("embed: patches must be rank-2");
    const int d = patches->shape[1];
    if (theta->shape != Shape{d, d}) shape_fail("embed(theta)", theta->shape, {d, d});
    if (mos_token->shape != Shape{d}) shape_fail("embed(mos_token)", mos_token->shape, {d});
    auto tokens = matmul(patches, transpose(theta));
    if (positional) tokens = add(tokens, sinusoid_table(patches->shape[0], d));
    return concat({reshape(mos_token, {1, d}), tokens}, 0);
}

}  // namespace clipvqa
