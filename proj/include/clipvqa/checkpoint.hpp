#pragma once

// Checkpoint container: magic "CQCK", u32 version, u32 parameter count,
// then per parameter u32 name length + UTF-8 name, u32 rank, u32 dims,
// raw little-endian float64 data. Round-trips bit-exactly.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "clipvqa/nn.hpp"
#include "clipvqa/tensor.hpp"

namespace clipvqa {

inline constexpr char kCheckpointMagic[4] = {'C', 'Q', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("checkpoint: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f64_le(std::ostream& os, const double* p, std::size_t n) {
    static_assert(sizeof(double) == 8);
    // Host is little-endian on every supported target; write raw.
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 8));
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ParamList& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
    os.write(kCheckpointMagic, 4);
    detail::write_u32(os, kCheckpointVersion);
    detail::write_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        detail::write_u32(os, static_cast<std::uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        detail::write_u32(os, static_cast<std::uint32_t>(p.tensor->shape.size()));
        for (int d : p.tensor->shape) detail::write_u32(os, static_cast<std::uint32_t>(d));
        detail::write_f64_le(os, p.tensor->data.data(), p.tensor->data.size());
    }
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

struct CheckpointEntry {
    Shape shape;
    std::vector<double> data;
};

inline std::map<std::string, CheckpointEntry> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const std::uint32_t version = detail::read_u32(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t count = detail::read_u32(is);
    std::map<std::string, CheckpointEntry> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = detail::read_u32(is);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw std::runtime_error("checkpoint: truncated file");
        const std::uint32_t rank = detail::read_u32(is);
        CheckpointEntry e;
        std::int64_t n = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            const auto d = static_cast<int>(detail::read_u32(is));
            e.shape.push_back(d);
            n *= d;
        }
        e.data.resize(static_cast<std::size_t>(n));
        if (!is.read(reinterpret_cast<char*>(e.data.data()), n * 8))
            throw std::runtime_error("checkpoint: truncated file");
        entries.emplace(std::move(name), std::move(e));
    }
    return entries;
}

// Strict assignment: every model parameter must be present with a matching
// shape, and the file may not carry unknown names.
inline void apply_checkpoint(const std::map<std::string, CheckpointEntry>& entries,
                             const ParamList& params) {
    std::size_t used = 0;
    for (const auto& p : params) {
        auto it = entries.find(p.name);
        if (it == entries.end())
            throw std::runtime_error("checkpoint: missing parameter " + p.name);
        if (it->second.shape != p.tensor->shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + p.name + ": file " +
                                     shape_str(it->second.shape) + " vs model " +
                                     shape_str(p.tensor->shape));
        p.tensor->data = it->second.data;
        ++used;
    }
    if (used != entries.size())
        throw std::runtime_error("checkpoint: file carries " +
                                 std::to_string(entries.size() - used) + " unknown parameter(s)");
}

inline void load_checkpoint_into(const std::string& path, const ParamList& params) {
    apply_checkpoint(load_checkpoint(path), params);
}

}  // namespace clipvqa
