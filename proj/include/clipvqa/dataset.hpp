#pragma once

// Dataset manifest (JSON lines, one {"id","frames","mos"} object per line)
// and in-memory sample loading. Frame paths are resolved relative to the
// manifest's directory unless absolute.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "clipvqa/frame_ingest.hpp"
#include "clipvqa/quality_head.hpp"
#include "clipvqa/synthetic.hpp"

namespace clipvqa {

struct ManifestEntry {
    std::string id;
    std::string frames_path;
    double raw_mos = 0.0;
};

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("manifest: cannot open: " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("manifest: " + path + ":" + std::to_string(line_no) + ": " +
                                     e.what());
        }
        entries.push_back({j.at("id").get<std::string>(), j.at("frames").get<std::string>(),
                           j.at("mos").get<double>()});
    }
    return entries;
}

inline void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("manifest: cannot open for write: " + path);
    for (const auto& e : entries) {
        nlohmann::json j{{"id", e.id}, {"frames", e.frames_path}, {"mos", e.raw_mos}};
        os << j.dump() << "\n";
    }
    if (!os) throw std::runtime_error("manifest: write failed: " + path);
}

inline std::string resolve_frames_path(const std::string& manifest_path,
                                       const std::string& frames_path) {
    std::filesystem::path p(frames_path);
    if (p.is_absolute()) return frames_path;
    return (std::filesystem::path(manifest_path).parent_path() / p).string();
}

struct VideoSample {
    std::string id;
    FrameTensor frames;
    double raw_mos = 0.0;
    double scaled_mos = 0.0;  // c in [T, U]
};

// Loads every sample into memory and scales labels from the manifest-wide
// raw range to [T, U].
class Dataset {
public:
    Dataset() = default;

    static Dataset load(const std::string& manifest_path,
                        const ReferenceRatings& ratings = ReferenceRatings::make()) {
        Dataset ds;
        const auto entries = read_manifest(manifest_path);
        if (entries.empty()) throw std::runtime_error("manifest: no samples in " + manifest_path);
        ds.raw_min_ = entries[0].raw_mos;
        ds.raw_max_ = entries[0].raw_mos;
        for (const auto& e : entries) {
            ds.raw_min_ = std::min(ds.raw_min_, e.raw_mos);
            ds.raw_max_ = std::max(ds.raw_max_, e.raw_mos);
        }
        for (const auto& e : entries) {
            VideoSample s;
            s.id = e.id;
            s.frames = read_frame_tensor(resolve_frames_path(manifest_path, e.frames_path));
            s.raw_mos = e.raw_mos;
            s.scaled_mos = scale_mos(e.raw_mos, ds.raw_min_, ds.raw_max_, ratings.t_low,
                                     ratings.u_high);
            ds.samples_.push_back(std::move(s));
        }
        return ds;
    }

    const std::vector<VideoSample>& samples() const { return samples_; }
    std::size_t size() const { return samples_.size(); }
    double raw_min() const { return raw_min_; }
    double raw_max() const { return raw_max_; }

private:
    std::vector<VideoSample> samples_;
    double raw_min_ = 0.0;
    double raw_max_ = 0.0;
};

// Writes a synthetic corpus: one FrameTensorFile per video plus the
// manifest. Fully deterministic under the spec's seed.
inline std::string generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("gen-data: cannot create " + out_dir + ": " + ec.message());

    std::vector<ManifestEntry> entries;
    for (int i = 0; i < spec.count; ++i) {
        auto video = render_synthetic_video(spec, i);
        char name[32];
        std::snprintf(name, sizeof(name), "vid_%04d", i);
        const std::string rel = std::string(name) + ".ftb";
        write_frame_tensor((fs::path(out_dir) / rel).string(), video.frames);
        entries.push_back({name, rel, video.raw_mos});
    }
    const std::string manifest = (fs::path(out_dir) / "manifest.jsonl").string();
    write_manifest(manifest, entries);
    return manifest;
}

}  // namespace clipvqa
