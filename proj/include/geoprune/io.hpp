// Copyright (C) 2025 The geoprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geoprune/bundle.hpp"
#include "geoprune/metrics.hpp"
#include "geoprune/pruner.hpp"

namespace geoprune::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";

/// Malformed or inconsistent files on disk.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Raw little-endian float32 arrays

inline std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        v = ((v & 0xFF) << 24) | ((v & 0xFF00) << 8) | ((v >> 8) & 0xFF00) | (v >> 24);
    }
    return v;
}

template <typename T>
void write_f32(const fs::path& path, const std::vector<T>& values) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    std::vector<char> buffer(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto f = static_cast<float>(values[i]);
        const std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(f));
        std::memcpy(buffer.data() + 4 * i, &bits, 4);
    }
    out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    if (!out) throw FormatError("failed writing " + path.string());
}

inline std::vector<float> read_f32(const fs::path& path, std::size_t expected_count) {
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec) throw FormatError("cannot stat " + path.string() + ": " + ec.message());
    if (size != expected_count * 4) {
        throw FormatError(path.filename().string() + ": expected " + std::to_string(expected_count * 4) +
                          " bytes, found " + std::to_string(size));
    }
    std::ifstream in(path, std::ios::binary);
    std::vector<char> buffer(size);
    in.read(buffer.data(), static_cast<std::streamsize>(size));
    if (!in) throw FormatError("failed reading " + path.string());
    std::vector<float> values(expected_count);
    for (std::size_t i = 0; i < expected_count; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, buffer.data() + 4 * i, 4);
        values[i] = std::bit_cast<float>(to_little(bits));
    }
    return values;
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    out << text;
}

inline json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.filename().string() + ": " + e.what());
    }
}

inline json key_json(const VoxelKey& k) { return json::array({k.ix, k.iy, k.iz}); }
inline VoxelKey key_from_json(const json& j) {
    return {j.at(0).get<std::int64_t>(), j.at(1).get<std::int64_t>(), j.at(2).get<std::int64_t>()};
}

// ---------------------------------------------------------------------------
// Scene bundles

inline json camera_rows(const SceneBundle& b) {
    json rows = json::array();
    if (b.camera_mode == CameraMode::compact9) {
        for (const auto& c : b.compact_cameras) {
            rows.push_back({c.quaternion[0], c.quaternion[1], c.quaternion[2], c.quaternion[3], c.translation[0],
                            c.translation[1], c.translation[2], c.fov[0], c.fov[1]});
        }
    } else {
        for (const auto& c : b.decoded_cameras) {
            json row = json::array();
            for (int r = 0; r < 3; ++r)
                for (int col = 0; col < 3; ++col) row.push_back(c.rotation(r, col));
            for (int r = 0; r < 3; ++r) row.push_back(c.translation[r]);
            for (int r = 0; r < 3; ++r)
                for (int col = 0; col < 3; ++col) row.push_back(c.intrinsics(r, col));
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

/// Writes `bundle` as a directory: manifest.json plus raw float32 arrays and
/// JSON side files.
inline void write_bundle(const SceneBundle& bundle, const fs::path& dir) {
    bundle.validate();
    fs::create_directories(dir);
    json files = {{"attention", "attention.f32"}, {"depths", "depths.f32"}, {"cameras", "cameras.json"}};
    write_f32(dir / "attention.f32", bundle.attention.values());
    write_f32(dir / "depths.f32", bundle.depths);
    write_text(dir / "cameras.json", json{{"cameras", camera_rows(bundle)}}.dump(1) + "\n");
    std::size_t d = 0;
    if (bundle.features) {
        d = bundle.features->cols();
        files["features"] = "features.f32";
        write_f32(dir / "features.f32", bundle.features->values());
    }
    if (bundle.groundtruth) {
        files["groundtruth"] = "groundtruth.json";
        json voxels = json::array();
        for (const auto& v : bundle.groundtruth->voxel) voxels.push_back(v ? key_json(*v) : json(nullptr));
        json truth = {{"delta", bundle.groundtruth->delta}, {"voxel", voxels}, {"object", bundle.groundtruth->object}};
        write_text(dir / "groundtruth.json", truth.dump() + "\n");
    }
    json manifest = {{"format_version", kFormatVersion},
                     {"endianness", "little"},
                     {"S", bundle.grid.frames},
                     {"H_p", bundle.grid.rows},
                     {"W_p", bundle.grid.cols},
                     {"p", bundle.grid.patch_size},
                     {"d", d},
                     {"delta", bundle.delta},
                     {"camera_mode", to_string(bundle.camera_mode)},
                     {"files", files}};
    write_text(dir / kManifestName, manifest.dump(2) + "\n");
}

struct LoadedBundle {
    SceneBundle bundle;
    std::vector<std::string> warnings;
};

inline LoadedBundle load_bundle(const fs::path& dir) {
    const json manifest = read_json(dir / kManifestName);
    LoadedBundle out;
    SceneBundle& b = out.bundle;
    try {
        const int version = manifest.at("format_version").get<int>();
        if (version != kFormatVersion) {
            throw FormatError("manifest: unsupported format_version " + std::to_string(version));
        }
        if (manifest.value("endianness", std::string("little")) != "little") {
            throw FormatError("manifest: only little-endian bundles are supported");
        }
        b.grid = {manifest.at("S").get<std::size_t>(), manifest.at("H_p").get<std::size_t>(),
                  manifest.at("W_p").get<std::size_t>(), manifest.at("p").get<std::size_t>()};
        b.delta = manifest.value("delta", 0.1);
        const std::string mode = manifest.at("camera_mode").get<std::string>();
        if (mode == "compact9") {
            b.camera_mode = CameraMode::compact9;
        } else if (mode == "decoded") {
            b.camera_mode = CameraMode::decoded;
        } else {
            throw FormatError("manifest: unknown camera_mode '" + mode + "'");
        }
        b.grid.validate();
        const std::size_t n = b.grid.token_count();
        const json& files = manifest.at("files");

        const auto attention = read_f32(dir / files.at("attention").get<std::string>(), n * n);
        for (float a : attention) {
            if (std::isnan(a)) throw FormatError("attention: contains NaN");
        }
        b.attention = AttentionMatrix(n, n, std::vector<double>(attention.begin(), attention.end()));
        b.depths = read_f32(dir / files.at("depths").get<std::string>(), n);

        const json cams = read_json(dir / files.at("cameras").get<std::string>()).at("cameras");
        const std::size_t row_len = b.camera_mode == CameraMode::compact9 ? 9 : 21;
        if (cams.size() != b.grid.frames) {
            throw FormatError("cameras: expected " + std::to_string(b.grid.frames) + " rows, found " +
                              std::to_string(cams.size()));
        }
        for (const auto& row : cams) {
            if (!row.is_array() || row.size() != row_len) {
                throw FormatError("cameras: camera_mode " + mode + " needs rows of " + std::to_string(row_len) +
                                  " numbers, found a row of " + std::to_string(row.size()));
            }
            const auto v = row.get<std::vector<double>>();
            if (b.camera_mode == CameraMode::compact9) {
                b.compact_cameras.push_back({{v[0], v[1], v[2], v[3]}, {v[4], v[5], v[6]}, {v[7], v[8]}});
            } else {
                CameraDecoded c;
                for (int r = 0; r < 3; ++r)
                    for (int col = 0; col < 3; ++col) c.rotation(r, col) = v[3 * r + col];
                c.translation = Eigen::Vector3d(v[9], v[10], v[11]);
                for (int r = 0; r < 3; ++r)
                    for (int col = 0; col < 3; ++col) c.intrinsics(r, col) = v[12 + 3 * r + col];
                b.decoded_cameras.push_back(c);
            }
        }

        const std::size_t d = manifest.value("d", std::size_t{0});
        if (files.contains("features")) {
            if (d == 0) throw FormatError("manifest: features file given but d = 0");
            b.features = FeatureMatrix(n, d, read_f32(dir / files.at("features").get<std::string>(), n * d));
        }
        if (files.contains("groundtruth")) {
            const json truth = read_json(dir / files.at("groundtruth").get<std::string>());
            GroundTruth g;
            g.delta = truth.at("delta").get<double>();
            for (const auto& v : truth.at("voxel")) {
                g.voxel.push_back(v.is_null() ? std::nullopt : std::optional<VoxelKey>(key_from_json(v)));
            }
            g.object = truth.at("object").get<std::vector<int>>();
            b.groundtruth = std::move(g);
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
    out.warnings = b.validate();
    return out;
}

// ---------------------------------------------------------------------------
// Results and reports

struct ConfigEcho {
    PruneConfig config;
    std::optional<double> ratio;
};

inline json config_json(const ConfigEcho& echo) {
    const PruneConfig& c = echo.config;
    json j = {{"alpha", c.alpha},
              {"delta", c.delta},
              {"k", c.k},
              {"budget", c.budget},
              {"strategy", to_string(c.strategy)},
              {"relevance", to_string(c.relevance)},
              {"seed", c.seed},
              {"self_term", c.self_term == SelfTerm::exclude ? "exclude" : "include"}};
    j["ratio"] = echo.ratio ? json(*echo.ratio) : json(nullptr);
    return j;
}

inline json result_json(const PruneResult& r, const ConfigEcho& echo) {
    json trace = json::array();
    for (const auto& it : r.trace) {
        json keys = json::array();
        for (const auto& k : it.selected) keys.push_back(key_json(k));
        trace.push_back({{"candidates", it.candidates},
                         {"selected", keys},
                         {"scores", it.scores},
                         {"selected_tokens", it.selected_tokens}});
    }
    json per_voxel = json::array();
    for (const auto& [key, rec] : r.per_voxel) {
        json scores = json::array();
        for (const auto& s : rec.scores) scores.push_back({s.id, s.score});
        per_voxel.push_back({{"key", key_json(key)}, {"kept", rec.kept}, {"dropped", rec.dropped}, {"scores", scores}});
    }
    json order = json::array();
    for (const auto& k : r.selection_order) order.push_back(key_json(k));
    return {{"strategy", to_string(r.strategy)},
            {"config", config_json(echo)},
            {"counts",
             {{"total", r.counts.total},
              {"valid", r.counts.valid},
              {"stage1", r.counts.stage1},
              {"retained", r.counts.retained},
              {"retained_fraction", r.counts.total ? double(r.counts.retained) / double(r.counts.total) : 0.0}}},
            {"shortfall", r.shortfall},
            {"retained", r.retained},
            {"selection_order", order},
            {"trace", trace},
            {"per_voxel", per_voxel}};
}

struct LoadedResult {
    PruneResult result;
    ConfigEcho echo;
};

inline LoadedResult result_from_json(const json& j) {
    LoadedResult out;
    try {
        PruneResult& r = out.result;
        r.strategy = parse_strategy(j.at("strategy").get<std::string>());
        const json& c = j.at("config");
        PruneConfig& cfg = out.echo.config;
        cfg.alpha = c.at("alpha").get<double>();
        cfg.delta = c.at("delta").get<double>();
        cfg.k = c.at("k").get<std::size_t>();
        cfg.budget = c.at("budget").get<std::size_t>();
        cfg.strategy = parse_strategy(c.at("strategy").get<std::string>());
        cfg.relevance = parse_relevance(c.at("relevance").get<std::string>());
        cfg.seed = c.at("seed").get<std::uint64_t>();
        cfg.self_term = c.value("self_term", std::string("exclude")) == "include" ? SelfTerm::include : SelfTerm::exclude;
        if (c.contains("ratio") && !c.at("ratio").is_null()) out.echo.ratio = c.at("ratio").get<double>();
        const json& counts = j.at("counts");
        r.counts = {counts.at("total").get<std::size_t>(), counts.at("valid").get<std::size_t>(),
                    counts.at("stage1").get<std::size_t>(), counts.at("retained").get<std::size_t>()};
        r.shortfall = j.at("shortfall").get<std::size_t>();
        r.retained = j.at("retained").get<TokenList>();
        for (const auto& k : j.at("selection_order")) r.selection_order.push_back(key_from_json(k));
        for (const auto& it : j.at("trace")) {
            SdpIteration s;
            s.candidates = it.at("candidates").get<std::size_t>();
            for (const auto& k : it.at("selected")) s.selected.push_back(key_from_json(k));
            s.scores = it.at("scores").get<std::vector<double>>();
            s.selected_tokens = it.at("selected_tokens").get<std::size_t>();
            r.trace.push_back(std::move(s));
        }
        for (const auto& v : j.at("per_voxel")) {
            VoxelRecord rec;
            rec.kept = v.at("kept").get<TokenList>();
            rec.dropped = v.at("dropped").get<TokenList>();
            for (const auto& s : v.at("scores")) rec.scores.push_back({s.at(0).get<TokenId>(), s.at(1).get<double>()});
            r.per_voxel.emplace(key_from_json(v.at("key")), std::move(rec));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("result: ") + e.what());
    }
    return out;
}

inline json metrics_json(const MetricsReport& m, const std::optional<ConfigEcho>& echo = std::nullopt) {
    json j = {{"strategy", m.strategy},
              {"coverage", m.coverage},
              {"redundancy", m.redundancy},
              {"budget_ratio", m.budget_ratio},
              {"occupied_voxels", m.occupied_voxels},
              {"covered_voxels", m.covered_voxels},
              {"retained", m.retained},
              {"per_frame", m.per_frame}};
    if (echo) j["config"] = config_json(*echo);
    return j;
}

// ---------------------------------------------------------------------------
// PLY voxel clouds

struct PlyVertex {
    Eigen::Vector3d position;
    std::array<std::uint8_t, 3> color;
};

inline constexpr std::array<std::uint8_t, 3> kKeptColor{40, 200, 60};
inline constexpr std::array<std::uint8_t, 3> kPrunedColor{220, 50, 40};

inline std::string ply_text(const std::vector<PlyVertex>& vertices, const std::string& comment) {
    std::ostringstream out;
    out << "ply\nformat ascii 1.0\ncomment " << comment << "\nelement vertex " << vertices.size()
        << "\nproperty float x\nproperty float y\nproperty float z\n"
           "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    char line[128];
    for (const auto& v : vertices) {
        std::snprintf(line, sizeof(line), "%.6f %.6f %.6f %u %u %u\n", v.position.x(), v.position.y(), v.position.z(),
                      unsigned(v.color[0]), unsigned(v.color[1]), unsigned(v.color[2]));
        out << line;
    }
    return out.str();
}

/// Voxel clouds before and after pruning: one vertex per voxel center. The
/// "before" cloud has every occupied voxel, green when some token survives and
/// red otherwise; the "after" cloud has only the covered voxels.
inline std::pair<std::vector<PlyVertex>, std::vector<PlyVertex>> voxel_clouds(const VoxelMap& before,
                                                                              const TokenList& retained,
                                                                              double delta) {
    std::vector<bool> kept;
    for (TokenId id : retained) {
        if (id >= kept.size()) kept.resize(id + 1, false);
        kept[id] = true;
    }
    std::vector<PlyVertex> all, covered;
    for (const auto& [key, tokens] : before.entries) {
        const bool hit = std::any_of(tokens.begin(), tokens.end(), [&](TokenId id) { return id < kept.size() && kept[id]; });
        PlyVertex v{key.center(delta), hit ? kKeptColor : kPrunedColor};
        all.push_back(v);
        if (hit) covered.push_back(v);
    }
    return {all, covered};
}

}  // namespace geoprune::io
