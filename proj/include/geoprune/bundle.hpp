// Copyright (C) 2025 The geoprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "geoprune/common.hpp"
#include "geoprune/geometry.hpp"

namespace geoprune {

enum class CameraMode { compact9, decoded };

inline const char* to_string(CameraMode mode) { return mode == CameraMode::compact9 ? "compact9" : "decoded"; }

/// Per-token voxel labels recorded by the scene generator.
struct GroundTruth {
    double delta = 0.1;
    std::vector<std::optional<VoxelKey>> voxel;  // nullopt: no surface hit
    std::vector<int> object;                     // -1: no surface hit

    bool operator==(const GroundTruth&) const = default;
};

/// Everything the pruner consumes for one multi-view clip.
struct SceneBundle {
    FrameGrid grid;
    double delta = 0.1;
    CameraMode camera_mode = CameraMode::compact9;
    std::vector<CameraCompact> compact_cameras;  // used when camera_mode == compact9
    std::vector<CameraDecoded> decoded_cameras;  // used when camera_mode == decoded
    std::vector<float> depths;                   // S * H_p * W_p, flat token order
    AttentionMatrix attention;
    std::optional<FeatureMatrix> features;
    std::optional<GroundTruth> groundtruth;

    std::size_t token_count() const { return grid.token_count(); }

    std::vector<CameraDecoded> cameras() const {
        if (camera_mode == CameraMode::decoded) return decoded_cameras;
        std::vector<CameraDecoded> out;
        out.reserve(compact_cameras.size());
        for (const auto& c : compact_cameras) out.push_back(decode_camera(c, grid));
        return out;
    }

    /// Throws ValidationError naming the first inconsistent field; returns
    /// non-fatal warnings.
    std::vector<std::string> validate() const {
        grid.validate();
        const std::size_t n = grid.token_count();
        if (!(delta > 0.0)) throw ValidationError("delta must be > 0");
        const std::size_t camera_count =
            camera_mode == CameraMode::compact9 ? compact_cameras.size() : decoded_cameras.size();
        if (camera_count != grid.frames) {
            throw ValidationError("cameras: expected " + std::to_string(grid.frames) + " cameras, got " +
                                  std::to_string(camera_count));
        }
        if (camera_mode == CameraMode::compact9) {
            for (const auto& c : compact_cameras) validate_camera(c);
        } else {
            for (const auto& c : decoded_cameras) validate_camera(c);
        }
        if (depths.size() != n) {
            throw ValidationError("depths: expected " + std::to_string(n) + " values, got " +
                                  std::to_string(depths.size()));
        }
        if (attention.rows() != n || attention.cols() != n) {
            throw ValidationError("attention: expected shape " + std::to_string(n) + "x" + std::to_string(n) +
                                  ", got " + std::to_string(attention.rows()) + "x" +
                                  std::to_string(attention.cols()));
        }
        for (double a : attention.values()) {
            if (!std::isfinite(a)) throw ValidationError("attention: contains a non-finite entry");
            if (a < 0.0) throw ValidationError("attention: contains a negative entry");
        }
        if (features) {
            if (features->rows() != n) {
                throw ValidationError("features: expected " + std::to_string(n) + " rows, got " +
                                      std::to_string(features->rows()));
            }
            if (features->cols() == 0) throw ValidationError("features: dimension d must be >= 1");
            for (float f : features->values()) {
                if (!std::isfinite(f)) throw ValidationError("features: contains a non-finite entry");
            }
        }
        if (groundtruth && (groundtruth->voxel.size() != n || groundtruth->object.size() != n)) {
            throw ValidationError("groundtruth: expected " + std::to_string(n) + " labels");
        }

        std::vector<std::string> warnings;
        double worst = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < n; ++c) s += attention(r, c);
            worst = std::max(worst, std::abs(s - 1.0));
        }
        if (worst > 1e-3) {
            warnings.push_back("attention rows are not stochastic (max |row sum - 1| = " + std::to_string(worst) + ")");
        }
        std::size_t bad_depth = 0;
        for (float d : depths) {
            if (!(d > 0.0f) || !std::isfinite(d)) ++bad_depth;
        }
        if (bad_depth > 0) {
            warnings.push_back(std::to_string(bad_depth) + " of " + std::to_string(n) +
                               " tokens have invalid depth and will be pruned");
        }
        return warnings;
    }

    bool operator==(const SceneBundle&) const = default;
};

/// Unprojects and voxelizes every token of the bundle.
inline VoxelMap voxelize_bundle(const SceneBundle& bundle, double delta) {
    const auto cams = bundle.cameras();
    const auto points = unproject_tokens(bundle.grid, cams, bundle.depths);
    return voxelize(points, delta);
}

}  // namespace geoprune
