// Copyright (C) 2025 The geoprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geoprune/common.hpp"

namespace geoprune {

/// Nine-number camera: unit quaternion (w, x, y, z) rotating world into camera,
/// translation in meters, horizontal/vertical field of view in radians.
struct CameraCompact {
    std::array<double, 4> quaternion{1.0, 0.0, 0.0, 0.0};
    std::array<double, 3> translation{0.0, 0.0, 0.0};
    std::array<double, 2> fov{std::numbers::pi / 2, std::numbers::pi / 2};

    bool operator==(const CameraCompact&) const = default;
};

/// Pinhole camera with world->camera extrinsics: x_cam = R * x_world + T.
struct CameraDecoded {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();

    Eigen::Vector3d center() const { return -rotation.transpose() * translation; }

    bool operator==(const CameraDecoded& other) const {
        return rotation == other.rotation && translation == other.translation &&
               intrinsics == other.intrinsics;
    }
};

inline constexpr double kUnitQuaternionTolerance = 1e-6;
inline constexpr double kRotationTolerance = 1e-6;

inline void validate_camera(const CameraCompact& c) {
    const auto& q = c.quaternion;
    const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (!std::isfinite(norm) || std::abs(norm - 1.0) > kUnitQuaternionTolerance) {
        throw ValidationError("camera.quaternion must have unit norm (got " + std::to_string(norm) + ")");
    }
    for (double f : c.fov) {
        if (!(f > 0.0 && f < std::numbers::pi)) {
            throw ValidationError("camera.fov components must lie in (0, pi)");
        }
    }
    for (double t : c.translation) {
        if (!std::isfinite(t)) throw ValidationError("camera.translation must be finite");
    }
}

inline void validate_camera(const CameraDecoded& c) {
    if (!c.rotation.allFinite() || !c.translation.allFinite() || !c.intrinsics.allFinite()) {
        throw ValidationError("camera entries must be finite");
    }
    const Eigen::Matrix3d gram = c.rotation.transpose() * c.rotation;
    if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > kRotationTolerance ||
        std::abs(c.rotation.determinant() - 1.0) > kRotationTolerance) {
        throw ValidationError("camera.rotation must be a proper rotation");
    }
    const Eigen::Matrix3d& y = c.intrinsics;
    if (y(1, 0) != 0.0 || y(2, 0) != 0.0 || y(2, 1) != 0.0 || y(2, 2) != 1.0) {
        throw ValidationError("camera.intrinsics must be upper-triangular with unit last entry");
    }
    if (!(y(0, 0) > 0.0 && y(1, 1) > 0.0)) {
        throw ValidationError("camera.intrinsics focal entries must be positive");
    }
}

inline Eigen::Matrix3d quaternion_to_rotation(const std::array<double, 4>& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

/// Inverse of quaternion_to_rotation; returns w >= 0.
inline std::array<double, 4> rotation_to_quaternion(const Eigen::Matrix3d& r) {
    Eigen::Quaterniond q(r);
    q.normalize();
    if (q.w() < 0) q.coeffs() *= -1.0;
    return {q.w(), q.x(), q.y(), q.z()};
}

inline CameraDecoded decode_camera(const CameraCompact& c, const FrameGrid& grid) {
    validate_camera(c);
    CameraDecoded out;
    out.rotation = quaternion_to_rotation(c.quaternion);
    out.translation = Eigen::Vector3d(c.translation[0], c.translation[1], c.translation[2]);
    const double width = grid.image_width();
    const double height = grid.image_height();
    out.intrinsics = Eigen::Matrix3d::Identity();
    out.intrinsics(0, 0) = width / (2.0 * std::tan(c.fov[0] / 2.0));
    out.intrinsics(1, 1) = height / (2.0 * std::tan(c.fov[1] / 2.0));
    out.intrinsics(0, 2) = width / 2.0;
    out.intrinsics(1, 2) = height / 2.0;
    return out;
}

/// Pixel coordinates (u, v) of a patch center.
inline Eigen::Vector2d token_pixel_center(std::size_t frame, std::size_t row, std::size_t col,
                                          const FrameGrid& grid) {
    if (frame >= grid.frames || row >= grid.rows || col >= grid.cols) {
        throw ValidationError("token index (" + std::to_string(frame) + ", " + std::to_string(row) + ", " +
                              std::to_string(col) + ") outside the frame grid");
    }
    const double p = static_cast<double>(grid.patch_size);
    return {(static_cast<double>(col) + 0.5) * p, (static_cast<double>(row) + 0.5) * p};
}

/// World point seen at pixel (u, v) with camera-frame depth z. Returns nullopt
/// for nonpositive or non-finite depth.
inline std::optional<Eigen::Vector3d> unproject(const Eigen::Vector2d& pixel, double depth,
                                                const CameraDecoded& cam) {
    if (!(depth > 0.0) || !std::isfinite(depth)) return std::nullopt;
    const Eigen::Matrix3d& y = cam.intrinsics;
    if (y.determinant() == 0.0) throw ValidationError("camera.intrinsics is singular");
    // Upper-triangular solve keeps the inverse exact in the common fx, fy, cx, cy form.
    const Eigen::Vector3d ray = y.triangularView<Eigen::Upper>().solve(Eigen::Vector3d(pixel.x(), pixel.y(), 1.0));
    const Eigen::Vector3d cam_point = depth * ray;
    return cam.rotation.transpose() * (cam_point - cam.translation);
}

/// Forward pinhole projection: returns (u, v, depth).
inline Eigen::Vector3d project(const Eigen::Vector3d& world, const CameraDecoded& cam) {
    const Eigen::Vector3d cam_point = cam.rotation * world + cam.translation;
    const Eigen::Vector3d h = cam.intrinsics * cam_point;
    return {h.x() / h.z(), h.y() / h.z(), cam_point.z()};
}

struct VoxelKey {
    std::int64_t ix = 0;
    std::int64_t iy = 0;
    std::int64_t iz = 0;

    auto operator<=>(const VoxelKey&) const = default;

    Eigen::Vector3d center(double delta) const {
        return {(static_cast<double>(ix) + 0.5) * delta, (static_cast<double>(iy) + 0.5) * delta,
                (static_cast<double>(iz) + 0.5) * delta};
    }

    std::string to_string() const {
        return "(" + std::to_string(ix) + "," + std::to_string(iy) + "," + std::to_string(iz) + ")";
    }
};

inline VoxelKey voxel_key_of(const Eigen::Vector3d& p, double delta) {
    return {static_cast<std::int64_t>(std::floor(p.x() / delta)),
            static_cast<std::int64_t>(std::floor(p.y() / delta)),
            static_cast<std::int64_t>(std::floor(p.z() / delta))};
}

/// Voxel -> ascending token ids. Tokens without a 3D position are listed in
/// `invalid`.
struct VoxelMap {
    std::map<VoxelKey, TokenList> entries;
    TokenList invalid;

    std::size_t voxel_count() const { return entries.size(); }

    std::size_t token_count() const {
        std::size_t n = 0;
        for (const auto& [key, tokens] : entries) n += tokens.size();
        return n;
    }

    bool operator==(const VoxelMap&) const = default;
};

struct TokenPoint {
    TokenId id = 0;
    std::optional<Eigen::Vector3d> point;
};

inline VoxelMap voxelize(std::span<const TokenPoint> points, double delta) {
    if (!(delta > 0.0) || !std::isfinite(delta)) throw ValidationError("delta must be > 0");
    VoxelMap map;
    for (const auto& tp : points) {
        if (!tp.point || !tp.point->allFinite()) {
            map.invalid.push_back(tp.id);
            continue;
        }
        map.entries[voxel_key_of(*tp.point, delta)].push_back(tp.id);
    }
    for (auto& [key, tokens] : map.entries) std::sort(tokens.begin(), tokens.end());
    std::sort(map.invalid.begin(), map.invalid.end());
    return map;
}

/// Unprojects every token of every frame. `depths` holds S * H_p * W_p values
/// in flat token order.
inline std::vector<TokenPoint> unproject_tokens(const FrameGrid& grid, std::span<const CameraDecoded> cameras,
                                                std::span<const float> depths) {
    if (cameras.size() != grid.frames) {
        throw ValidationError("cameras: expected " + std::to_string(grid.frames) + " entries, got " +
                              std::to_string(cameras.size()));
    }
    if (depths.size() != grid.token_count()) {
        throw ValidationError("depths: expected " + std::to_string(grid.token_count()) + " values, got " +
                              std::to_string(depths.size()));
    }
    std::vector<TokenPoint> points;
    points.reserve(grid.token_count());
    for (std::size_t s = 0; s < grid.frames; ++s) {
        for (std::size_t h = 0; h < grid.rows; ++h) {
            for (std::size_t w = 0; w < grid.cols; ++w) {
                const TokenId id = grid.flat_id(s, h, w);
                const double depth = depths[id];
                points.push_back({id, unproject(token_pixel_center(s, h, w, grid), depth, cameras[s])});
            }
        }
    }
    return points;
}

}  // namespace geoprune
