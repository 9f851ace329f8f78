// Copyright (C) 2025 The geoprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "geoprune/bundle.hpp"
#include "geoprune/counter_rng.hpp"
#include "geoprune/geometry.hpp"

namespace geoprune {

/// Axis-aligned box; `extent` holds full side lengths.
struct Box {
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Vector3d extent = Eigen::Vector3d::Constant(0.2);
};

struct SceneSpec {
    std::vector<Box> objects;
    FrameGrid grid{4, 7, 7, 16};
    double ring_radius = 3.0;
    double ring_height = 1.0;
    double ring_phase = 0.0;  // radians added to every camera's ring angle
    std::array<double, 2> fov{1.2, 1.2};
    double noise = 0.0;
    double coupling = 0.05;
    double delta = 0.1;
    std::size_t feature_dim = 16;
    double feature_noise = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        grid.validate();
        if (objects.empty()) throw ValidationError("scene: at least one object is required");
        for (const auto& b : objects) {
            if (!b.center.allFinite() || !(b.extent.array() > 0.0).all()) {
                throw ValidationError("scene: object extents must be > 0");
            }
        }
        if (!(ring_radius > 0.0)) throw ValidationError("scene: ring_radius must be > 0");
        if (!(noise >= 0.0)) throw ValidationError("scene: noise must be >= 0");
        if (!(coupling >= 0.0)) throw ValidationError("scene: coupling must be >= 0");
        if (!(delta > 0.0)) throw ValidationError("scene: delta must be > 0");
        if (!(feature_noise >= 0.0)) throw ValidationError("scene: feature_noise must be >= 0");
        for (double f : fov) {
            if (!(f > 0.0 && f < std::numbers::pi)) throw ValidationError("scene: fov must lie in (0, pi)");
        }
    }
};

/// Ray parameter of the nearest intersection with `box` at t > 0, if any.
inline std::optional<double> intersect_box(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, const Box& box) {
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double lo = box.center[a] - box.extent[a] / 2.0;
        const double hi = box.center[a] + box.extent[a] / 2.0;
        if (dir[a] == 0.0) {
            if (origin[a] < lo || origin[a] > hi) return std::nullopt;
            continue;
        }
        double t0 = (lo - origin[a]) / dir[a];
        double t1 = (hi - origin[a]) / dir[a];
        if (t0 > t1) std::swap(t0, t1);
        t_near = std::max(t_near, t0);
        t_far = std::min(t_far, t1);
    }
    if (t_far < t_near || t_far <= 0.0) return std::nullopt;
    return t_near > 0.0 ? t_near : t_far;
}

/// Camera at `eye` looking at `target`, camera axes x right, y down, z forward,
/// world z up.
inline CameraCompact look_at_camera(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                                    const std::array<double, 2>& fov) {
    const Eigen::Vector3d forward = (target - eye).normalized();
    Eigen::Vector3d up(0.0, 0.0, 1.0);
    if (std::abs(forward.dot(up)) > 1.0 - 1e-9) up = Eigen::Vector3d(0.0, 1.0, 0.0);
    const Eigen::Vector3d right = forward.cross(up).normalized();
    const Eigen::Vector3d down = forward.cross(right);
    Eigen::Matrix3d r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    const Eigen::Vector3d t = -r * eye;
    CameraCompact cam;
    cam.quaternion = rotation_to_quaternion(r);
    cam.translation = {t.x(), t.y(), t.z()};
    cam.fov = fov;
    return cam;
}

/// Deterministic multi-view bundle with analytic geometry. Cameras sit on a
/// ring around the object centroid; each token's depth comes from a ray cast
/// against the boxes (misses get depth 0). Attention is
///   A[i, j] = 1/N + coupling * [voxel(i) == voxel(j)] + noise * u_ij,
/// u_ij = CounterRng::uniform(seed, attention_noise, i * N + j); values are
/// rounded to float32 so the bundle survives a round trip through disk.
/// Features are per-object random directions plus per-token jitter; tokens
/// that hit nothing get a per-token random vector.
inline SceneBundle generate(const SceneSpec& spec) {
    spec.validate();
    const FrameGrid& grid = spec.grid;
    const std::size_t n = grid.token_count();

    Eigen::Vector3d target = Eigen::Vector3d::Zero();
    for (const auto& b : spec.objects) target += b.center;
    target /= static_cast<double>(spec.objects.size());

    SceneBundle bundle;
    bundle.grid = grid;
    bundle.delta = spec.delta;
    bundle.camera_mode = CameraMode::compact9;
    for (std::size_t s = 0; s < grid.frames; ++s) {
        const double theta =
            spec.ring_phase + 2.0 * std::numbers::pi * static_cast<double>(s) / static_cast<double>(grid.frames);
        const Eigen::Vector3d eye =
            target + Eigen::Vector3d(spec.ring_radius * std::cos(theta), spec.ring_radius * std::sin(theta),
                                     spec.ring_height);
        bundle.compact_cameras.push_back(look_at_camera(eye, target, spec.fov));
    }
    const std::vector<CameraDecoded> cams = bundle.cameras();

    GroundTruth truth;
    truth.delta = spec.delta;
    truth.voxel.assign(n, std::nullopt);
    truth.object.assign(n, -1);
    bundle.depths.assign(n, 0.0f);
    for (std::size_t s = 0; s < grid.frames; ++s) {
        const CameraDecoded& cam = cams[s];
        const Eigen::Vector3d origin = cam.center();
        for (std::size_t h = 0; h < grid.rows; ++h) {
            for (std::size_t w = 0; w < grid.cols; ++w) {
                const TokenId id = grid.flat_id(s, h, w);
                const Eigen::Vector2d px = token_pixel_center(s, h, w, grid);
                const Eigen::Vector3d cam_ray =
                    cam.intrinsics.triangularView<Eigen::Upper>().solve(Eigen::Vector3d(px.x(), px.y(), 1.0));
                const Eigen::Vector3d dir = cam.rotation.transpose() * cam_ray;
                double best = std::numeric_limits<double>::infinity();
                int hit = -1;
                for (std::size_t o = 0; o < spec.objects.size(); ++o) {
                    if (auto t = intersect_box(origin, dir, spec.objects[o]); t && *t < best) {
                        best = *t;
                        hit = static_cast<int>(o);
                    }
                }
                if (hit < 0) continue;
                // dir has unit camera-frame z, so the ray parameter is the depth.
                bundle.depths[id] = static_cast<float>(best);
                truth.object[id] = hit;
                if (auto p = unproject(px, bundle.depths[id], cam)) truth.voxel[id] = voxel_key_of(*p, spec.delta);
            }
        }
    }

    const double base = 1.0 / static_cast<double>(n);
    bundle.attention = AttentionMatrix(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double a = base;
            if (truth.voxel[i] && truth.voxel[j] && *truth.voxel[i] == *truth.voxel[j]) a += spec.coupling;
            if (spec.noise > 0.0) a += spec.noise * CounterRng::uniform(spec.seed, CounterRng::attention_noise, i * n + j);
            bundle.attention(i, j) = static_cast<double>(static_cast<float>(std::max(0.0, a)));
        }
    }

    if (spec.feature_dim > 0) {
        const std::size_t d = spec.feature_dim;
        FeatureMatrix features(n, d, 0.0f);
        for (std::size_t i = 0; i < n; ++i) {
            const int o = truth.object[i];
            for (std::size_t c = 0; c < d; ++c) {
                const double jitter = 2.0 * CounterRng::uniform(spec.seed, CounterRng::feature_noise, i * d + c) - 1.0;
                double value;
                if (o >= 0) {
                    const double dir_c =
                        2.0 * CounterRng::uniform(spec.seed, CounterRng::features, static_cast<std::size_t>(o) * d + c) -
                        1.0;
                    value = dir_c + spec.feature_noise * jitter;
                } else {
                    value = jitter;
                }
                features(i, c) = static_cast<float>(value);
            }
        }
        bundle.features = std::move(features);
    }
    bundle.groundtruth = std::move(truth);
    return bundle;
}

/// Boxes scattered over a square floor region, seeded. Used by tests and the
/// `gen` command when no explicit object list is given.
inline std::vector<Box> random_objects(std::size_t count, double half_width, double min_extent, double max_extent,
                                       std::uint64_t seed) {
    std::vector<Box> out;
    constexpr std::uint64_t kLayoutStream = 16;
    for (std::size_t o = 0; o < count; ++o) {
        auto u = [&](std::size_t c) { return CounterRng::uniform(seed, kLayoutStream, o * 8 + c); };
        Box b;
        b.extent = Eigen::Vector3d(min_extent + (max_extent - min_extent) * u(3), min_extent + (max_extent - min_extent) * u(4),
                                   min_extent + (max_extent - min_extent) * u(5));
        b.center = Eigen::Vector3d((2.0 * u(0) - 1.0) * half_width, (2.0 * u(1) - 1.0) * half_width, b.extent.z() / 2.0);
        out.push_back(b);
    }
    return out;
}

}  // namespace geoprune
