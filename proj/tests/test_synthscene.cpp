// Copyright (C) 2025 The geoprune Authors
// SPDX-License-Identifier: Apache-2.0

#include <numbers>

#include <gtest/gtest.h>

#include "geoprune/synthscene.hpp"
#include "test_support.hpp"

namespace geoprune {
namespace {

TEST(Generate, SinglePointSeenByFourViews) {
    const SceneBundle b = generate(testing::single_point_spec(4));
    ASSERT_TRUE(b.groundtruth.has_value());
    std::map<VoxelKey, int> counts;
    for (const auto& v : b.groundtruth->voxel) {
        if (v) ++counts[*v];
    }
    ASSERT_EQ(counts.size(), 1u);
    EXPECT_EQ(counts.begin()->first, (VoxelKey{0, 0, 0}));
    EXPECT_EQ(counts.begin()->second, 4);
    // One token per frame, at the center patch.
    for (std::size_t s = 0; s < 4; ++s) EXPECT_TRUE(b.groundtruth->voxel[b.grid.flat_id(s, 2, 2)].has_value());
}

TEST(Generate, NoNoiseNoCouplingGivesConstantAttention) {
    SceneSpec spec = testing::multi_object_spec(2);
    spec.noise = 0.0;
    spec.coupling = 0.0;
    const SceneBundle b = generate(spec);
    const double base = static_cast<double>(static_cast<float>(1.0 / 512.0));
    for (double v : b.attention.values()) ASSERT_EQ(v, base);
}

TEST(Generate, SameSpecIsBitIdentical) {
    const SceneSpec spec = testing::multi_object_spec(11);
    const SceneBundle a = generate(spec);
    const SceneBundle b = generate(spec);
    EXPECT_EQ(a.depths, b.depths);
    EXPECT_EQ(a.attention.values(), b.attention.values());
    ASSERT_TRUE(a.features && b.features);
    EXPECT_EQ(a.features->values(), b.features->values());
    EXPECT_EQ(a.groundtruth->voxel, b.groundtruth->voxel);
    SceneSpec other = spec;
    other.seed = 12;
    EXPECT_NE(generate(other).attention.values(), a.attention.values());
}

TEST(Generate, VoxelizingReproducesGroundTruth) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const SceneBundle b = generate(testing::multi_object_spec(seed));
        const VoxelMap m = voxelize_bundle(b, b.groundtruth->delta);
        std::vector<std::optional<VoxelKey>> labels(b.token_count());
        for (const auto& [key, tokens] : m.entries)
            for (TokenId id : tokens) labels[id] = key;
        EXPECT_EQ(labels, b.groundtruth->voxel);
        EXPECT_GT(m.voxel_count(), 20u);
    }
}

TEST(Generate, MissesHaveZeroDepth) {
    const SceneBundle b = generate(testing::single_point_spec(4));
    std::size_t zero = 0;
    for (float d : b.depths) zero += d == 0.0f;
    EXPECT_EQ(zero, b.token_count() - 4);
    const auto warnings = b.validate();
    EXPECT_TRUE(std::any_of(warnings.begin(), warnings.end(),
                            [](const std::string& w) { return w.find("invalid depth") != std::string::npos; }));
}

TEST(Generate, DuplicatesOutscoreUnrelatedTokens) {
    SceneSpec spec = testing::single_point_spec(4);
    spec.noise = 1e-3;
    const SceneBundle b = generate(spec);
    const VoxelMap m = voxelize_bundle(b, 0.1);
    TokenList merged = m.entries.begin()->second;
    merged.insert(merged.end(), m.invalid.begin(), m.invalid.begin() + 4);
    std::sort(merged.begin(), merged.end());
    const auto scores = intra_voxel_scores(b.attention, merged);
    double min_dup = 1e9, max_other = -1e9;
    for (const auto& s : scores) {
        if (b.groundtruth->voxel[s.id]) {
            min_dup = std::min(min_dup, s.score);
        } else {
            max_other = std::max(max_other, s.score);
        }
    }
    EXPECT_GT(min_dup, max_other);
}

TEST(Generate, RingRotationBySlotKeepsOccupiedVoxels) {
    for (std::uint64_t seed : {0, 4, 9}) {
        SceneSpec spec = testing::multi_object_spec(seed);
        spec.noise = 0.0;
        const SceneBundle base = generate(spec);
        spec.ring_phase = 2.0 * std::numbers::pi / static_cast<double>(spec.grid.frames);
        const SceneBundle rotated = generate(spec);
        EXPECT_EQ(voxelize_bundle(base, 0.1).voxel_count(), voxelize_bundle(rotated, 0.1).voxel_count());
    }
}

TEST(Generate, DegenerateSpecsAreRejected) {
    SceneSpec spec = testing::single_point_spec(4);
    spec.ring_radius = 0.0;
    EXPECT_THROW(generate(spec), ValidationError);
    spec = testing::single_point_spec(4);
    spec.objects[0].extent.x() = 0.0;
    EXPECT_THROW(generate(spec), ValidationError);
    spec = testing::single_point_spec(4);
    spec.noise = -1.0;
    EXPECT_THROW(generate(spec), ValidationError);
    spec = testing::single_point_spec(4);
    spec.objects.clear();
    EXPECT_THROW(generate(spec), ValidationError);
}

TEST(IntersectBox, SlabHits) {
    const Box box{Eigen::Vector3d::Zero(), Eigen::Vector3d::Constant(2.0)};
    const auto t = intersect_box(Eigen::Vector3d(-5, 0, 0), Eigen::Vector3d(1, 0, 0), box);
    ASSERT_TRUE(t.has_value());
    EXPECT_DOUBLE_EQ(*t, 4.0);
    EXPECT_FALSE(intersect_box(Eigen::Vector3d(-5, 3, 0), Eigen::Vector3d(1, 0, 0), box).has_value());
    EXPECT_FALSE(intersect_box(Eigen::Vector3d(5, 0, 0), Eigen::Vector3d(1, 0, 0), box).has_value());
}

TEST(LookAtCamera, TargetProjectsToImageCenter) {
    const Eigen::Vector3d eye(3, 1, 2), target(0.2, -0.4, 0.1);
    const CameraCompact c = look_at_camera(eye, target, {1.0, 0.8});
    const CameraDecoded d = decode_camera(c, FrameGrid{1, 6, 8, 16});
    const Eigen::Vector3d p = project(target, d);
    EXPECT_NEAR(p.x(), 64.0, 1e-9);
    EXPECT_NEAR(p.y(), 48.0, 1e-9);
    EXPECT_NEAR(p.z(), (eye - target).norm(), 1e-9);
    // World up maps to image up (smaller v).
    EXPECT_LT(project(target + Eigen::Vector3d(0, 0, 0.1), d).y(), 48.0);
}

TEST(RandomObjects, SeededAndWithinBounds) {
    const auto a = random_objects(12, 1.0, 0.2, 0.5, 3);
    const auto b = random_objects(12, 1.0, 0.2, 0.5, 3);
    ASSERT_EQ(a.size(), 12u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].center, b[i].center);
        EXPECT_LE(std::abs(a[i].center.x()), 1.0);
        EXPECT_LE(std::abs(a[i].center.y()), 1.0);
        EXPECT_GE(a[i].extent.minCoeff(), 0.2);
        EXPECT_LE(a[i].extent.maxCoeff(), 0.5);
        EXPECT_DOUBLE_EQ(a[i].center.z(), a[i].extent.z() / 2.0);
    }
}

}  // namespace
}  // namespace geoprune
