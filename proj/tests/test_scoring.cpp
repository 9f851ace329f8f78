// Copyright (C) 2025 The geoprune Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <gtest/gtest.h>

#include "geoprune/scoring.hpp"
#include "test_support.hpp"

namespace geoprune {
namespace {

using testing::keys_of;
using testing::random_attention;
using testing::random_partition;

AttentionMatrix three_by_three() {
    return AttentionMatrix(3, 3, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9});
}

TEST(IntraVoxelScores, ColumnMeans) {
    const TokenList voxel{0, 1, 2};
    const auto s = intra_voxel_scores(three_by_three(), voxel);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_NEAR(s[0].score, 0.4, 1e-15);
    EXPECT_NEAR(s[1].score, 0.5, 1e-15);
    EXPECT_NEAR(s[2].score, 0.6, 1e-15);
    EXPECT_EQ(s[2].id, 2u);
}

TEST(IntraVoxelScores, SingletonIsDiagonal) {
    const TokenList voxel{1};
    const auto s = intra_voxel_scores(three_by_three(), voxel);
    EXPECT_DOUBLE_EQ(s[0].score, 0.5);
}

TEST(IntraVoxelScores, EmptyOrOutOfRangeIsAnError) {
    EXPECT_THROW(intra_voxel_scores(three_by_three(), TokenList{}), ValidationError);
    EXPECT_THROW(intra_voxel_scores(three_by_three(), TokenList{0, 3}), ValidationError);
}

TEST(IntraVoxelScores, MatchesDoubleLoop) {
    std::mt19937_64 rng(1);
    const AttentionMatrix a = random_attention(40, rng);
    const TokenList voxel{3, 7, 11, 19, 30, 38};
    const auto s = intra_voxel_scores(a, voxel);
    for (std::size_t c = 0; c < voxel.size(); ++c) {
        double sum = 0.0;
        for (std::size_t r = 0; r < voxel.size(); ++r) sum += a(voxel[r], voxel[c]);
        EXPECT_NEAR(s[c].score, sum / 6.0, 1e-12);
    }
}

TEST(InterVoxelFlow, AveragesOverSources) {
    AttentionMatrix a(6, 6, 0.0);
    a(0, 2) = 0.2;
    a(1, 2) = 0.4;
    EXPECT_NEAR(inter_voxel_flow(a, TokenList{0, 1}, TokenList{2}), 0.3, 1e-15);
}

TEST(InterVoxelFlow, SumsOverTargets) {
    AttentionMatrix a(6, 6, 0.0);
    a(5, 1) = 0.1;
    a(5, 3) = 0.3;
    EXPECT_NEAR(inter_voxel_flow(a, TokenList{5}, TokenList{1, 3}), 0.4, 1e-15);
}

TEST(InterVoxelFlow, MatchesNaiveDoubleLoop) {
    std::mt19937_64 rng(2);
    const AttentionMatrix a = random_attention(50, rng);
    const TokenList src{1, 4, 9, 16, 25}, dst{2, 3, 5, 7, 11, 13, 17};
    double sum = 0.0;
    for (TokenId j : src)
        for (TokenId i : dst) sum += a(j, i);
    EXPECT_NEAR(inter_voxel_flow(a, src, dst), sum / 5.0, 1e-12);
    EXPECT_THROW(inter_voxel_flow(a, TokenList{}, dst), ValidationError);
}

TEST(InterVoxelScores, TwoVoxelsReceiveEachOthersFlow) {
    AttentionMatrix a(2, 2, 0.0);
    a(0, 1) = 0.3;  // voxel k = {0} attends to voxel l = {1}
    a(1, 0) = 0.7;
    a(0, 0) = a(1, 1) = 5.0;  // self terms must not count
    VoxelMap m;
    m.entries[{0, 0, 0}] = {0};
    m.entries[{1, 0, 0}] = {1};
    const auto keys = keys_of(m);
    const auto s = inter_voxel_scores(a, keys, m);
    EXPECT_NEAR(s.at({1, 0, 0}), 0.3, 1e-15);
    EXPECT_NEAR(s.at({0, 0, 0}), 0.7, 1e-15);
    const auto with_self = inter_voxel_scores(a, keys, m, SelfTerm::include);
    EXPECT_NEAR(with_self.at({1, 0, 0}), 5.3, 1e-15);
}

TEST(InterVoxelScores, SingleCandidateScoresZero) {
    std::mt19937_64 rng(4);
    const AttentionMatrix a = random_attention(4, rng);
    VoxelMap m;
    m.entries[{2, 2, 2}] = {0, 1, 2, 3};
    const std::vector<VoxelKey> keys{{2, 2, 2}};
    EXPECT_EQ(inter_voxel_scores(a, keys, m).at({2, 2, 2}), 0.0);
}

TEST(InterVoxelScores, RejectsEmptyOrUnknownCandidates) {
    std::mt19937_64 rng(4);
    const AttentionMatrix a = random_attention(4, rng);
    VoxelMap m;
    m.entries[{0, 0, 0}] = {0, 1};
    EXPECT_THROW(inter_voxel_scores(a, std::vector<VoxelKey>{}, m), ValidationError);
    EXPECT_THROW(inter_voxel_scores(a, std::vector<VoxelKey>{{9, 9, 9}}, m), ValidationError);
}

// Triple loop straight from the formula, independent of FlowTable.
std::map<VoxelKey, double> naive_received(const AttentionMatrix& a, const VoxelMap& m, const std::vector<VoxelKey>& cand) {
    std::map<VoxelKey, double> out;
    for (const auto& l : cand) {
        double total = 0.0;
        for (const auto& k : cand) {
            if (k == l) continue;
            const auto& tk = m.entries.at(k);
            const auto& tl = m.entries.at(l);
            double s = 0.0;
            for (TokenId j : tk)
                for (TokenId i : tl) s += a(j, i);
            total += s / static_cast<double>(tk.size());
        }
        out[l] = total;
    }
    return out;
}

TEST(InterVoxelScores, FiveVoxelsMatchTripleLoop) {
    std::mt19937_64 rng(9);
    const AttentionMatrix a = random_attention(30, rng);
    const VoxelMap m = random_partition(30, 5, rng);
    const auto keys = keys_of(m);
    const auto got = inter_voxel_scores(a, keys, m);
    const auto want = naive_received(a, m, keys);
    for (const auto& [k, v] : want) EXPECT_NEAR(got.at(k), v, 1e-12);
    const auto ref = reference::received(a, keys, m);
    for (const auto& [k, v] : want) EXPECT_NEAR(ref.at(k), v, 1e-12);
}

TEST(FlowTable, IncrementalRemovalEqualsRecompute) {
    std::mt19937_64 rng(12);
    const AttentionMatrix a = random_attention(120, rng);
    const VoxelMap m = random_partition(120, 17, rng, 0.1);
    const FlowTable table(a, m);
    CandidateScores scores(table);
    std::uniform_int_distribution<std::size_t> pick(0, table.voxel_count() - 1);
    while (scores.remaining() > 1) {
        const std::size_t victim = pick(rng);
        if (!scores.active(victim)) continue;
        std::vector<double> before(table.voxel_count());
        for (std::size_t l = 0; l < table.voxel_count(); ++l) before[l] = scores.score(l);
        scores.remove(victim);
        const auto full = scores.recompute();
        for (std::size_t l = 0; l < table.voxel_count(); ++l) {
            if (!scores.active(l)) continue;
            // Removing m changes a_l by exactly -a_{m->l}.
            EXPECT_NEAR(scores.score(l), before[l] - table.flow(victim, l), 1e-12);
            EXPECT_NEAR(scores.score(l), full[l], 1e-9);
        }
    }
}

TEST(ScoringProperties, PositiveScalingIsLinear) {
    std::mt19937_64 rng(13);
    AttentionMatrix a = random_attention(60, rng);
    const VoxelMap m = random_partition(60, 8, rng);
    AttentionMatrix scaled = a;
    for (double& v : scaled.values()) v *= 2.5;
    const auto keys = keys_of(m);
    const auto s1 = inter_voxel_scores(a, keys, m);
    const auto s2 = inter_voxel_scores(scaled, keys, m);
    for (const auto& [k, v] : s1) EXPECT_NEAR(s2.at(k), 2.5 * v, 1e-12 * std::max(1.0, v));
    const auto& t = m.entries.begin()->second;
    const auto i1 = intra_voxel_scores(a, t);
    const auto i2 = intra_voxel_scores(scaled, t);
    for (std::size_t c = 0; c < t.size(); ++c) EXPECT_NEAR(i2[c].score, 2.5 * i1[c].score, 1e-12);
}

TEST(ScoringProperties, SymmetricIdenticalBlocksScoreEqually) {
    // Two 3-token voxels whose internal and cross blocks are identical.
    AttentionMatrix a(6, 6, 0.2);
    for (int i = 0; i < 6; ++i) a(i, i) = 0.9;
    VoxelMap m;
    m.entries[{0, 0, 0}] = {0, 1, 2};
    m.entries[{0, 0, 1}] = {3, 4, 5};
    const auto s = inter_voxel_scores(a, keys_of(m), m);
    EXPECT_DOUBLE_EQ(s.at({0, 0, 0}), s.at({0, 0, 1}));
    const auto i1 = intra_voxel_scores(a, m.entries.at({0, 0, 0}));
    const auto i2 = intra_voxel_scores(a, m.entries.at({0, 0, 1}));
    for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(i1[c].score, i2[c].score);
}

TEST(CosineRelevance, ClampedCosines) {
    FeatureMatrix f(4, 2, std::vector<float>{1, 0, 1, 0, 0, 1, -1, 0});
    const AttentionMatrix m = cosine_relevance(f);
    EXPECT_DOUBLE_EQ(m(0, 1), 1.0);  // identical
    EXPECT_DOUBLE_EQ(m(0, 2), 0.0);  // orthogonal
    EXPECT_DOUBLE_EQ(m(0, 3), 0.0);  // anti-parallel, clamped
    EXPECT_DOUBLE_EQ(m(2, 2), 1.0);
}

TEST(CosineRelevance, ZeroRowsAndZeroDimension) {
    FeatureMatrix f(2, 2, std::vector<float>{0, 0, 1, 1});
    const AttentionMatrix m = cosine_relevance(f);
    EXPECT_EQ(m(0, 0), 0.0);
    EXPECT_EQ(m(0, 1), 0.0);
    EXPECT_THROW(cosine_relevance(FeatureMatrix(3, 0)), ValidationError);
}

}  // namespace
}  // namespace geoprune
