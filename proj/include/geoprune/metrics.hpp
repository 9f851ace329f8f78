// Copyright (C) 2025 The geoprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <string>
#include <unordered_set>
#include <vector>

#include "geoprune/geometry.hpp"
#include "geoprune/pruner.hpp"

namespace geoprune {

struct MetricsReport {
    std::string strategy;
    double coverage = 0.0;    // covered / occupied voxels before pruning
    double redundancy = 0.0;  // retained tokens per covered voxel
    double budget_ratio = 0.0;
    std::size_t occupied_voxels = 0;
    std::size_t covered_voxels = 0;
    std::size_t retained = 0;
    std::vector<std::size_t> per_frame;
};

inline MetricsReport evaluate(const VoxelMap& before, const PruneResult& result, const FrameGrid& grid) {
    const std::size_t n = grid.token_count();
    std::vector<bool> retained(n, false);
    for (TokenId id : result.retained) {
        if (id >= n) throw ValidationError("result: retained id " + std::to_string(id) + " is outside the grid");
        retained[id] = true;
    }
    for (TokenId id : before.invalid) {
        if (id < n && retained[id]) {
            throw ValidationError("result: retained id " + std::to_string(id) + " has no voxel in the scene");
        }
    }

    MetricsReport report;
    report.strategy = std::string(to_string(result.strategy));
    report.occupied_voxels = before.voxel_count();
    std::size_t in_voxels = 0;
    for (const auto& [key, tokens] : before.entries) {
        const auto hits = static_cast<std::size_t>(
            std::count_if(tokens.begin(), tokens.end(), [&](TokenId id) { return id < n && retained[id]; }));
        in_voxels += hits;
        if (hits > 0) ++report.covered_voxels;
    }
    if (in_voxels != result.retained.size()) {
        throw ValidationError("result: retained ids are not all tokens of the voxel map");
    }
    report.retained = result.retained.size();
    report.coverage = report.occupied_voxels == 0
                          ? 0.0
                          : static_cast<double>(report.covered_voxels) / static_cast<double>(report.occupied_voxels);
    report.redundancy = report.covered_voxels == 0
                            ? 0.0
                            : static_cast<double>(report.retained) / static_cast<double>(report.covered_voxels);
    report.budget_ratio = n == 0 ? 0.0 : static_cast<double>(report.retained) / static_cast<double>(n);
    report.per_frame.assign(grid.frames, 0);
    for (TokenId id : result.retained) ++report.per_frame[grid.position(id).frame];
    return report;
}

}  // namespace geoprune
