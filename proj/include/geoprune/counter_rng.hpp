// Copyright (C) 2025 The geoprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace geoprune {

/// Stateless counter-based uniform generator. Every draw is a pure function of
/// (seed, stream, counter), so any implementation of the bundle format can
/// reproduce generated scenes bit for bit:
///
///   mix(x)    = splitmix64 finalizer of x + 0x9E3779B97F4A7C15
///   key       = mix(mix(seed ^ mix(stream)) ^ counter)
///   uniform   = (key >> 11) * 2^-53            in [0, 1)
class CounterRng {
public:
    enum Stream : std::uint64_t {
        attention_noise = 1,
        features = 2,
        voxel_shuffle = 3,
        feature_noise = 4,
    };

    static constexpr std::uint64_t mix(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    static constexpr std::uint64_t bits(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
        return mix(mix(seed ^ mix(stream)) ^ counter);
    }

    static constexpr double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
        return static_cast<double>(bits(seed, stream, counter) >> 11) * 0x1.0p-53;
    }
};

}  // namespace geoprune
