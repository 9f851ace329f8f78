// Copyright (C) 2025 The geoprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "geoprune/bundle.hpp"
#include "geoprune/common.hpp"
#include "geoprune/counter_rng.hpp"
#include "geoprune/geometry.hpp"
#include "geoprune/scoring.hpp"

namespace geoprune {

enum class Strategy { geo3d, vcp_only, sdp_only, random_voxel, uniform_voxel, frame_topk };
enum class Relevance { attention, cosine };

inline constexpr std::array<Strategy, 6> kAllStrategies = {Strategy::geo3d,        Strategy::vcp_only,
                                                           Strategy::sdp_only,     Strategy::random_voxel,
                                                           Strategy::uniform_voxel, Strategy::frame_topk};

inline std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::geo3d: return "geo3d";
        case Strategy::vcp_only: return "vcp_only";
        case Strategy::sdp_only: return "sdp_only";
        case Strategy::random_voxel: return "random_voxel";
        case Strategy::uniform_voxel: return "uniform_voxel";
        case Strategy::frame_topk: return "frame_topk";
    }
    return "unknown";
}

inline std::string_view to_string(Relevance r) { return r == Relevance::attention ? "attention" : "cosine"; }

inline Strategy parse_strategy(std::string_view name) {
    for (Strategy s : kAllStrategies) {
        if (to_string(s) == name) return s;
    }
    throw ValidationError("unknown strategy '" + std::string(name) + "'");
}

inline Relevance parse_relevance(std::string_view name) {
    if (name == "attention") return Relevance::attention;
    if (name == "cosine") return Relevance::cosine;
    throw ValidationError("unknown relevance '" + std::string(name) + "'");
}

/// Defaults reproduce the published configuration: 0.1 m voxels, 50% kept per
/// voxel, 8 voxels added per selection round.
struct PruneConfig {
    double alpha = 0.5;
    double delta = 0.1;
    std::size_t k = 8;
    std::size_t budget = 1;
    Strategy strategy = Strategy::geo3d;
    Relevance relevance = Relevance::attention;
    std::uint64_t seed = 0;
    SelfTerm self_term = SelfTerm::exclude;

    void validate(std::size_t token_count) const {
        if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in (0, 1]");
        if (!(delta > 0.0) || !std::isfinite(delta)) throw ValidationError("delta must be > 0");
        if (k < 1) throw ValidationError("k must be >= 1");
        if (budget < 1 || budget > token_count) {
            throw ValidationError("budget must lie in [1, " + std::to_string(token_count) + "], got " +
                                  std::to_string(budget));
        }
    }
};

/// Token budget for a reduction ratio: floor(N * (1 - ratio)). The small
/// epsilon keeps exact products such as 500 * 0.1 from flooring to 49.
inline std::size_t budget_from_ratio(std::size_t token_count, double ratio) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw ValidationError("ratio must lie in [0, 1)");
    const double kept = static_cast<double>(token_count) * (1.0 - ratio);
    const auto budget = static_cast<std::size_t>(std::floor(kept + 1e-9));
    if (budget < 1) throw ValidationError("ratio leaves no tokens to retain");
    return budget;
}

struct VoxelRecord {
    TokenList kept;
    TokenList dropped;
    std::vector<TokenScore> scores;  // ascending token id

    bool operator==(const VoxelRecord&) const = default;
};

struct SdpIteration {
    std::size_t candidates = 0;
    std::vector<VoxelKey> selected;
    std::vector<double> scores;
    std::size_t selected_tokens = 0;  // cumulative over all iterations so far

    bool operator==(const SdpIteration&) const = default;
};

struct PruneCounts {
    std::size_t total = 0;     // N
    std::size_t valid = 0;     // tokens with a voxel
    std::size_t stage1 = 0;    // available after the strategy's first stage (post-VCP for VCP strategies)
    std::size_t retained = 0;  // final

    bool operator==(const PruneCounts&) const = default;
};

struct PruneResult {
    Strategy strategy = Strategy::geo3d;
    TokenList retained;  // ascending
    std::map<VoxelKey, VoxelRecord> per_voxel;
    std::vector<SdpIteration> trace;
    std::vector<VoxelKey> selection_order;
    std::size_t shortfall = 0;  // budget minus available tokens when the budget cannot be met
    PruneCounts counts;

    bool operator==(const PruneResult&) const = default;
};

/// ceil(alpha * n), never below 1. Products within 1e-9 of an integer are
/// treated as that integer.
inline std::size_t vcp_keep_count(std::size_t n, double alpha) {
    const double x = alpha * static_cast<double>(n);
    const double nearest = std::round(x);
    const double kept = std::abs(x - nearest) < 1e-9 ? nearest : std::ceil(x);
    return std::clamp<std::size_t>(static_cast<std::size_t>(kept), 1, n);
}

struct VcpOutput {
    VoxelMap survivors;
    std::map<VoxelKey, VoxelRecord> records;
};

/// Keeps the top ceil(alpha * N_k) tokens of each voxel by averaged incoming
/// attention; ties go to the lower token id.
inline VcpOutput vcp(const AttentionMatrix& attn, const VoxelMap& vmap, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in (0, 1]");
    VcpOutput out;
    out.survivors.invalid = vmap.invalid;
    for (const auto& [key, tokens] : vmap.entries) {
        std::vector<TokenScore> scores = intra_voxel_scores(attn, tokens);
        std::vector<TokenScore> ranked = scores;
        std::sort(ranked.begin(), ranked.end(), [](const TokenScore& a, const TokenScore& b) {
            return a.score != b.score ? a.score > b.score : a.id < b.id;
        });
        const std::size_t keep = vcp_keep_count(tokens.size(), alpha);
        VoxelRecord rec;
        for (std::size_t r = 0; r < ranked.size(); ++r) (r < keep ? rec.kept : rec.dropped).push_back(ranked[r].id);
        std::sort(rec.kept.begin(), rec.kept.end());
        std::sort(rec.dropped.begin(), rec.dropped.end());
        rec.scores = std::move(scores);
        out.survivors.entries.emplace(key, rec.kept);
        out.records.emplace(key, std::move(rec));
    }
    return out;
}

struct SdpOptions {
    SelfTerm self_term = SelfTerm::exclude;
    bool incremental = true;
};

struct SdpOutput {
    std::vector<VoxelKey> order;  // selection order
    std::vector<SdpIteration> trace;
    std::size_t shortfall = 0;
};

/// Iterative top-K voxel selection by received attention, rescoring over the
/// remaining candidates after every round, until the selected voxels hold at
/// least `budget` tokens or no candidates remain.
inline SdpOutput sdp(const AttentionMatrix& attn, const VoxelMap& vmap, std::size_t k, std::size_t budget,
                     SdpOptions options = {}) {
    if (vmap.entries.empty()) throw ValidationError("sdp: voxel map is empty");
    if (k < 1) throw ValidationError("k must be >= 1");
    if (budget < 1) throw ValidationError("budget must be >= 1");

    const FlowTable table(attn, vmap);
    CandidateScores candidates(table, options.self_term);
    SdpOutput out;
    std::size_t selected_tokens = 0;
    std::vector<std::size_t> pool;

    while (selected_tokens < budget && candidates.remaining() > 0) {
        const std::vector<double> full = options.incremental ? std::vector<double>{} : candidates.recompute();
        auto score_of = [&](std::size_t v) { return options.incremental ? candidates.score(v) : full[v]; };

        pool.clear();
        for (std::size_t v = 0; v < table.voxel_count(); ++v) {
            if (candidates.active(v)) pool.push_back(v);
        }
        // Voxel indices follow ascending key order, so index order breaks ties.
        const std::size_t take = std::min(k, pool.size());
        std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take), pool.end(),
                          [&](std::size_t a, std::size_t b) {
                              const double sa = score_of(a), sb = score_of(b);
                              return sa != sb ? sa > sb : a < b;
                          });

        SdpIteration it;
        it.candidates = pool.size();
        for (std::size_t r = 0; r < take; ++r) {
            const std::size_t v = pool[r];
            it.selected.push_back(table.keys()[v]);
            it.scores.push_back(score_of(v));
            selected_tokens += table.voxel_size(v);
            out.order.push_back(table.keys()[v]);
        }
        for (std::size_t r = 0; r < take; ++r) candidates.remove(pool[r]);
        it.selected_tokens = selected_tokens;
        out.trace.push_back(std::move(it));
    }
    if (selected_tokens < budget) out.shortfall = budget - selected_tokens;
    return out;
}

/// Gathers the tokens of the selected voxels in order and trims the overshoot:
/// tokens are dropped from the most recently selected voxel first, lowest score
/// first (higher id first among equal scores).
inline TokenList assemble_budget(const std::vector<VoxelKey>& order, const VoxelMap& vmap,
                                 const std::unordered_map<TokenId, double>& token_scores, std::size_t budget) {
    std::vector<TokenList> chosen;
    std::size_t total = 0;
    for (const auto& key : order) {
        chosen.push_back(vmap.entries.at(key));
        total += chosen.back().size();
    }
    auto score = [&](TokenId id) {
        auto it = token_scores.find(id);
        return it == token_scores.end() ? 0.0 : it->second;
    };
    for (auto v = chosen.rbegin(); v != chosen.rend() && total > budget; ++v) {
        std::sort(v->begin(), v->end(), [&](TokenId a, TokenId b) {
            const double sa = score(a), sb = score(b);
            return sa != sb ? sa > sb : a < b;
        });
        const std::size_t drop = std::min(v->size(), total - budget);
        v->resize(v->size() - drop);
        total -= drop;
    }
    TokenList retained;
    retained.reserve(total);
    for (const auto& tokens : chosen) retained.insert(retained.end(), tokens.begin(), tokens.end());
    std::sort(retained.begin(), retained.end());
    return retained;
}

/// Accumulates voxels from `order` until `budget` tokens are covered.
inline std::vector<VoxelKey> take_until_budget(const std::vector<VoxelKey>& order, const VoxelMap& vmap,
                                               std::size_t budget) {
    std::vector<VoxelKey> out;
    std::size_t total = 0;
    for (const auto& key : order) {
        if (total >= budget) break;
        out.push_back(key);
        total += vmap.entries.at(key).size();
    }
    return out;
}

/// Occupied voxels in a seeded Fisher-Yates order. Step i (from V-1 down to 1)
/// swaps position i with floor(u * (i + 1)), u = CounterRng::uniform(seed,
/// voxel_shuffle, i).
inline std::vector<VoxelKey> random_voxel_order(const VoxelMap& vmap, std::uint64_t seed) {
    std::vector<VoxelKey> keys;
    keys.reserve(vmap.entries.size());
    for (const auto& entry : vmap.entries) keys.push_back(entry.first);
    for (std::size_t i = keys.size(); i-- > 1;) {
        const double u = CounterRng::uniform(seed, CounterRng::voxel_shuffle, i);
        const auto j = std::min(i, static_cast<std::size_t>(u * static_cast<double>(i + 1)));
        std::swap(keys[i], keys[j]);
    }
    return keys;
}

/// Interleaves the low 21 bits of each offset coordinate, x in bit 0.
inline std::uint64_t morton_code(std::uint64_t x, std::uint64_t y, std::uint64_t z) {
    auto spread = [](std::uint64_t v) {
        v &= 0x1FFFFFULL;
        v = (v | (v << 32)) & 0x1F00000000FFFFULL;
        v = (v | (v << 16)) & 0x1F0000FF0000FFULL;
        v = (v | (v << 8)) & 0x100F00F00F00F00FULL;
        v = (v | (v << 4)) & 0x10C30C30C30C30C3ULL;
        v = (v | (v << 2)) & 0x1249249249249249ULL;
        return v;
    };
    return spread(x) | (spread(y) << 1) | (spread(z) << 2);
}

/// Occupied voxels sorted along the Morton curve of their keys (offset so the
/// minimum key on each axis is 0).
inline std::vector<VoxelKey> morton_order(const VoxelMap& vmap) {
    std::vector<VoxelKey> keys;
    for (const auto& entry : vmap.entries) keys.push_back(entry.first);
    if (keys.empty()) return keys;
    VoxelKey lo = keys.front();
    VoxelKey hi = keys.front();
    for (const auto& k : keys) {
        lo = {std::min(lo.ix, k.ix), std::min(lo.iy, k.iy), std::min(lo.iz, k.iz)};
        hi = {std::max(hi.ix, k.ix), std::max(hi.iy, k.iy), std::max(hi.iz, k.iz)};
    }
    constexpr std::int64_t kMaxSpan = (1 << 21) - 1;
    if (hi.ix - lo.ix > kMaxSpan || hi.iy - lo.iy > kMaxSpan || hi.iz - lo.iz > kMaxSpan) {
        throw ValidationError("voxel extent exceeds 2^21 cells per axis");
    }
    auto code = [&](const VoxelKey& k) {
        return morton_code(static_cast<std::uint64_t>(k.ix - lo.ix), static_cast<std::uint64_t>(k.iy - lo.iy),
                           static_cast<std::uint64_t>(k.iz - lo.iz));
    };
    std::sort(keys.begin(), keys.end(), [&](const VoxelKey& a, const VoxelKey& b) { return code(a) < code(b); });
    return keys;
}

/// Strided walk along the Morton order. The stride is ceil(V / needed) where
/// needed = ceil(budget * V / tokens) estimates how many voxels the budget
/// buys; later passes start one slot further along until the budget is met.
inline std::vector<VoxelKey> uniform_voxel_selection(const VoxelMap& vmap, std::size_t budget) {
    const std::vector<VoxelKey> ordered = morton_order(vmap);
    const std::size_t v = ordered.size();
    if (v == 0) return {};
    const std::size_t tokens = vmap.token_count();
    const std::size_t needed = std::clamp<std::size_t>((budget * v + tokens - 1) / tokens, 1, v);
    const std::size_t stride = (v + needed - 1) / needed;
    std::vector<VoxelKey> out;
    std::size_t total = 0;
    for (std::size_t offset = 0; offset < stride && total < budget; ++offset) {
        for (std::size_t i = offset; i < v && total < budget; i += stride) {
            out.push_back(ordered[i]);
            total += vmap.entries.at(ordered[i]).size();
        }
    }
    return out;
}

/// Per-frame top tokens by mean incoming attention over the whole matrix.
/// Each frame gets budget / S slots (remainder to the earliest frames); slots a
/// frame cannot fill go to the best remaining valid tokens of any frame.
inline TokenList frame_topk_selection(const AttentionMatrix& attn, const FrameGrid& grid,
                                      const std::vector<bool>& valid, std::size_t budget) {
    const std::size_t n = grid.token_count();
    if (attn.rows() != n || valid.size() != n) throw ValidationError("frame_topk: shape mismatch");
    std::vector<double> score(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const double* row = attn.row(j);
        for (std::size_t i = 0; i < n; ++i) score[i] += row[i];
    }
    for (double& s : score) s /= static_cast<double>(n);
    auto better = [&](TokenId a, TokenId b) { return score[a] != score[b] ? score[a] > score[b] : a < b; };

    const std::size_t frames = grid.frames;
    const std::size_t per_frame = grid.tokens_per_frame();
    std::vector<bool> taken(n, false);
    std::size_t count = 0;
    for (std::size_t s = 0; s < frames; ++s) {
        const std::size_t quota = budget / frames + (s < budget % frames ? 1 : 0);
        TokenList ids;
        for (std::size_t t = 0; t < per_frame; ++t) {
            const auto id = static_cast<TokenId>(s * per_frame + t);
            if (valid[id]) ids.push_back(id);
        }
        std::sort(ids.begin(), ids.end(), better);
        for (std::size_t r = 0; r < std::min(quota, ids.size()); ++r) {
            taken[ids[r]] = true;
            ++count;
        }
    }
    if (count < budget) {
        TokenList rest;
        for (TokenId id = 0; id < n; ++id) {
            if (valid[id] && !taken[id]) rest.push_back(id);
        }
        std::sort(rest.begin(), rest.end(), better);
        for (std::size_t r = 0; r < rest.size() && count < budget; ++r, ++count) taken[rest[r]] = true;
    }
    TokenList retained;
    for (TokenId id = 0; id < n; ++id) {
        if (taken[id]) retained.push_back(id);
    }
    return retained;
}

namespace detail {

inline std::unordered_map<TokenId, double> score_lookup(const std::map<VoxelKey, VoxelRecord>& records) {
    std::unordered_map<TokenId, double> out;
    for (const auto& [key, rec] : records) {
        for (const auto& s : rec.scores) out.emplace(s.id, s.score);
    }
    return out;
}

inline std::map<VoxelKey, VoxelRecord> unpruned_records(const AttentionMatrix& attn, const VoxelMap& vmap) {
    std::map<VoxelKey, VoxelRecord> out;
    for (const auto& [key, tokens] : vmap.entries) out.emplace(key, VoxelRecord{tokens, {}, intra_voxel_scores(attn, tokens)});
    return out;
}

}  // namespace detail

/// Runs the configured strategy on an already voxelized scene with the given
/// relevance matrix (attention or its similarity substitute).
inline PruneResult prune_voxelized(const AttentionMatrix& relevance, const FrameGrid& grid, const VoxelMap& vmap,
                                   const PruneConfig& cfg) {
    const std::size_t n = grid.token_count();
    cfg.validate(n);
    if (relevance.rows() != n || relevance.cols() != n) {
        throw ValidationError("attention: shape does not match the frame grid");
    }

    PruneResult result;
    result.strategy = cfg.strategy;
    result.counts.total = n;
    result.counts.valid = vmap.token_count();

    auto finish_voxels = [&](const VoxelMap& stage1, std::vector<VoxelKey> order) {
        result.counts.stage1 = stage1.token_count();
        result.selection_order = std::move(order);
        result.retained = assemble_budget(result.selection_order, stage1, detail::score_lookup(result.per_voxel),
                                          cfg.budget);
        result.shortfall = cfg.budget > result.counts.stage1 ? cfg.budget - result.counts.stage1 : 0;
    };

    if (vmap.entries.empty()) {
        result.shortfall = cfg.budget;
        return result;
    }

    switch (cfg.strategy) {
        case Strategy::geo3d: {
            VcpOutput stage1 = vcp(relevance, vmap, cfg.alpha);
            result.per_voxel = std::move(stage1.records);
            SdpOutput sel = sdp(relevance, stage1.survivors, cfg.k, cfg.budget, {cfg.self_term, true});
            result.trace = std::move(sel.trace);
            finish_voxels(stage1.survivors, std::move(sel.order));
            break;
        }
        case Strategy::sdp_only: {
            result.per_voxel = detail::unpruned_records(relevance, vmap);
            SdpOutput sel = sdp(relevance, vmap, cfg.k, cfg.budget, {cfg.self_term, true});
            result.trace = std::move(sel.trace);
            finish_voxels(vmap, std::move(sel.order));
            break;
        }
        case Strategy::vcp_only: {
            VcpOutput stage1 = vcp(relevance, vmap, cfg.alpha);
            result.per_voxel = std::move(stage1.records);
            const auto scores = detail::score_lookup(result.per_voxel);
            TokenList survivors;
            for (const auto& entry : stage1.survivors.entries) {
                survivors.insert(survivors.end(), entry.second.begin(), entry.second.end());
            }
            std::sort(survivors.begin(), survivors.end(), [&](TokenId a, TokenId b) {
                const double sa = scores.at(a), sb = scores.at(b);
                return sa != sb ? sa > sb : a < b;
            });
            result.counts.stage1 = survivors.size();
            survivors.resize(std::min(survivors.size(), cfg.budget));
            std::sort(survivors.begin(), survivors.end());
            result.retained = std::move(survivors);
            result.shortfall = cfg.budget > result.counts.stage1 ? cfg.budget - result.counts.stage1 : 0;
            break;
        }
        case Strategy::random_voxel: {
            VcpOutput stage1 = vcp(relevance, vmap, cfg.alpha);
            result.per_voxel = std::move(stage1.records);
            finish_voxels(stage1.survivors,
                          take_until_budget(random_voxel_order(stage1.survivors, cfg.seed), stage1.survivors,
                                            cfg.budget));
            break;
        }
        case Strategy::uniform_voxel: {
            VcpOutput stage1 = vcp(relevance, vmap, cfg.alpha);
            result.per_voxel = std::move(stage1.records);
            finish_voxels(stage1.survivors, uniform_voxel_selection(stage1.survivors, cfg.budget));
            break;
        }
        case Strategy::frame_topk: {
            std::vector<bool> valid(n, false);
            for (const auto& entry : vmap.entries) {
                for (TokenId id : entry.second) valid[id] = true;
            }
            result.counts.stage1 = result.counts.valid;
            result.retained = frame_topk_selection(relevance, grid, valid, cfg.budget);
            result.shortfall = cfg.budget > result.counts.stage1 ? cfg.budget - result.counts.stage1 : 0;
            break;
        }
    }
    result.counts.retained = result.retained.size();
    return result;
}

/// Relevance matrix selected by the configuration.
inline AttentionMatrix relevance_matrix(const SceneBundle& bundle, Relevance relevance) {
    if (relevance == Relevance::attention) return bundle.attention;
    if (!bundle.features) throw ValidationError("features: cosine relevance requires a feature matrix");
    return cosine_relevance(*bundle.features);
}

/// Full pipeline: geometry, voxelization at cfg.delta, then the configured
/// strategy.
inline PruneResult prune(const SceneBundle& bundle, const PruneConfig& cfg) {
    bundle.validate();
    cfg.validate(bundle.token_count());
    const VoxelMap vmap = voxelize_bundle(bundle, cfg.delta);
    if (cfg.relevance == Relevance::attention) return prune_voxelized(bundle.attention, bundle.grid, vmap, cfg);
    return prune_voxelized(relevance_matrix(bundle, cfg.relevance), bundle.grid, vmap, cfg);
}

}  // namespace geoprune
