// Copyright (C) 2025 The geoprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "geoprune/common.hpp"
#include "geoprune/geometry.hpp"

namespace geoprune {

/// Whether a voxel's attention to itself counts toward the attention it
/// receives. Excluded by default.
enum class SelfTerm { exclude, include };

struct TokenScore {
    TokenId id = 0;
    double score = 0.0;

    bool operator==(const TokenScore&) const = default;
};

namespace detail {

inline void require_tokens(std::span<const TokenId> tokens, std::size_t n, const char* what) {
    if (tokens.empty()) throw ValidationError(std::string(what) + " token list is empty");
    for (TokenId id : tokens) {
        if (id >= n) {
            throw ValidationError(std::string(what) + " token id " + std::to_string(id) +
                                  " is outside the attention matrix (N = " + std::to_string(n) + ")");
        }
    }
}

}  // namespace detail

/// Averaged incoming attention of every token inside one voxel: the column
/// mean of the voxel-local block, diagonal included.
inline std::vector<TokenScore> intra_voxel_scores(const AttentionMatrix& attn, std::span<const TokenId> voxel) {
    detail::require_tokens(voxel, attn.rows(), "voxel");
    std::vector<double> sums(voxel.size(), 0.0);
    for (TokenId j : voxel) {
        const double* row = attn.row(j);
        for (std::size_t c = 0; c < voxel.size(); ++c) sums[c] += row[voxel[c]];
    }
    std::vector<TokenScore> out(voxel.size());
    const double count = static_cast<double>(voxel.size());
    for (std::size_t c = 0; c < voxel.size(); ++c) out[c] = {voxel[c], sums[c] / count};
    return out;
}

/// Attention voxel `source` pays to voxel `target`: per source token, the sum
/// over target tokens; averaged over source tokens.
inline double inter_voxel_flow(const AttentionMatrix& attn, std::span<const TokenId> source,
                               std::span<const TokenId> target) {
    detail::require_tokens(source, attn.rows(), "source voxel");
    detail::require_tokens(target, attn.rows(), "target voxel");
    double total = 0.0;
    for (TokenId j : source) {
        const double* row = attn.row(j);
        double row_sum = 0.0;
        for (TokenId i : target) row_sum += row[i];
        total += row_sum;
    }
    return total / static_cast<double>(source.size());
}

/// Precomputed voxel-to-voxel flows over one VoxelMap. Voxels are indexed in
/// ascending key order.
class FlowTable {
public:
    FlowTable(const AttentionMatrix& attn, const VoxelMap& vmap) {
        const std::size_t n = attn.rows();
        m_keys.reserve(vmap.entries.size());
        for (const auto& [key, tokens] : vmap.entries) {
            detail::require_tokens(tokens, n, "voxel");
            m_keys.push_back(key);
            m_sizes.push_back(tokens.size());
        }
        const std::size_t v = m_keys.size();
        m_flows.assign(v * v, 0.0);

        // Row sums per target voxel, accumulated per source voxel.
        std::vector<double> row_sums(v);
        std::size_t k = 0;
        for (const auto& [key, tokens] : vmap.entries) {
            double* flow_row = m_flows.data() + k * v;
            for (TokenId j : tokens) {
                const double* row = attn.row(j);
                std::size_t l = 0;
                for (const auto& entry : vmap.entries) {
                    double s = 0.0;
                    for (TokenId i : entry.second) s += row[i];
                    row_sums[l++] = s;
                }
                for (std::size_t l = 0; l < v; ++l) flow_row[l] += row_sums[l];
            }
            const double count = static_cast<double>(tokens.size());
            for (std::size_t l = 0; l < v; ++l) flow_row[l] /= count;
            ++k;
        }
    }

    std::size_t voxel_count() const { return m_keys.size(); }
    const std::vector<VoxelKey>& keys() const { return m_keys; }
    std::size_t voxel_size(std::size_t k) const { return m_sizes[k]; }

    /// a_{k->l}
    double flow(std::size_t source, std::size_t target) const { return m_flows[source * m_keys.size() + target]; }

    /// a_l over the candidate voxels flagged in `mask`, for every flagged l.
    std::vector<double> received(const std::vector<bool>& mask, SelfTerm self = SelfTerm::exclude) const {
        const std::size_t v = m_keys.size();
        std::vector<double> out(v, 0.0);
        for (std::size_t k = 0; k < v; ++k) {
            if (!mask[k]) continue;
            for (std::size_t l = 0; l < v; ++l) {
                if (!mask[l] || (k == l && self == SelfTerm::exclude)) continue;
                out[l] += flow(k, l);
            }
        }
        return out;
    }

private:
    std::vector<VoxelKey> m_keys;
    std::vector<std::size_t> m_sizes;
    std::vector<double> m_flows;
};

/// Received attention a_l maintained incrementally as candidates are removed.
/// Removing voxel m subtracts a_{m->l} from every remaining l.
class CandidateScores {
public:
    explicit CandidateScores(const FlowTable& table, SelfTerm self = SelfTerm::exclude)
        : m_table(&table), m_self(self), m_active(table.voxel_count(), true), m_remaining(table.voxel_count()) {
        m_scores = table.received(m_active, self);
    }

    bool active(std::size_t k) const { return m_active[k]; }
    std::size_t remaining() const { return m_remaining; }
    double score(std::size_t k) const { return m_scores[k]; }
    const std::vector<bool>& mask() const { return m_active; }

    void remove(std::size_t m) {
        if (!m_active[m]) return;
        m_active[m] = false;
        --m_remaining;
        for (std::size_t l = 0; l < m_active.size(); ++l) {
            if (m_active[l]) m_scores[l] -= m_table->flow(m, l);
        }
    }

    /// Full recomputation over the current candidates.
    std::vector<double> recompute() const { return m_table->received(m_active, m_self); }

private:
    const FlowTable* m_table;
    SelfTerm m_self;
    std::vector<bool> m_active;
    std::vector<double> m_scores;
    std::size_t m_remaining;
};

/// a_l for every candidate voxel l, summing flows from the other candidates.
inline std::map<VoxelKey, double> inter_voxel_scores(const AttentionMatrix& attn, std::span<const VoxelKey> candidates,
                                                     const VoxelMap& vmap, SelfTerm self = SelfTerm::exclude) {
    if (candidates.empty()) throw ValidationError("candidate voxel set is empty");
    VoxelMap sub;
    for (const auto& key : candidates) {
        auto it = vmap.entries.find(key);
        if (it == vmap.entries.end() || it->second.empty()) {
            throw ValidationError("candidate voxel " + key.to_string() + " is not occupied");
        }
        sub.entries.emplace(key, it->second);
    }
    const FlowTable table(attn, sub);
    const std::vector<double> scores = table.received(std::vector<bool>(table.voxel_count(), true), self);
    std::map<VoxelKey, double> out;
    for (std::size_t k = 0; k < table.voxel_count(); ++k) out.emplace(table.keys()[k], scores[k]);
    return out;
}

/// Pairwise cosine similarity between feature rows, negatives clamped to 0.
/// Zero-norm rows are similar to nothing.
inline AttentionMatrix cosine_relevance(const FeatureMatrix& features) {
    if (features.cols() == 0) throw ValidationError("features: dimension d must be >= 1");
    const std::size_t n = features.rows();
    const std::size_t d = features.cols();
    std::vector<double> norms(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const float* row = features.row(r);
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += static_cast<double>(row[c]) * row[c];
        norms[r] = std::sqrt(s);
    }
    AttentionMatrix out(n, n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        if (norms[j] == 0.0) continue;
        const float* a = features.row(j);
        for (std::size_t i = j; i < n; ++i) {
            if (norms[i] == 0.0) continue;
            const float* b = features.row(i);
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += static_cast<double>(a[c]) * b[c];
            const double cosine = std::max(0.0, std::min(1.0, dot / (norms[j] * norms[i])));
            out(j, i) = cosine;
            out(i, j) = cosine;
        }
    }
    return out;
}

/// Straight transcriptions of the score formulas, kept as the oracle for the
/// optimized paths above.
namespace reference {

inline double intra_score(const AttentionMatrix& attn, std::span<const TokenId> voxel, TokenId i) {
    double s = 0.0;
    for (TokenId j : voxel) s += attn(j, i);
    return s / static_cast<double>(voxel.size());
}

inline double flow(const AttentionMatrix& attn, std::span<const TokenId> source, std::span<const TokenId> target) {
    double s = 0.0;
    for (std::size_t j = 0; j < source.size(); ++j) {
        double inner = 0.0;
        for (std::size_t i = 0; i < target.size(); ++i) inner += attn(source[j], target[i]);
        s += inner;
    }
    return s / static_cast<double>(source.size());
}

inline std::map<VoxelKey, double> received(const AttentionMatrix& attn, std::span<const VoxelKey> candidates,
                                           const VoxelMap& vmap, SelfTerm self = SelfTerm::exclude) {
    std::map<VoxelKey, double> out;
    for (const auto& l : candidates) {
        double s = 0.0;
        for (const auto& k : candidates) {
            if (k == l && self == SelfTerm::exclude) continue;
            s += flow(attn, vmap.entries.at(k), vmap.entries.at(l));
        }
        out[l] = s;
    }
    return out;
}

}  // namespace reference

}  // namespace geoprune
