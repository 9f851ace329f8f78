// Copyright (C) 2025 The geoprune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace geoprune {

/// Raised when an input violates a documented precondition. The message names
/// the offending field.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

using TokenId = std::uint32_t;
using TokenList = std::vector<TokenId>;

/// Patch layout of a multi-frame token sequence.
struct FrameGrid {
    std::size_t frames = 1;      // S
    std::size_t rows = 1;        // H_p
    std::size_t cols = 1;        // W_p
    std::size_t patch_size = 1;  // p, pixels

    std::size_t tokens_per_frame() const { return rows * cols; }
    std::size_t token_count() const { return frames * rows * cols; }
    double image_width() const { return static_cast<double>(cols * patch_size); }
    double image_height() const { return static_cast<double>(rows * patch_size); }

    TokenId flat_id(std::size_t frame, std::size_t row, std::size_t col) const {
        return static_cast<TokenId>(frame * tokens_per_frame() + row * cols + col);
    }

    struct Position {
        std::size_t frame, row, col;
    };

    Position position(TokenId id) const {
        const std::size_t per_frame = tokens_per_frame();
        const std::size_t in_frame = id % per_frame;
        return {id / per_frame, in_frame / cols, in_frame % cols};
    }

    void validate() const {
        if (frames < 1) throw ValidationError("grid.frames must be >= 1");
        if (rows < 1) throw ValidationError("grid.rows must be >= 1");
        if (cols < 1) throw ValidationError("grid.cols must be >= 1");
        if (patch_size < 1) throw ValidationError("grid.patch_size must be >= 1");
    }

    bool operator==(const FrameGrid&) const = default;
};

/// Dense row-major matrix. Attention maps use rows for the attending token and
/// columns for the attended one.
template <typename T>
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, T fill = T{})
        : m_rows(rows), m_cols(cols), m_values(rows * cols, fill) {}
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<T> values)
        : m_rows(rows), m_cols(cols), m_values(std::move(values)) {
        if (m_values.size() != rows * cols) {
            throw ValidationError("matrix value count " + std::to_string(m_values.size()) +
                                  " does not match shape " + std::to_string(rows) + "x" +
                                  std::to_string(cols));
        }
    }

    std::size_t rows() const { return m_rows; }
    std::size_t cols() const { return m_cols; }
    bool empty() const { return m_values.empty(); }

    T& operator()(std::size_t r, std::size_t c) { return m_values[r * m_cols + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return m_values[r * m_cols + c]; }

    const T* row(std::size_t r) const { return m_values.data() + r * m_cols; }
    T* row(std::size_t r) { return m_values.data() + r * m_cols; }

    const std::vector<T>& values() const { return m_values; }
    std::vector<T>& values() { return m_values; }

    bool operator==(const DenseMatrix&) const = default;

private:
    std::size_t m_rows = 0;
    std::size_t m_cols = 0;
    std::vector<T> m_values;
};

/// N x N nonnegative token-to-token relevance (attention or a similarity
/// substitute).
using AttentionMatrix = DenseMatrix<double>;
/// N x d per-token feature rows.
using FeatureMatrix = DenseMatrix<float>;

}  // namespace geoprune
