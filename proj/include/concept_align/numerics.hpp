// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0
//
// Scalar and vector primitives. Everything is computed in double precision;
// stored embeddings are 32-bit and widened on load.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace concept_align {

using Vec = std::vector<double>;

/// Row-major dense matrix. Rows are exposed as spans so callers never touch
/// raw offsets.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
    Mat(std::size_t rows, std::size_t cols, std::vector<double> values);
    Mat(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    void append_row(std::span<const double> row);

    friend bool operator==(const Mat&, const Mat&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

/// Below this Euclidean norm a vector is treated as zero.
inline constexpr double kZeroNormThreshold = 1e-12;

double dot(std::span<const double> u, std::span<const double> v);
double norm(std::span<const double> v);

/// Unit-norm copy of v. Throws ZeroNorm when ||v|| < 1e-12.
Vec l2_normalize(std::span<const double> v);

/// Cosine similarity clamped to [-1, 1]. Throws ZeroNorm or DimMismatch.
double cosine(std::span<const double> u, std::span<const double> v);

/// log(1 / (1 + exp(-x))) via the branch-stable form.
double log_sigmoid(double x) noexcept;

double sigmoid(double x) noexcept;

/// Max-shifted softmax. Entries equal to -infinity receive probability 0.
Vec softmax(std::span<const double> xs);

/// Arithmetic mean of the rows of m. Throws EmptyInput for zero rows.
Vec mean_pool(const Mat& m);

/// Index of the largest entry, lowest index on exact ties.
std::size_t argmax(std::span<const double> xs);

void require_finite(std::span<const double> xs, const char* what);

}  // namespace concept_align
