// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0

#include "concept_align/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "concept_align/error.hpp"

namespace concept_align {

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
        throw Error(ErrorCode::DimMismatch, "matrix value count does not match shape");
    }
}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows) {
    for (const auto& r : rows) {
        append_row(std::span<const double>(r.begin(), r.size()));
    }
}

void Mat::append_row(std::span<const double> row) {
    if (rows_ == 0 && values_.empty()) {
        cols_ = row.size();
    } else if (row.size() != cols_) {
        throw Error(ErrorCode::DimMismatch, "appended row has " + std::to_string(row.size()) +
                                                " columns, expected " + std::to_string(cols_));
    }
    values_.insert(values_.end(), row.begin(), row.end());
    ++rows_;
}

double dot(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw Error(ErrorCode::DimMismatch, "dot: dimension " + std::to_string(u.size()) +
                                                " vs " + std::to_string(v.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        acc += u[i] * v[i];
    }
    return acc;
}

double norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) {
        acc += x * x;
    }
    return std::sqrt(acc);
}

Vec l2_normalize(std::span<const double> v) {
    const double n = norm(v);
    if (!(n >= kZeroNormThreshold)) {
        throw Error(ErrorCode::ZeroNorm, "cannot normalize a vector with norm below 1e-12");
    }
    Vec out(v.begin(), v.end());
    for (double& x : out) {
        x /= n;
    }
    return out;
}

double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw Error(ErrorCode::DimMismatch, "cosine: dimension " + std::to_string(u.size()) +
                                                " vs " + std::to_string(v.size()));
    }
    const double nu = norm(u);
    const double nv = norm(v);
    if (!(nu >= kZeroNormThreshold) || !(nv >= kZeroNormThreshold)) {
        throw Error(ErrorCode::ZeroNorm, "cosine of a zero vector");
    }
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

double log_sigmoid(double x) noexcept {
    if (x >= 0.0) {
        return -std::log1p(std::exp(-x));
    }
    return x - std::log1p(std::exp(x));
}

double sigmoid(double x) noexcept {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Vec softmax(std::span<const double> xs) {
    if (xs.empty()) {
        throw Error(ErrorCode::EmptyInput, "softmax of an empty vector");
    }
    const double hi = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(hi)) {
        throw Error(ErrorCode::NonFinite, "softmax needs at least one finite logit");
    }
    Vec out(xs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out[i] = std::exp(xs[i] - hi);
        total += out[i];
    }
    for (double& p : out) {
        p /= total;
    }
    return out;
}

Vec mean_pool(const Mat& m) {
    if (m.rows() == 0) {
        throw Error(ErrorCode::EmptyInput, "mean_pool over zero rows");
    }
    Vec out(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) {
            out[c] += row[c];
        }
    }
    const double inv = 1.0 / static_cast<double>(m.rows());
    for (double& x : out) {
        x *= inv;
    }
    return out;
}

std::size_t argmax(std::span<const double> xs) {
    if (xs.empty()) {
        throw Error(ErrorCode::EmptyInput, "argmax of an empty vector");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (xs[i] > xs[best]) {
            best = i;
        }
    }
    return best;
}

void require_finite(std::span<const double> xs, const char* what) {
    for (double x : xs) {
        if (!std::isfinite(x)) {
            throw Error(ErrorCode::NonFinite, std::string(what) + " contains a non-finite value");
        }
    }
}

}  // namespace concept_align
