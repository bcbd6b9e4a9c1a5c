// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0
//
// Random builders and small utilities shared by the test programs.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "concept_align/embedding.hpp"
#include "concept_align/error.hpp"
#include "concept_align/rng.hpp"

namespace testutil {

using namespace concept_align;

inline Vec random_vec(Rng& rng, std::size_t h) {
    Vec v(h);
    for (auto& x : v) x = rng.normal();
    return v;
}

inline Mat random_mat(Rng& rng, std::size_t rows, std::size_t cols) {
    Mat m(rows, cols);
    for (auto& x : m.values()) x = rng.normal();
    return m;
}

inline ImageEmbedding random_image(Rng& rng, std::size_t r, std::size_t h, std::string id = "img") {
    return {std::move(id), random_vec(rng, h), random_mat(rng, r, h)};
}

inline TextEmbedding random_text(Rng& rng, std::size_t s, std::size_t h, std::string id = "txt") {
    return {std::move(id), random_vec(rng, h), random_mat(rng, s, h)};
}

inline double rel_err(double a, double b) {
    const double scale = std::max({std::fabs(a), std::fabs(b), 1e-300});
    return std::fabs(a - b) / scale;
}

/// Fresh scratch directory under the system temp directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("concept_align_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// True when fn throws an Error carrying the given code.
template <typename Fn>
bool throws_code(Fn&& fn, ErrorCode code) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code() == code;
    }
    return false;
}

}  // namespace testutil
