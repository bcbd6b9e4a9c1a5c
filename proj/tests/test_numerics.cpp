// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <doctest.h>

#include "concept_align/numerics.hpp"
#include "helpers.hpp"

using namespace concept_align;
using testutil::throws_code;

TEST_CASE("l2_normalize") {
    const Vec a = l2_normalize(Vec{3, 4});
    CHECK(a[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(a[1] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(l2_normalize(Vec{1, 0, 0}) == Vec{1, 0, 0});
    CHECK(throws_code([] { l2_normalize(Vec{0, 0}); }, ErrorCode::ZeroNorm));
    CHECK(throws_code([] { l2_normalize(Vec{1e-13, 0}); }, ErrorCode::ZeroNorm));
}

TEST_CASE("l2_normalize is idempotent") {
    Rng rng(1);
    for (int t = 0; t < 200; ++t) {
        const Vec v = testutil::random_vec(rng, 1 + t % 9);
        const Vec once = l2_normalize(v);
        const Vec twice = l2_normalize(once);
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::fabs(once[i] - twice[i]) <= 1e-12);
    }
}

TEST_CASE("cosine") {
    CHECK(cosine(Vec{1, 0}, Vec{0, 1}) == 0.0);
    CHECK(cosine(Vec{2, 0}, Vec{5, 0}) == 1.0);
    CHECK(cosine(Vec{1, 1}, Vec{1, 0}) == doctest::Approx(0.7071067811865475).epsilon(1e-15));
    CHECK(throws_code([] { cosine(Vec{1, 0}, Vec{1, 0, 0}); }, ErrorCode::DimMismatch));
    CHECK(throws_code([] { cosine(Vec{0, 0}, Vec{1, 0}); }, ErrorCode::ZeroNorm));
}

TEST_CASE("cosine symmetry, scale invariance and range") {
    Rng rng(2);
    for (int t = 0; t < 200; ++t) {
        const Vec u = testutil::random_vec(rng, 5);
        const Vec v = testutil::random_vec(rng, 5);
        const double c = rng.uniform(0.01, 100.0);
        Vec cu = u;
        for (auto& x : cu) x *= c;
        CHECK(cosine(u, v) == cosine(v, u));
        CHECK(std::fabs(cosine(cu, v) - cosine(u, v)) <= 1e-12);
        CHECK(std::fabs(cosine(u, v)) <= 1.0);
    }
    CHECK(cosine(Vec{1e-7, 1}, Vec{1e-7, 1}) <= 1.0);
}

TEST_CASE("log_sigmoid") {
    CHECK(log_sigmoid(0.0) == doctest::Approx(-0.6931471805599453).epsilon(1e-15));
    CHECK(log_sigmoid(1.0) == doctest::Approx(-0.31326168751822286).epsilon(1e-15));
    CHECK(std::fabs(log_sigmoid(-1000.0) + 1000.0) <= 1e-9);
    CHECK(log_sigmoid(1000.0) <= 0.0);
    CHECK(std::isfinite(log_sigmoid(1000.0)));
    for (double x = -30.0; x <= 30.0; x += 0.37) {
        CHECK(std::fabs(log_sigmoid(x) - log_sigmoid(-x) - x) <= 1e-10);
    }
}

TEST_CASE("sigmoid") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(-1000.0) >= 0.0);
    CHECK(sigmoid(1000.0) == 1.0);
}

TEST_CASE("softmax") {
    const Vec a = softmax(Vec{0, 0});
    CHECK(a[0] == 0.5);
    CHECK(a[1] == 0.5);
    const Vec b = softmax(Vec{1, 0});
    CHECK(b[0] == doctest::Approx(0.7310585786300049).epsilon(1e-15));
    CHECK(b[1] == doctest::Approx(0.2689414213699951).epsilon(1e-15));
    const Vec c = softmax(Vec{1000, 0});
    CHECK(c[0] == 1.0);
    CHECK(c[1] >= 0.0);
    CHECK(c[1] < 1e-300);
    const Vec d = softmax(Vec{-INFINITY, 0.0});
    CHECK(d[0] == 0.0);
    CHECK(d[1] == 1.0);
}

TEST_CASE("softmax shift invariance") {
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        Vec x = testutil::random_vec(rng, 6);
        const double shift = rng.uniform(-50, 50);
        Vec y = x;
        for (auto& v : y) v += shift;
        const Vec px = softmax(x), py = softmax(y);
        double sum = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            CHECK(std::fabs(px[i] - py[i]) <= 1e-12);
            sum += px[i];
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("mean_pool") {
    CHECK(mean_pool(Mat{{1, 0}, {0, 1}}) == Vec{0.5, 0.5});
    CHECK(mean_pool(Mat{{2, 3}}) == Vec{2, 3});
    CHECK(mean_pool(Mat{{1, 1}, {3, 3}, {5, 5}}) == Vec{3, 3});
    CHECK(throws_code([] { mean_pool(Mat(0, 3)); }, ErrorCode::EmptyInput));
}

TEST_CASE("argmax takes the lowest index on ties") {
    CHECK(argmax(Vec{1, 3, 3, 2}) == 1);
    CHECK(argmax(Vec{5}) == 0);
}

TEST_CASE("require_finite") {
    CHECK(throws_code([] { require_finite(Vec{1, NAN}, "x"); }, ErrorCode::NonFinite));
    CHECK(throws_code([] { require_finite(Vec{INFINITY}, "x"); }, ErrorCode::NonFinite));
    require_finite(Vec{1, 2}, "x");
}

TEST_CASE("rng is reproducible and seeds differ") {
    Rng a(7), b(7), c(8);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const double x = a.uniform();
        CHECK(x == b.uniform());
        differs = differs || x != c.uniform();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
    CHECK(differs);
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, 2) != derive_seed(2, 2));
}
