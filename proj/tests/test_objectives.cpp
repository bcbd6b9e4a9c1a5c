// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "concept_align/objectives.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace concept_align;
using testutil::rel_err;
using testutil::throws_code;

namespace {

AlignmentParams unit_params() {
    AlignmentParams p;
    p.t_g = 1.0;
    p.b_g = 0.0;
    p.t_l = 1.0;
    p.b_l = 0.0;
    return p;
}

Triplet make_triplet(Vec x, Vec y, Mat regions, Mat tokens, std::vector<ConceptSpan> spans) {
    return {{"i", std::move(x), std::move(regions)}, {"t", std::move(y), std::move(tokens)}, std::move(spans)};
}

AlignmentParams random_params(Rng& rng) {
    AlignmentParams p;
    p.t_g = rng.uniform(0.5, 12.0);
    p.b_g = rng.uniform(-5.0, 5.0);
    p.t_l = rng.uniform(0.5, 12.0);
    p.b_l = rng.uniform(-5.0, 5.0);
    p.alpha = rng.uniform(0.0, 2.0);
    return p;
}

/// Pointers to every differentiable coordinate, with the matching analytic value.
struct Coordinate {
    double* x;
    double analytic;
};

std::vector<Coordinate> coordinates(TripletBatch& batch, AlignmentParams& p, const GradientSet& g) {
    std::vector<Coordinate> out;
    for (std::size_t m = 0; m < batch.size(); ++m) {
        auto& t = batch[m];
        const auto& gt = g.triplets[m];
        for (std::size_t i = 0; i < t.image.cls.size(); ++i) out.push_back({&t.image.cls[i], gt.image_cls[i]});
        for (std::size_t i = 0; i < t.image.regions.values().size(); ++i) {
            out.push_back({&t.image.regions.values()[i], gt.regions.values()[i]});
        }
        for (std::size_t i = 0; i < t.text.cls.size(); ++i) out.push_back({&t.text.cls[i], gt.text_cls[i]});
        for (std::size_t i = 0; i < t.text.tokens.values().size(); ++i) {
            out.push_back({&t.text.tokens.values()[i], gt.tokens.values()[i]});
        }
    }
    out.push_back({&p.t_g, g.t_g});
    out.push_back({&p.b_g, g.b_g});
    out.push_back({&p.t_l, g.t_l});
    out.push_back({&p.b_l, g.b_l});
    return out;
}

/// Worst |a - n| / max(|a|, |n|) among coordinates whose absolute error exceeds 1e-7.
double oracle_gradient_error(TripletBatch batch, AlignmentParams p, double step) {
    const auto analytic = total_loss_grad(batch, p);
    double worst = 0.0;
    for (const auto& c : coordinates(batch, p, analytic.grad)) {
        const double numeric = static_cast<double>(
            oracle::central_difference([&] { return oracle::total(batch, p); }, *c.x, step));
        const double abs_err = std::fabs(numeric - c.analytic);
        if (abs_err > 1e-7) worst = std::max(worst, abs_err / std::max(std::fabs(numeric), std::fabs(c.analytic)));
    }
    return worst;
}

TripletBatch untied_batch(std::size_t b, std::size_t r, std::size_t s, std::size_t w, std::size_t h,
                          std::uint64_t seed, const AlignmentParams& p) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        auto batch = random_batch(b, r, s, w, h, derive_seed(seed, attempt));
        if (min_argmax_gap(batch, p) > 1e-4) return batch;
    }
}

}  // namespace

TEST_CASE("it_align closed forms") {
    AlignmentParams p = unit_params();
    TripletBatch one{make_triplet({1, 0}, {1, 0}, Mat{{1, 0}}, Mat{{1, 0}}, {})};
    CHECK(it_align_loss(one, p) == doctest::Approx(0.31326168751822286).epsilon(1e-15));

    TripletBatch two{make_triplet({1, 0}, {1, 0}, Mat{{1, 0}}, Mat{{1, 0}}, {}),
                     make_triplet({0, 1}, {0, 1}, Mat{{1, 0}}, Mat{{1, 0}}, {})};
    CHECK(it_align_loss(two, p) == doctest::Approx(1.006408868).epsilon(1e-9));
}

TEST_CASE("it_align matches the literal oracle, seed 7") {
    AlignmentParams p;
    const auto batch = random_batch(2, 3, 3, 2, 4, 7);
    CHECK(rel_err(it_align_loss(batch, p), static_cast<double>(oracle::it_align(batch, p))) <= 1e-12);
}

TEST_CASE("concept_embedding") {
    TextEmbedding t{"t", {1, 1}, Mat{{1, 0}, {0, 1}}};
    CHECK(concept_embedding(t, {"C", {1, 2}}) == Vec{0.5, 0.5});
    CHECK(concept_embedding(t, {"C", {2}}) == Vec{0, 1});
    TextEmbedding one{"t", {1, 1}, Mat{{1, 0}}};
    CHECK(throws_code([&] { concept_embedding(one, {"C", {2}}); }, ErrorCode::SpanOutOfRange));
}

TEST_CASE("region_concept_matrix closed forms") {
    AlignmentParams p = unit_params();
    ImageEmbedding image{"i", {1, 0}, Mat{{1, 0}, {0, 1}}};
    const Vec g{1, 0};
    const Mat a = region_concept_matrix(image, std::span<const Vec>(&g, 1), p);
    CHECK(a(0, 0) == doctest::Approx(-0.3132616875).epsilon(1e-10));
    CHECK(a(1, 0) == doctest::Approx(-0.6931471806).epsilon(1e-10));
    ImageEmbedding opposite{"i", {1, 0}, Mat{{-1, 0}}};
    CHECK(region_concept_matrix(opposite, std::span<const Vec>(&g, 1), p)(0, 0) ==
          doctest::Approx(-1.3132616875).epsilon(1e-10));
}

TEST_CASE("region_concept_matrix matches the entry-wise oracle, seed 11") {
    Rng rng(11);
    AlignmentParams p = random_params(rng);
    const auto image = testutil::random_image(rng, 3, 5);
    const std::vector<Vec> g{testutil::random_vec(rng, 5), testutil::random_vec(rng, 5)};
    const Mat a = region_concept_matrix(image, g, p);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            const long double want =
                oracle::log_sigmoid(p.t_l * oracle::cosine(oracle::widen(image.regions.row(i)), oracle::widen(g[j])) - p.b_l);
            CHECK(rel_err(a(i, j), static_cast<double>(want)) <= 1e-12);
        }
    }
}

TEST_CASE("pair_similarity_score") {
    CHECK(pair_similarity_score(Mat{{-0.3}, {-0.7}}) == -0.3);
    CHECK(pair_similarity_score(Mat{{-0.2, -0.8}, {-0.6, -0.4}}) == doctest::Approx(-0.3).epsilon(1e-15));
    Rng rng(12);
    const Mat a = testutil::random_mat(rng, 5, 3);
    double want = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
        double best = a(0, j);
        for (std::size_t i = 1; i < 5; ++i) best = std::max(best, a(i, j));
        want += best;
    }
    CHECK(rel_err(pair_similarity_score(a), want / 3.0) <= 1e-15);
}

TEST_CASE("rc_align closed forms") {
    AlignmentParams p = unit_params();
    TripletBatch one{make_triplet({1, 0}, {1, 0}, Mat{{1, 0}}, Mat{{1, 0}}, {{"C", {1}}})};
    CHECK(rc_align_loss(one, p) == doctest::Approx(0.3132616875).epsilon(1e-10));

    // Every (m, n) pair scores the same S, so positives and negatives cancel.
    TripletBatch two{make_triplet({1, 0}, {1, 0}, Mat{{1, 0}}, Mat{{1, 0}}, {{"C", {1}}}),
                     make_triplet({0, 1}, {0, 1}, Mat{{1, 0}}, Mat{{1, 0}}, {{"C", {1}}})};
    CHECK(std::fabs(rc_align_loss(two, p)) <= 1e-15);
}

TEST_CASE("rc_align matches the literal double-sum oracle, seed 3") {
    AlignmentParams p;
    const auto batch = random_batch(3, 4, 5, 3, 6, 3);
    CHECK(rel_err(rc_align_loss(batch, p), static_cast<double>(oracle::rc_align(batch, p))) <= 1e-12);
}

TEST_CASE("total_loss composition") {
    Rng rng(4);
    auto batch = random_batch(3, 4, 4, 2, 5, 4);
    AlignmentParams p = random_params(rng);
    p.alpha = 0.0;
    auto l = total_loss(batch, p);
    CHECK(l.total == l.it_align);
    p.alpha = 2.0;
    l = total_loss(batch, p);
    CHECK(std::fabs((l.total - l.it_align) - 2.0 * l.rc_align) <= 1e-12 * std::max(1.0, std::fabs(l.total)));
    CHECK(l.alpha == 2.0);
    p.alpha = 0.5;
    l = total_loss(batch, p);
    CHECK(l.total == l.it_align + 0.5 * l.rc_align);
}

TEST_CASE("losses match oracles on 100 random batches") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(derive_seed(seed, 99));
        const AlignmentParams p = random_params(rng);
        const auto batch = random_batch(1 + seed % 4, 1 + seed % 6, 1 + (seed / 2) % 6, 1 + seed % 3, 1 + seed % 8, seed);
        const auto l = total_loss(batch, p);
        CHECK(rel_err(l.it_align, static_cast<double>(oracle::it_align(batch, p))) <= 1e-12);
        const double rc = static_cast<double>(oracle::rc_align(batch, p));
        CHECK(std::fabs(l.rc_align - rc) <= 1e-12 * std::max(std::fabs(rc), 1e-3));
        CHECK(rel_err(l.total, static_cast<double>(oracle::total(batch, p))) <= 1e-12);
    }
}

TEST_CASE("loss invariances") {
    Rng rng(5);
    const AlignmentParams p = random_params(rng);
    const auto batch = random_batch(4, 5, 5, 3, 6, 5);
    const auto base = total_loss(batch, p);

    auto scaled = batch;
    for (auto& x : scaled[1].image.cls) x *= 3.7;
    for (auto& x : scaled[2].text.cls) x *= 0.01;
    CHECK(std::fabs(it_align_loss(scaled, p) - base.it_align) <= 1e-10);

    auto region_scaled = batch;
    for (auto& x : region_scaled[0].image.regions.row(2)) x *= 42.0;
    CHECK(std::fabs(rc_align_loss(region_scaled, p) - base.rc_align) <= 1e-10);

    TripletBatch permuted{batch[2], batch[0], batch[3], batch[1]};
    const auto lp = total_loss(permuted, p);
    CHECK(std::fabs(lp.it_align - base.it_align) <= 1e-12);
    CHECK(std::fabs(lp.rc_align - base.rc_align) <= 1e-12);
    CHECK(std::fabs(lp.total - base.total) <= 1e-12);
}

TEST_CASE("A entries are negative and S is bounded") {
    Rng rng(6);
    for (int t = 0; t < 50; ++t) {
        const AlignmentParams p = random_params(rng);
        const auto image = testutil::random_image(rng, 4, 3);
        const std::vector<Vec> g{testutil::random_vec(rng, 3), testutil::random_vec(rng, 3)};
        const Mat a = region_concept_matrix(image, g, p);
        for (double v : a.values()) CHECK(v < 0.0);
        const double s = pair_similarity_score(a);
        CHECK(s >= log_sigmoid(-p.t_l - p.b_l) - 1e-15);
        CHECK(s <= log_sigmoid(p.t_l - p.b_l) + 1e-15);
    }
}

TEST_CASE("gradient with respect to alpha equals rc_align") {
    const auto batch = random_batch(3, 4, 5, 2, 6, 8);
    const auto lg = total_loss_grad(batch, AlignmentParams{});
    CHECK(lg.grad.alpha == lg.loss.rc_align);
}

TEST_CASE("gradient matches the oracle central difference, seed 42") {
    AlignmentParams p;
    const auto batch = untied_batch(3, 4, 5, 2, 6, 42, p);
    CHECK(oracle_gradient_error(batch, p, 1e-5) < 1e-4);
}

TEST_CASE("gradient at the symmetric orthogonal batch agrees with finite differences") {
    AlignmentParams p = unit_params();
    TripletBatch two{make_triplet({1, 0}, {1, 0}, Mat{{1, 0}, {0.2, 1}}, Mat{{1, 0}}, {{"C", {1}}}),
                     make_triplet({0, 1}, {0, 1}, Mat{{0.3, 1}, {1, 0.1}}, Mat{{0, 1}}, {{"C", {1}}})};
    CHECK(oracle_gradient_error(two, p, 1e-5) < 1e-4);
}

TEST_CASE("gradient matches the oracle on random configurations") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(derive_seed(seed, 5));
        const AlignmentParams p = random_params(rng);
        const auto batch = untied_batch(1 + seed % 4, 1 + seed % 6, 1 + (seed / 3) % 6, 1 + seed % 3, 1 + seed % 8, seed, p);
        CHECK(oracle_gradient_error(batch, p, 1e-5) < 1e-4);
    }
}

TEST_CASE("library gradient check agrees") {
    AlignmentParams p;
    const auto batch = untied_batch(3, 4, 5, 3, 6, 1, p);
    const auto report = gradient_check(batch, p, 1e-5);
    CHECK(report.max_error < 1e-4);
    CHECK(report.components == 3 * (6 + 4 * 6 + 6 + 5 * 6) + 4);
}

TEST_CASE("min_argmax_gap is infinite with single regions") {
    const auto batch = random_batch(2, 1, 3, 2, 4, 9);
    CHECK(std::isinf(min_argmax_gap(batch, AlignmentParams{})));
}

TEST_CASE("invalid parameters are rejected") {
    AlignmentParams p;
    p.t_g = 0.0;
    CHECK(throws_code([&] { validate_params(p); }, ErrorCode::InvalidArgument));
    p = {};
    p.beta = 1.5;
    CHECK(throws_code([&] { validate_params(p); }, ErrorCode::InvalidArgument));
    p = {};
    p.alpha = -1.0;
    CHECK(throws_code([&] { validate_params(p); }, ErrorCode::InvalidArgument));
}
