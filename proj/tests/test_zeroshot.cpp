// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "concept_align/zeroshot.hpp"
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

/// Regions in the plane whose cosines with [1, 0] are the given values.
ImageEmbedding image_with_cosines(const std::vector<double>& cosines) {
    ImageEmbedding image{"i", {1, 0}, Mat(0, 2)};
    for (double c : cosines) image.regions.append_row(Vec{c, std::sqrt(1.0 - c * c)});
    return image;
}

std::vector<ClassSpec> random_classes(Rng& rng, std::size_t n, std::size_t h, bool with_concepts) {
    std::vector<ClassSpec> out;
    for (std::size_t c = 0; c < n; ++c) {
        ClassSpec spec{"c" + std::to_string(c), testutil::random_text(rng, 2, h), {}};
        if (with_concepts) {
            for (std::size_t j = 0; j < 1 + rng.below(3); ++j) spec.concept_embs.push_back(testutil::random_vec(rng, h));
        }
        out.push_back(std::move(spec));
    }
    return out;
}

AlignmentParams random_params(Rng& rng, std::size_t r) {
    AlignmentParams p;
    p.t_g = rng.uniform(0.5, 20.0);
    p.b_g = rng.uniform(-3.0, 3.0);
    p.t_l = rng.uniform(0.5, 20.0);
    p.b_l = rng.uniform(-3.0, 3.0);
    p.beta = rng.uniform();
    p.k = 1 + rng.below(r);
    return p;
}

}  // namespace

TEST_CASE("global_score closed forms") {
    AlignmentParams p;
    p.t_g = 2.0;
    p.b_g = -1.0;
    ImageEmbedding image{"i", {3, 4}, Mat{{1, 0}}};
    ClassSpec cls{"c", {"t", {1, 0}, Mat{{1, 0}}}, {}};
    CHECK(global_score(image, cls, p) == doctest::Approx(0.2).epsilon(1e-15));
    p = unit_params();
    ClassSpec same{"c", {"t", {0.6, 0.8}, Mat{{1, 0}}}, {}};
    CHECK(global_score(image, same, p) == doctest::Approx(1.0).epsilon(1e-15));
    p.t_g = 5.0;
    p.b_g = 0.5;
    ClassSpec ortho{"c", {"t", {-4, 3}, Mat{{1, 0}}}, {}};
    CHECK(global_score(image, ortho, p) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("topk_regions examples") {
    const Vec g{1, 0};
    const auto image = image_with_cosines({0.2, 0.8, 0.5, 0.9});
    CHECK(topk_regions(image, g, 2) == std::vector<std::size_t>{3, 1});
    auto sorted = topk_regions(image, g, 2);
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == oracle::best_subset({0.2L, 0.8L, 0.5L, 0.9L}, 2));
    auto all = topk_regions(image, g, 4);
    std::sort(all.begin(), all.end());
    CHECK(all == std::vector<std::size_t>{0, 1, 2, 3});
    const auto flat = image_with_cosines({0.5, 0.5, 0.5});
    CHECK(topk_regions(flat, g, 2) == std::vector<std::size_t>{0, 1});
    CHECK(throws_code([&] { topk_regions(image, g, 5); }, ErrorCode::KTooLarge));
    CHECK(throws_code([&] { topk_regions(image, g, 0); }, ErrorCode::KTooLarge));
}

TEST_CASE("topk_regions matches brute-force subsets and nests") {
    Rng rng(20);
    for (int t = 0; t < 200; ++t) {
        const std::size_t r = 1 + rng.below(8);
        const auto image = testutil::random_image(rng, r, 3);
        const Vec g = testutil::random_vec(rng, 3);
        std::vector<long double> sims;
        for (std::size_t i = 0; i < r; ++i) sims.push_back(oracle::cosine(oracle::widen(image.regions.row(i)), oracle::widen(g)));
        std::vector<std::size_t> prev;
        for (std::size_t k = 1; k <= r; ++k) {
            auto got = topk_regions(image, g, k);
            std::sort(got.begin(), got.end());
            CHECK(got == oracle::best_subset(sims, k));
            CHECK(std::includes(got.begin(), got.end(), prev.begin(), prev.end()));
            prev = got;
        }
    }
}

TEST_CASE("local_score examples") {
    const AlignmentParams base = unit_params();
    AlignmentParams p = base;
    p.k = 1;
    ImageEmbedding image{"i", {1, 0}, Mat{{0.9, 0.43589}, {0.1, 0.99499}}};
    ClassSpec one{"c", {"t", {1, 0}, Mat{{1, 0}}}, {{1, 0}}};
    CHECK(local_score(image, one, p) == doctest::Approx(0.9).epsilon(1e-5));
    CHECK(local_score(image, one, p) == doctest::Approx(0.9 / std::hypot(0.9, 0.43589)).epsilon(1e-14));
    ClassSpec two{"c", {"t", {1, 0}, Mat{{1, 0}}}, {{1, 0}, {1, 0}}};
    CHECK(local_score(image, two, p) == local_score(image, one, p));
    ClassSpec none{"c", {"t", {1, 0}, Mat{{1, 0}}}, {}};
    CHECK(throws_code([&] { local_score(image, none, p); }, ErrorCode::NoConcepts));
}

TEST_CASE("local_score matches the literal oracle, seed 9") {
    Rng rng(9);
    AlignmentParams p = unit_params();
    p.k = 2;
    const auto image = testutil::random_image(rng, 5, 4);
    ClassSpec cls{"c", testutil::random_text(rng, 2, 4), {testutil::random_vec(rng, 4), testutil::random_vec(rng, 4)}};
    const double want = static_cast<double>(oracle::local_score(image, cls.concept_embs, 2, p.t_l, p.b_l));
    CHECK(rel_err(local_score(image, cls, p), want) <= 1e-12);
}

TEST_CASE("local_score matches the oracle on random instances") {
    Rng rng(21);
    for (int t = 0; t < 200; ++t) {
        const std::size_t r = 1 + rng.below(7);
        const AlignmentParams p = random_params(rng, r);
        const auto image = testutil::random_image(rng, r, 5);
        ClassSpec cls{"c", testutil::random_text(rng, 2, 5), {}};
        for (std::size_t j = 0; j < 1 + rng.below(3); ++j) cls.concept_embs.push_back(testutil::random_vec(rng, 5));
        const double want = static_cast<double>(oracle::local_score(image, cls.concept_embs, p.k, p.t_l, p.b_l));
        CHECK(std::fabs(local_score(image, cls, p) - want) <= 1e-12 * std::max(1.0, std::fabs(want)));
    }
}

TEST_CASE("fuse_predict symmetric tie") {
    AlignmentParams p = unit_params();
    p.k = 1;
    ImageEmbedding image{"i", {1, 0}, Mat{{0, 1}}};
    std::vector<ClassSpec> classes{{"a", {"ta", {1, 0}, Mat{{1, 0}}}, {{1, 0}}}, {"b", {"tb", {0, 1}, Mat{{1, 0}}}, {{0, 1}}}};
    const auto pred = fuse_predict(image, classes, p);
    CHECK(pred.p[0] == pred.p[1]);
    CHECK(pred.p[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(pred.argmax == 0);
}

TEST_CASE("fusion invariants on random instances") {
    Rng rng(22);
    for (int t = 0; t < 300; ++t) {
        const std::size_t r = 1 + rng.below(6);
        AlignmentParams p = random_params(rng, r);
        const auto image = testutil::random_image(rng, r, 4);
        const auto classes = random_classes(rng, 2 + rng.below(4), 4, true);
        const auto pred = fuse_predict(image, classes, p);
        double sum = 0.0;
        for (std::size_t c = 0; c < classes.size(); ++c) {
            sum += pred.p[c];
            CHECK(pred.p[c] >= std::min(pred.p_global[c], pred.p_local[c]) - 1e-15);
            CHECK(pred.p[c] <= std::max(pred.p_global[c], pred.p_local[c]) + 1e-15);
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-12);
        p.beta = 0.0;
        CHECK(fuse_predict(image, classes, p).argmax == argmax(pred.p_global));
        p.beta = 1.0;
        CHECK(fuse_predict(image, classes, p).argmax == argmax(pred.p_local));
    }
}

TEST_CASE("prediction is invariant to positive rescaling of image vectors") {
    Rng rng(23);
    for (int t = 0; t < 300; ++t) {
        const std::size_t r = 1 + rng.below(6);
        const AlignmentParams p = random_params(rng, r);
        const auto image = testutil::random_image(rng, r, 4);
        const auto classes = random_classes(rng, 3, 4, true);
        const auto base = fuse_predict(image, classes, p).argmax;

        auto scaled = image;
        const double c_cls = rng.uniform(0.01, 100.0);
        const double c_reg = rng.uniform(0.01, 100.0);
        for (auto& x : scaled.cls) x *= c_cls;
        for (auto& x : scaled.regions.values()) x *= c_reg;
        CHECK(fuse_predict(scaled, classes, p).argmax == base);

        // With a single region pooled per class, each region row may be rescaled independently.
        AlignmentParams p1 = p;
        p1.k = 1;
        auto single = classes;
        for (auto& cls : single) cls.concept_embs.resize(1);
        const auto base1 = fuse_predict(image, single, p1).argmax;
        auto per_row = image;
        for (std::size_t i = 0; i < r; ++i) {
            const double c = rng.uniform(0.01, 100.0);
            for (auto& x : per_row.regions.row(i)) x *= c;
        }
        CHECK(fuse_predict(per_row, single, p1).argmax == base1);
    }
}

TEST_CASE("classes without concepts fall back to the global path") {
    Rng rng(24);
    const auto image = testutil::random_image(rng, 3, 4);
    const auto classes = random_classes(rng, 3, 4, false);
    const auto pred = fuse_predict(image, classes, AlignmentParams{});
    CHECK(!pred.local_path_used);
    CHECK(pred.p == pred.p_global);

    auto mixed = random_classes(rng, 3, 4, true);
    mixed[1].concept_embs.clear();
    const auto mp = fuse_predict(image, mixed, AlignmentParams{});
    CHECK(mp.local_path_used);
    CHECK(mp.p_local[1] == 0.0);
    CHECK(throws_code([&] { fuse_predict(image, std::span(mixed).first(1), AlignmentParams{}); },
                      ErrorCode::InvalidArgument));
}

TEST_CASE("annotate_concepts") {
    AlignmentParams p;
    p.t_g = 10.0;
    p.b_g = 0.0;
    p.beta = 0.0;
    ImageEmbedding image{"i", {2, 0}, Mat{{1, 1}, {0, 1}}};
    ConceptPrompt prompt{"C1", {"pos", {1, 0}, Mat{{1, 0}}}, {"neg", {0, 1}, Mat{{0, 1}}}};
    const auto q = annotate_concepts(image, std::span(&prompt, 1), p);
    CHECK(q[0] == doctest::Approx(0.9999546021312976).epsilon(1e-12));

    Rng rng(25);
    for (int t = 0; t < 100; ++t) {
        AlignmentParams rp = random_params(rng, 3);
        const auto img = testutil::random_image(rng, 3, 4);
        ConceptPrompt pr{"C", testutil::random_text(rng, 2, 4, "p"), testutil::random_text(rng, 3, 4, "n")};
        ConceptPrompt swapped{"C", pr.negative, pr.positive};
        ConceptPrompt same{"C", pr.positive, pr.positive};
        const double qp = annotate_concepts(img, std::span(&pr, 1), rp)[0];
        CHECK(std::fabs(annotate_concepts(img, std::span(&swapped, 1), rp)[0] - (1.0 - qp)) <= 1e-12);
        CHECK(annotate_concepts(img, std::span(&same, 1), rp)[0] == 0.5);
    }
}

TEST_CASE("recall_at_k from ranks") {
    const std::vector<std::size_t> ranks{1, 3, 11};
    const std::vector<std::size_t> ks{1, 5, 10};
    const auto r = recall_at_k(ranks, ks);
    CHECK(r[0].recall == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(r[1].recall == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(r[2].recall == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("retrieval sanity") {
    Rng rng(26);
    const std::vector<std::size_t> ks{1, 2, 3, 5, 10, 100};
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 2 + rng.below(20);
        std::vector<Vec> store;
        std::vector<std::pair<std::size_t, std::size_t>> self, shuffled;
        for (std::size_t i = 0; i < n; ++i) {
            store.push_back(testutil::random_vec(rng, 3));
            self.emplace_back(i, i);
            shuffled.emplace_back(i, rng.below(n));
        }
        const auto rep = retrieve(store, store, self, ks);
        CHECK(rep.query_to_candidate[0].recall == 1.0);
        CHECK(rep.candidate_to_query[0].recall == 1.0);
        std::vector<Vec> other;
        for (std::size_t i = 0; i < n; ++i) other.push_back(testutil::random_vec(rng, 3));
        const auto rnd = retrieve(store, other, shuffled, ks);
        for (const auto* dir : {&rnd.query_to_candidate, &rnd.candidate_to_query}) {
            for (std::size_t i = 1; i < dir->size(); ++i) CHECK((*dir)[i].recall >= (*dir)[i - 1].recall);
            CHECK(dir->back().recall == 1.0);
        }
    }
}

TEST_CASE("retrieval is thread-count independent and rejects empty stores") {
    Rng rng(27);
    std::vector<Vec> q, c;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < 50; ++i) {
        q.push_back(testutil::random_vec(rng, 4));
        c.push_back(testutil::random_vec(rng, 4));
        pairs.emplace_back(i, i);
    }
    const std::vector<std::size_t> ks{1, 5};
    const auto a = retrieve(q, c, pairs, ks, 1);
    const auto b = retrieve(q, c, pairs, ks, 4);
    for (std::size_t i = 0; i < ks.size(); ++i) {
        CHECK(a.query_to_candidate[i].recall == b.query_to_candidate[i].recall);
        CHECK(a.candidate_to_query[i].recall == b.candidate_to_query[i].recall);
    }
    CHECK(throws_code([&] { retrieve({}, c, pairs, ks); }, ErrorCode::EmptyStore));
}
