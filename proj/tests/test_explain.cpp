// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include <doctest.h>

#include "concept_align/explain.hpp"
#include "concept_align/toy_training.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace concept_align;
using testutil::throws_code;

namespace {

ConceptBottleneck cbm_with_column(std::vector<double> column) {
    ConceptBottleneck cbm;
    for (std::size_t j = 0; j < column.size(); ++j) cbm.concept_ids.push_back("concept" + std::to_string(j));
    cbm.class_ids = {"a", "b"};
    cbm.weights = Mat(column.size(), 2);
    for (std::size_t j = 0; j < column.size(); ++j) {
        cbm.weights(j, 0) = column[j];
        cbm.weights(j, 1) = -column[j];
    }
    cbm.bias = {0, 0};
    return cbm;
}

std::vector<std::string> names(const std::vector<RankedConcept>& ranked) {
    std::vector<std::string> out;
    for (const auto& r : ranked) out.push_back(r.concept_id);
    return out;
}

/// Concept features in [0, 1]: class c's planted concepts near 1, others near 0.
struct PlantedFeatures {
    Mat features;
    std::vector<std::string> labels;
    std::vector<std::string> concept_ids;
    std::vector<std::vector<bool>> planted;  // [concept][class]
};

PlantedFeatures planted_features(std::uint64_t seed, std::size_t n_classes, std::size_t per_class) {
    Rng rng(seed);
    PlantedFeatures out;
    const std::size_t k = n_classes;
    out.planted.assign(k, std::vector<bool>(n_classes, false));
    for (std::size_t c = 0; c < n_classes; ++c) {
        out.planted[c][c] = true;
        out.planted[(c + 1) % k][c] = true;
    }
    for (std::size_t j = 0; j < k; ++j) out.concept_ids.push_back(synthetic_cui(j));
    out.features = Mat(0, k);
    for (std::size_t i = 0; i < n_classes * per_class; ++i) {
        const std::size_t c = i % n_classes;
        Vec row(k);
        for (std::size_t j = 0; j < k; ++j) row[j] = (out.planted[j][c] ? 0.8 : 0.1) + 0.1 * rng.uniform();
        out.features.append_row(row);
        out.labels.push_back("class" + std::to_string(c));
    }
    return out;
}

std::vector<ImageEmbedding> images_along(const std::vector<bool>& aligned) {
    std::vector<ImageEmbedding> out;
    for (bool a : aligned) out.push_back({"i", a ? Vec{1, 0} : Vec{0, 1}, Mat{{1, 0}}});
    return out;
}

ConceptPrompt axis_prompt(std::string cui) { return {std::move(cui), {"pos", {1, 0}, Mat{{1, 0}}}, {"neg", {0, 1}, Mat{{0, 1}}}}; }

AlignmentParams global_only() {
    AlignmentParams p;
    p.t_g = 10.0;
    p.b_g = 0.0;
    p.beta = 0.0;
    return p;
}

}  // namespace

TEST_CASE("concept_similarity_features") {
    ImageEmbedding image{"i", {2, 0}, Mat{{1, 0}}};
    const std::vector<Vec> g{{1, 0}, {0, 3}};
    CHECK(concept_similarity_features(image, g) == Vec{1.0, 0.0});
    CHECK(concept_similarity_features(image, {}).empty());

    Rng rng(5);
    const auto img = testutil::random_image(rng, 3, 6);
    std::vector<Vec> concepts;
    for (int j = 0; j < 4; ++j) concepts.push_back(testutil::random_vec(rng, 6));
    const Vec f = concept_similarity_features(img, concepts);
    for (std::size_t j = 0; j < 4; ++j) {
        const double want = static_cast<double>(oracle::cosine(oracle::widen(img.cls), oracle::widen(concepts[j])));
        CHECK(std::fabs(f[j] - want) <= 1e-14);
    }
}

TEST_CASE("fused_similarity_features interpolates global and regional cosines") {
    Rng rng(6);
    const auto img = testutil::random_image(rng, 4, 5);
    const std::vector<Vec> g{testutil::random_vec(rng, 5)};
    AlignmentParams p;
    p.k = 4;
    p.beta = 0.0;
    CHECK(std::fabs(fused_similarity_features(img, g, p)[0] - concept_similarity_features(img, g)[0]) <= 1e-15);
    p.beta = 1.0;
    const Vec pooled = mean_pool(img.regions);
    CHECK(std::fabs(fused_similarity_features(img, g, p)[0] - cosine(pooled, g[0])) <= 1e-14);
}

TEST_CASE("CBM separates 1-D features with the right sign") {
    Mat x(0, 1);
    std::vector<std::string> y;
    for (int i = 0; i < 10; ++i) {
        x.append_row(Vec{i % 2 ? 1.0 : -1.0});
        y.push_back(i % 2 ? "1" : "0");
    }
    const std::vector<std::string> ids{"f"};
    CbmFitReport report;
    const auto cbm = train_cbm(x, y, ids, {}, &report);
    CHECK(report.grad_max_norm < 1e-6);
    CHECK(cbm.class_ids == std::vector<std::string>{"0", "1"});
    CHECK(cbm.weights(0, 1) > 0.0);
    CHECK(cbm.weights(0, 0) < 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(cbm.class_ids[cbm_predict(cbm, x.row(i))] == y[i]);
    const Vec proba = cbm_predict_proba(cbm, x.row(0));
    CHECK(std::fabs(proba[0] + proba[1] - 1.0) <= 1e-15);
}

TEST_CASE("CBM errors") {
    const std::vector<std::string> ids{"f"};
    const std::vector<std::string> same{"a", "a"};
    CHECK(throws_code([&] { train_cbm(Mat{{1}, {2}}, same, ids); }, ErrorCode::SingleClass));
    const std::vector<std::string> one{"a"};
    CHECK(throws_code([&] { train_cbm(Mat{{1}, {2}}, one, ids); }, ErrorCode::LengthMismatch));
    CHECK(throws_code([&] { train_cbm(Mat(0, 1), std::vector<std::string>{}, ids); }, ErrorCode::EmptyInput));
}

TEST_CASE("CBM fit ignores sample order and duplication") {
    const auto data = planted_features(3, 4, 8);
    const auto base = train_cbm(data.features, data.labels, data.concept_ids);

    std::vector<std::size_t> order(data.labels.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(4);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    Mat permuted(0, data.features.cols());
    std::vector<std::string> permuted_labels;
    Mat doubled(0, data.features.cols());
    std::vector<std::string> doubled_labels;
    for (std::size_t i : order) {
        permuted.append_row(data.features.row(i));
        permuted_labels.push_back(data.labels[i]);
    }
    for (int rep = 0; rep < 2; ++rep) {
        for (std::size_t i = 0; i < data.labels.size(); ++i) {
            doubled.append_row(data.features.row(i));
            doubled_labels.push_back(data.labels[i]);
        }
    }
    const auto p = train_cbm(permuted, permuted_labels, data.concept_ids);
    const auto d = train_cbm(doubled, doubled_labels, data.concept_ids);
    for (std::size_t i = 0; i < base.weights.values().size(); ++i) {
        CHECK(std::fabs(p.weights.values()[i] - base.weights.values()[i]) <= 1e-10);
        CHECK(std::fabs(d.weights.values()[i] - base.weights.values()[i]) <= 1e-8);
    }
}

TEST_CASE("CBM recovers planted concept-class associations") {
    const auto data = planted_features(7, 4, 16);
    const auto cbm = train_cbm(data.features, data.labels, data.concept_ids, {0.316, 10000, 1e-6});
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        hits += cbm.class_ids[cbm_predict(cbm, data.features.row(i))] == data.labels[i] ? 1 : 0;
    }
    CHECK(hits == data.labels.size());
    for (std::size_t j = 0; j < data.concept_ids.size(); ++j) {
        for (std::size_t c = 0; c < 4; ++c) {
            const auto col = static_cast<std::size_t>(
                std::find(cbm.class_ids.begin(), cbm.class_ids.end(), "class" + std::to_string(c)) - cbm.class_ids.begin());
            CHECK((cbm.weights(j, col) > 0.0) == data.planted[j][c]);
        }
    }
}

TEST_CASE("concept_class_association") {
    const auto cbm = cbm_with_column({0.5, -0.2, 0.9});
    CHECK(names(concept_class_association(cbm, "a")) == std::vector<std::string>{"concept2", "concept0", "concept1"});
    CHECK(names(concept_class_association(cbm, "a", 1)) == std::vector<std::string>{"concept2"});
    CHECK(names(concept_class_association(cbm_with_column({0.3, 0.3, 0.3}), "a")) ==
          std::vector<std::string>{"concept0", "concept1", "concept2"});
    CHECK(throws_code([&] { concept_class_association(cbm, "zzz"); }, ErrorCode::UnknownClass));

    auto scaled = cbm;
    for (auto& w : scaled.weights.values()) w *= 3.5;
    CHECK(names(concept_class_association(scaled, "a")) == names(concept_class_association(cbm, "a")));
}

TEST_CASE("disease_level_inspection") {
    const auto one = cbm_with_column({0.5, -0.2, 0.9});
    const std::vector<ConceptBottleneck> single{one};
    const auto a = disease_level_inspection(single, "a");
    const auto b = concept_class_association(one, "a");
    CHECK(names(a) == names(b));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].weight == b[i].weight);

    const std::vector<ConceptBottleneck> cancel{cbm_with_column({0.5, -0.2, 0.9}), cbm_with_column({-0.5, 0.2, -0.9})};
    const auto c = disease_level_inspection(cancel, "a");
    CHECK(names(c) == std::vector<std::string>{"concept0", "concept1", "concept2"});
    for (const auto& r : c) CHECK(r.weight == 0.0);

    std::vector<ConceptBottleneck> three;
    for (auto [wa, wb] : {std::pair{0.9, 0.1}, std::pair{0.8, 0.9}, std::pair{0.7, 0.2}}) {
        auto cbm = cbm_with_column({wa, wb});
        cbm.concept_ids = {"A", "B"};
        three.push_back(cbm);
    }
    const auto d = disease_level_inspection(three, "a");
    CHECK(names(d) == std::vector<std::string>{"A", "B"});
    CHECK(d[0].weight == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(d[1].weight == doctest::Approx(0.4).epsilon(1e-15));

    auto mismatched = three;
    mismatched[1].concept_ids = {"A", "C"};
    CHECK(throws_code([&] { disease_level_inspection(mismatched, "a"); }, ErrorCode::VocabMismatch));
    CHECK(throws_code([&] { disease_level_inspection(std::span<const ConceptBottleneck>{}, "a"); }, ErrorCode::EmptyInput));
    CHECK(throws_code([&] { disease_level_inspection(three, "zzz"); }, ErrorCode::UnknownClass));
}

TEST_CASE("region_saliency") {
    SyntheticSpec spec;
    spec.noise_sigma = 0.0;
    const auto ds = generate_synthetic(spec);
    for (const auto& t : ds.triplets) {
        const ImageEmbedding image{t.image.id, mean_pool(t.image.regions), t.image.regions};
        for (std::size_t q = 0; q < t.planted_concepts.size(); ++q) {
            const Vec s = region_saliency(image, ds.image_prototypes.row(t.planted_concepts[q]));
            CHECK(argmax(s) == t.planted_regions[q]);
        }
    }
    ImageEmbedding flat{"i", {1, 0, 0}, Mat{{1, 0, 0}, {0, 1, 0}}};
    CHECK(region_saliency(flat, Vec{0, 0, 1}) == Vec{0, 0});

    Rng rng(8);
    const auto img = testutil::random_image(rng, 5, 4);
    const Vec g = testutil::random_vec(rng, 4);
    const Vec s = region_saliency(img, g);
    auto scaled = img;
    for (std::size_t i = 0; i < 5; ++i) {
        const double c = rng.uniform(0.1, 10.0);
        for (auto& x : scaled.regions.row(i)) x *= c;
    }
    const Vec s2 = region_saliency(scaled, g);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(std::fabs(s[i] - static_cast<double>(oracle::cosine(oracle::widen(img.regions.row(i)), oracle::widen(g)))) <= 1e-14);
        CHECK(std::fabs(s2[i] - s[i]) <= 1e-12);
    }
}

TEST_CASE("concept presence difference formula") {
    std::vector<bool> pos(10, false), neg(10, false);
    for (int i = 0; i < 8; ++i) pos[i] = true;
    for (int i = 0; i < 2; ++i) neg[i] = true;
    const auto prompt = axis_prompt("C1");
    const auto rep = concept_presence_difference(images_along(pos), images_along(neg), std::span(&prompt, 1), global_only());
    REQUIRE(rep.rows.size() == 1);
    CHECK(rep.rows[0].n_pos == 8);
    CHECK(rep.rows[0].n_neg == 2);
    CHECK(rep.rows[0].d == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(throws_code([&] { concept_presence_difference({}, images_along(neg), std::span(&prompt, 1), global_only()); },
                      ErrorCode::EmptySet));
}

TEST_CASE("concept presence difference properties") {
    Rng rng(9);
    for (int t = 0; t < 50; ++t) {
        std::vector<ImageEmbedding> a, b;
        for (std::size_t i = 0; i < 1 + rng.below(10); ++i) a.push_back(testutil::random_image(rng, 3, 4));
        for (std::size_t i = 0; i < 1 + rng.below(10); ++i) b.push_back(testutil::random_image(rng, 3, 4));
        std::vector<ConceptPrompt> prompts;
        for (int j = 0; j < 3; ++j) {
            prompts.push_back({"C" + std::to_string(j), testutil::random_text(rng, 2, 4), testutil::random_text(rng, 2, 4)});
        }
        AlignmentParams p;
        p.k = 2;
        const auto ab = concept_presence_difference(a, b, prompts, p);
        const auto ba = concept_presence_difference(b, a, prompts, p);
        const auto aa = concept_presence_difference(a, a, prompts, p);
        auto a2 = a;
        a2.insert(a2.end(), a.begin(), a.end());
        auto b2 = b;
        b2.insert(b2.end(), b.begin(), b.end());
        const auto dup = concept_presence_difference(a2, b2, prompts, p, 0.5, 3);
        for (std::size_t j = 0; j < prompts.size(); ++j) {
            CHECK(ab.rows[j].d >= -1.0);
            CHECK(ab.rows[j].d <= 1.0);
            CHECK(ba.rows[j].d == -ab.rows[j].d);
            CHECK(aa.rows[j].d == 0.0);
            CHECK(dup.rows[j].d == ab.rows[j].d);
        }
    }
}

TEST_CASE("sorted_by_d orders by D then cui") {
    ConceptDiffReport rep;
    rep.rows = {{"B", 0, 0, 0, 0, 0.5}, {"A", 0, 0, 0, 0, 0.5}, {"C", 0, 0, 0, 0, 0.9}, {"D", 0, 0, 0, 0, -0.1}};
    const auto sorted = sorted_by_d(rep);
    CHECK(sorted[0].cui == "C");
    CHECK(sorted[1].cui == "A");
    CHECK(sorted[2].cui == "B");
    CHECK(sorted[3].cui == "D");
}
