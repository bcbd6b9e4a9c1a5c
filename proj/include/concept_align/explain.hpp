// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0
//
// Concept bottleneck models over concept-similarity features, region
// saliency, concept presence differences between image sets, and weight
// averaging across datasets.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "concept_align/embedding.hpp"
#include "concept_align/numerics.hpp"
#include "concept_align/zeroshot.hpp"

namespace concept_align {

/// Cosine between the image cls vector and each concept embedding.
Vec concept_similarity_features(const ImageEmbedding& image, std::span<const Vec> concept_embs);

/// Per concept: beta * cos(mean of its top-k regions, concept) + (1 - beta) * global cosine.
Vec fused_similarity_features(const ImageEmbedding& image, std::span<const Vec> concept_embs,
                              const AlignmentParams& params);

struct ConceptBottleneck {
    std::vector<std::string> concept_ids;
    std::vector<std::string> class_ids;  // sorted
    Mat weights;                         // n_concepts x n_classes
    Vec bias;                            // n_classes
};

struct CbmFitOptions {
    double l2_inverse_strength = 0.316;
    std::size_t max_steps = 10000;
    double tolerance = 1e-6;
};

struct CbmFitReport {
    std::size_t steps = 0;
    double objective = 0.0;
    double grad_max_norm = 0.0;
};

/// Multinomial logistic regression: mean cross-entropy + ||W||^2 / (2C),
/// bias unregularized, zero init, full-batch gradient descent with
/// backtracking. Samples are put in a canonical order first, so the fit does
/// not depend on the order they are given in. Throws SingleClass,
/// NonFinite, LengthMismatch or EmptyInput.
ConceptBottleneck train_cbm(const Mat& features, std::span<const std::string> labels,
                            std::span<const std::string> concept_ids, const CbmFitOptions& options = {},
                            CbmFitReport* report = nullptr);

/// Class probabilities (softmax of features * W + bias), in class_ids order.
Vec cbm_predict_proba(const ConceptBottleneck& cbm, std::span<const double> features);
/// Predicted class index.
std::size_t cbm_predict(const ConceptBottleneck& cbm, std::span<const double> features);

struct RankedConcept {
    std::string concept_id;
    double weight = 0.0;
};

/// Concepts by descending weight for the class, ties by concept id; at most
/// top_n entries (0 = all). Throws UnknownClass.
std::vector<RankedConcept> concept_class_association(const ConceptBottleneck& cbm, const std::string& class_id,
                                                     std::size_t top_n = 0);

/// Ranking by the mean weight across models that share one concept
/// vocabulary. Throws VocabMismatch, UnknownClass or EmptyInput.
std::vector<RankedConcept> disease_level_inspection(std::span<const ConceptBottleneck> cbms,
                                                    const std::string& class_id, std::size_t top_n = 0);

/// Cosine of every region with the concept.
Vec region_saliency(const ImageEmbedding& image, std::span<const double> concept_emb);

struct ConceptDiffRow {
    std::string cui;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    double prop_pos = 0.0;
    double prop_neg = 0.0;
    double d = 0.0;
};

struct ConceptDiffReport {
    std::size_t m = 0;  // positive set size
    std::size_t n = 0;  // negative set size
    std::vector<ConceptDiffRow> rows;  // prompt order
};

/// Presence per image and prompt: fused positive-prompt probability >= threshold.
std::vector<std::vector<bool>> concept_presence(std::span<const ImageEmbedding> images,
                                                std::span<const ConceptPrompt> prompts,
                                                const AlignmentParams& params, double threshold,
                                                std::size_t threads = 1);

/// D = n_pos / M - n_neg / N per concept. Throws EmptySet.
ConceptDiffReport concept_presence_difference(std::span<const ImageEmbedding> pos_images,
                                              std::span<const ImageEmbedding> neg_images,
                                              std::span<const ConceptPrompt> prompts,
                                              const AlignmentParams& params, double presence_threshold = 0.5,
                                              std::size_t threads = 1);

/// Rows by descending D, ties by cui.
std::vector<ConceptDiffRow> sorted_by_d(const ConceptDiffReport& report);

}  // namespace concept_align
