// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0
//
// Zero-shot inference: a global path (image cls vs class text cls), a local
// path (top-k regions per class concept, pooled), probability fusion, concept
// annotation with positive/negative prompts, and cross-modal retrieval.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "concept_align/embedding.hpp"
#include "concept_align/numerics.hpp"

namespace concept_align {

struct ClassSpec {
    std::string class_id;
    TextEmbedding text;
    std::vector<Vec> concept_embs;  // may be empty: global path only
};

struct Prediction {
    Vec p_global;
    Vec p_local;
    Vec p;  // beta * p_local + (1 - beta) * p_global
    std::size_t argmax = 0;
    /// False when no class had concepts and beta was forced to 0.
    bool local_path_used = true;
};

/// t_g * cos(image cls, class text cls) + b_g.
double global_score(const ImageEmbedding& image, const ClassSpec& cls, const AlignmentParams& params);

/// Indices of the k regions most similar to the concept, in descending
/// similarity order; ties go to the lower index. Throws KTooLarge unless
/// 1 <= k <= r.
std::vector<std::size_t> topk_regions(const ImageEmbedding& image, std::span<const double> concept_emb,
                                      std::size_t k);

/// t_l * cos(i_loc, t_loc) + b_l where i_loc averages the (un-normalized)
/// top-k regions of every concept, duplicates kept, and t_loc averages the
/// concept embeddings. Throws NoConcepts when the class has none.
double local_score(const ImageEmbedding& image, const ClassSpec& cls, const AlignmentParams& params);

/// Requires >= 2 classes. Classes without concepts get probability 0 on the
/// local path; if no class has concepts the prediction is global-only.
Prediction fuse_predict(const ImageEmbedding& image, std::span<const ClassSpec> classes,
                        const AlignmentParams& params);

/// A concept described by a positive and a negative prompt.
struct ConceptPrompt {
    std::string cui;
    TextEmbedding positive;
    TextEmbedding negative;
};

/// Two-class spec for a prompt; its single concept embedding is the mean of
/// the prompt's token rows.
ClassSpec prompt_class(const TextEmbedding& prompt);

/// Fused probability of the positive prompt for each concept.
std::vector<double> annotate_concepts(const ImageEmbedding& image, std::span<const ConceptPrompt> prompts,
                                      const AlignmentParams& params);

// ---------------------------------------------------------------------------
// Retrieval (global cls cosine only)

/// 1-based rank of each query's mate among the candidates, ranking by
/// descending cosine with ties to the lower candidate index.
std::vector<std::size_t> mate_ranks(std::span<const Vec> queries, std::span<const Vec> candidates,
                                    std::span<const std::size_t> mates, std::size_t threads = 1);

struct RecallAtK {
    std::size_t k = 0;
    double recall = 0.0;
};

std::vector<RecallAtK> recall_at_k(std::span<const std::size_t> ranks, std::span<const std::size_t> ks);

struct RetrievalReport {
    std::vector<RecallAtK> query_to_candidate;
    std::vector<RecallAtK> candidate_to_query;
};

/// Bidirectional Recall@k. pairs lists (query index, candidate index) of true
/// mates. Throws EmptyStore if either side is empty.
RetrievalReport retrieve(std::span<const Vec> queries, std::span<const Vec> candidates,
                         std::span<const std::pair<std::size_t, std::size_t>> pairs,
                         std::span<const std::size_t> ks, std::size_t threads = 1);

}  // namespace concept_align
