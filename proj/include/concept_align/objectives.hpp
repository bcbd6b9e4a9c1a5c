// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training objectives: the global image-text sigmoid loss (IT-Align), the
// region-concept loss (RC-Align), their weighted sum, and analytic gradients
// with respect to every embedding row and the four logit scalars.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "concept_align/embedding.hpp"
#include "concept_align/numerics.hpp"

namespace concept_align {

struct LossBreakdown {
    double it_align = 0.0;
    double rc_align = 0.0;
    double total = 0.0;
    double alpha = 0.0;
};

/// Gradient of the total loss for one triplet. Shapes mirror the inputs.
struct TripletGradient {
    Vec image_cls;
    Mat regions;
    Vec text_cls;
    Mat tokens;
};

struct GradientSet {
    std::vector<TripletGradient> triplets;
    double t_g = 0.0;
    double b_g = 0.0;
    double t_l = 0.0;
    double b_l = 0.0;
    double alpha = 0.0;  // equals the RC-Align value
};

/// Global sigmoid loss over all |B|^2 pairs of normalized cls vectors:
///   -(1/|B|) sum_{m,n} log sigma(z_mn * (t_g x_m.y_n - b_g)),  z_mn = +1 iff m == n.
double it_align_loss(const TripletBatch& batch, const AlignmentParams& params);

/// Mean of the token rows named by the span (1-based indices).
Vec concept_embedding(const TextEmbedding& text, const ConceptSpan& span);

/// r x w matrix with A_ij = log sigma(t_l cos(region_i, concept_j) - b_l).
Mat region_concept_matrix(const ImageEmbedding& image, std::span<const Vec> concept_embs,
                          const AlignmentParams& params);

/// Mean over columns of the column maximum.
double pair_similarity_score(const Mat& a);

/// -(1/|B|) sum_{m,n} z_mn S(I_m, T_n). Pairs whose text has no concepts add 0.
double rc_align_loss(const TripletBatch& batch, const AlignmentParams& params);

LossBreakdown total_loss(const TripletBatch& batch, const AlignmentParams& params);

struct LossAndGradient {
    LossBreakdown loss;
    GradientSet grad;
};

/// Loss and its analytic gradient. At exact max ties in S the gradient goes
/// to the lowest region index.
LossAndGradient total_loss_grad(const TripletBatch& batch, const AlignmentParams& params);

/// Smallest gap between the best and second-best A_ij in any concept column
/// over all (m, n) pairs. Infinity when every image has a single region.
/// Finite-difference checks are only meaningful when this exceeds the step.
double min_argmax_gap(const TripletBatch& batch, const AlignmentParams& params);

struct GradCheckReport {
    double max_error = 0.0;       // |a - n| / max(|a|, |n|, 1e-3)
    std::size_t components = 0;   // number of coordinates compared
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Compares total_loss_grad against central differences of total_loss with
/// the given step on every embedding coordinate and on t_g, b_g, t_l, b_l.
/// The reported error is relative with an absolute floor of 1e-7 at the
/// 1e-4 tolerance, i.e. |a - n| / max(|a|, |n|, 1e-3).
GradCheckReport gradient_check(const TripletBatch& batch, const AlignmentParams& params,
                               double step = 1e-5);

/// Random batch for checks: |B| triplets with r regions, s tokens, up to
/// max_concepts spans per text (at least one), width h.
TripletBatch random_batch(std::size_t batch_size, std::size_t r, std::size_t s,
                          std::size_t max_concepts, std::size_t h, unsigned long long seed);

}  // namespace concept_align
