// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0
//
// Domain types for image/text embeddings, concept spans, triplets and the
// learnable alignment scalars.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "concept_align/numerics.hpp"

namespace concept_align {

/// Encoder output for one image: a global vector plus r region rows.
struct ImageEmbedding {
    std::string id;
    Vec cls;
    Mat regions;  // r x h

    std::size_t dim() const noexcept { return cls.size(); }
    std::size_t num_regions() const noexcept { return regions.rows(); }
};

/// Encoder output for one text: a global vector plus s token rows.
struct TextEmbedding {
    std::string id;
    Vec cls;
    Mat tokens;  // s x h

    std::size_t dim() const noexcept { return cls.size(); }
    std::size_t num_tokens() const noexcept { return tokens.rows(); }
};

/// A concept mention inside a text. Token indices are 1-based positions into
/// the token rows (row 0 of a stored record is the cls vector, so index v
/// addresses stored row v directly).
struct ConceptSpan {
    std::string cui;
    std::vector<std::size_t> token_indices;
};

/// Throws SpanOutOfRange unless indices are non-empty, strictly increasing and
/// within [1, num_tokens].
void validate_span(const ConceptSpan& span, std::size_t num_tokens);

struct Triplet {
    ImageEmbedding image;
    TextEmbedding text;
    std::vector<ConceptSpan> concepts;
};

/// Pairing is positional: triplet m's image and text form the only positive.
using TripletBatch = std::vector<Triplet>;

struct AlignmentParams {
    double t_g = 10.0;
    double b_g = 0.0;
    double t_l = 10.0;
    double b_l = 0.0;
    double alpha = 0.5;
    double beta = 0.5;
    std::size_t k = 0;  // top-k regions; 0 selects min(16, r)

    /// Effective k for an image with r regions.
    std::size_t effective_k(std::size_t num_regions) const noexcept;
};

/// Throws InvalidArgument on t_g/t_l <= 0, alpha < 0 or beta outside [0, 1].
void validate_params(const AlignmentParams& params);

/// Fails fast on empty or zero-norm rows, region-free images and mismatched
/// dimensions. Used by loaders before any arithmetic.
void validate_image(const ImageEmbedding& image);
void validate_text(const TextEmbedding& text);

}  // namespace concept_align
