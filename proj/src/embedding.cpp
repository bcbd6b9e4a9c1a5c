// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0

#include "concept_align/embedding.hpp"

#include <algorithm>
#include <string>

#include "concept_align/error.hpp"

namespace concept_align {

void validate_span(const ConceptSpan& span, std::size_t num_tokens) {
    if (span.token_indices.empty()) {
        throw Error(ErrorCode::SpanOutOfRange, "concept '" + span.cui + "' has no tokens");
    }
    std::size_t prev = 0;
    for (std::size_t v : span.token_indices) {
        if (v < 1 || v > num_tokens) {
            throw Error(ErrorCode::SpanOutOfRange,
                        "concept '" + span.cui + "' token index " + std::to_string(v) +
                            " outside [1, " + std::to_string(num_tokens) + "]");
        }
        if (v <= prev) {
            throw Error(ErrorCode::SpanOutOfRange,
                        "concept '" + span.cui + "' token indices are not strictly increasing");
        }
        prev = v;
    }
}

std::size_t AlignmentParams::effective_k(std::size_t num_regions) const noexcept {
    return k == 0 ? std::min<std::size_t>(16, num_regions) : k;
}

void validate_params(const AlignmentParams& params) {
    if (!(params.t_g > 0.0) || !(params.t_l > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "logit scales t_g and t_l must be positive");
    }
    if (!(params.alpha >= 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "alpha must be non-negative");
    }
    if (!(params.beta >= 0.0 && params.beta <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "beta must lie in [0, 1]");
    }
}

namespace {

void check_rows(const Mat& m, std::size_t dim, const std::string& id, const char* what,
                bool require_nonzero) {
    if (m.cols() != dim) {
        throw Error(ErrorCode::DimMismatch, id + ": " + what + " width differs from cls width");
    }
    for (std::size_t r = 0; r < m.rows(); ++r) {
        require_finite(m.row(r), what);
        if (require_nonzero && norm(m.row(r)) < kZeroNormThreshold) {
            throw Error(ErrorCode::ZeroNorm,
                        id + ": " + what + " row " + std::to_string(r) + " is zero");
        }
    }
}

}  // namespace

void validate_image(const ImageEmbedding& image) {
    if (image.cls.empty() || image.regions.rows() == 0) {
        throw Error(ErrorCode::EmptyInput, image.id + ": image needs a cls vector and >= 1 region");
    }
    require_finite(image.cls, "image cls");
    if (norm(image.cls) < kZeroNormThreshold) {
        throw Error(ErrorCode::ZeroNorm, image.id + ": image cls vector is zero");
    }
    check_rows(image.regions, image.cls.size(), image.id, "region", true);
}

void validate_text(const TextEmbedding& text) {
    if (text.cls.empty() || text.tokens.rows() == 0) {
        throw Error(ErrorCode::EmptyInput, text.id + ": text needs a cls vector and >= 1 token");
    }
    require_finite(text.cls, "text cls");
    if (norm(text.cls) < kZeroNormThreshold) {
        throw Error(ErrorCode::ZeroNorm, text.id + ": text cls vector is zero");
    }
    // Token rows may be zero (padding); only the pooled concept vector must not be.
    check_rows(text.tokens, text.cls.size(), text.id, "token", false);
}

}  // namespace concept_align
