// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0

#include "concept_align/zeroshot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "concept_align/error.hpp"
#include "concept_align/parallel.hpp"

namespace concept_align {

double global_score(const ImageEmbedding& image, const ClassSpec& cls, const AlignmentParams& params) {
    return params.t_g * cosine(image.cls, cls.text.cls) + params.b_g;
}

std::vector<std::size_t> topk_regions(const ImageEmbedding& image, std::span<const double> concept_emb,
                                      std::size_t k) {
    const std::size_t r = image.regions.rows();
    if (k == 0 || k > r) {
        throw Error(ErrorCode::KTooLarge,
                    "k = " + std::to_string(k) + " must lie in [1, r = " + std::to_string(r) + "]");
    }
    std::vector<double> sims(r);
    for (std::size_t i = 0; i < r; ++i) {
        sims[i] = cosine(image.regions.row(i), concept_emb);
    }
    std::vector<std::size_t> order(r);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
    order.resize(k);
    return order;
}

double local_score(const ImageEmbedding& image, const ClassSpec& cls, const AlignmentParams& params) {
    if (cls.concept_embs.empty()) {
        throw Error(ErrorCode::NoConcepts, "class '" + cls.class_id + "' has no concepts for the local path");
    }
    const std::size_t h = image.regions.cols();
    const std::size_t k = params.effective_k(image.regions.rows());
    Vec pooled_image(h, 0.0);
    Vec pooled_text(h, 0.0);
    for (const auto& g : cls.concept_embs) {
        if (g.size() != h) {
            throw Error(ErrorCode::DimMismatch, "concept embedding width differs from image width");
        }
        for (std::size_t i : topk_regions(image, g, k)) {
            const auto row = image.regions.row(i);
            for (std::size_t c = 0; c < h; ++c) {
                pooled_image[c] += row[c];
            }
        }
        for (std::size_t c = 0; c < h; ++c) {
            pooled_text[c] += g[c];
        }
    }
    const double w = static_cast<double>(cls.concept_embs.size());
    for (std::size_t c = 0; c < h; ++c) {
        pooled_image[c] /= w * static_cast<double>(k);
        pooled_text[c] /= w;
    }
    return params.t_l * cosine(pooled_image, pooled_text) + params.b_l;
}

Prediction fuse_predict(const ImageEmbedding& image, std::span<const ClassSpec> classes,
                        const AlignmentParams& params) {
    if (classes.size() < 2) {
        throw Error(ErrorCode::InvalidArgument, "zero-shot prediction needs at least two classes");
    }
    const std::size_t n = classes.size();
    Vec s_global(n);
    Vec s_local(n, -std::numeric_limits<double>::infinity());
    bool any_local = false;
    for (std::size_t c = 0; c < n; ++c) {
        s_global[c] = global_score(image, classes[c], params);
        if (!classes[c].concept_embs.empty()) {
            s_local[c] = local_score(image, classes[c], params);
            any_local = true;
        }
    }
    Prediction out;
    out.p_global = softmax(s_global);
    double beta = params.beta;
    if (any_local) {
        out.p_local = softmax(s_local);
    } else {
        out.p_local = out.p_global;
        out.local_path_used = false;
        beta = 0.0;
    }
    out.p.resize(n);
    for (std::size_t c = 0; c < n; ++c) {
        out.p[c] = beta * out.p_local[c] + (1.0 - beta) * out.p_global[c];
    }
    out.argmax = argmax(out.p);
    return out;
}

ClassSpec prompt_class(const TextEmbedding& prompt) {
    return {prompt.id, prompt, {mean_pool(prompt.tokens)}};
}

std::vector<double> annotate_concepts(const ImageEmbedding& image, std::span<const ConceptPrompt> prompts,
                                      const AlignmentParams& params) {
    std::vector<double> out;
    out.reserve(prompts.size());
    for (const auto& prompt : prompts) {
        const ClassSpec pair[2] = {prompt_class(prompt.positive), prompt_class(prompt.negative)};
        out.push_back(fuse_predict(image, pair, params).p[0]);
    }
    return out;
}

std::vector<std::size_t> mate_ranks(std::span<const Vec> queries, std::span<const Vec> candidates,
                                    std::span<const std::size_t> mates, std::size_t threads) {
    if (queries.empty() || candidates.empty()) {
        throw Error(ErrorCode::EmptyStore, "retrieval needs non-empty query and candidate sets");
    }
    if (mates.size() != queries.size()) {
        throw Error(ErrorCode::LengthMismatch, "one mate index per query is required");
    }
    std::vector<std::size_t> ranks(queries.size());
    parallel_for(queries.size(), threads, [&](std::size_t q) {
        const std::size_t mate = mates[q];
        if (mate >= candidates.size()) {
            throw Error(ErrorCode::UnknownId, "mate index out of range");
        }
        const double target = cosine(queries[q], candidates[mate]);
        std::size_t rank = 1;
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            if (c == mate) {
                continue;
            }
            const double s = cosine(queries[q], candidates[c]);
            if (s > target || (s == target && c < mate)) {
                ++rank;
            }
        }
        ranks[q] = rank;
    });
    return ranks;
}

std::vector<RecallAtK> recall_at_k(std::span<const std::size_t> ranks, std::span<const std::size_t> ks) {
    if (ranks.empty()) {
        throw Error(ErrorCode::EmptyStore, "recall over zero queries");
    }
    std::vector<RecallAtK> out;
    for (std::size_t k : ks) {
        const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r <= k; });
        out.push_back({k, static_cast<double>(hits) / static_cast<double>(ranks.size())});
    }
    return out;
}

RetrievalReport retrieve(std::span<const Vec> queries, std::span<const Vec> candidates,
                         std::span<const std::pair<std::size_t, std::size_t>> pairs,
                         std::span<const std::size_t> ks, std::size_t threads) {
    if (queries.empty() || candidates.empty()) {
        throw Error(ErrorCode::EmptyStore, "retrieval needs non-empty query and candidate sets");
    }
    if (pairs.empty()) {
        throw Error(ErrorCode::EmptyStore, "retrieval needs at least one matched pair");
    }
    std::vector<Vec> fwd_queries, back_queries;
    std::vector<std::size_t> fwd_mates, back_mates;
    for (const auto& [q, c] : pairs) {
        if (q >= queries.size() || c >= candidates.size()) {
            throw Error(ErrorCode::UnknownId, "pair index out of range");
        }
        fwd_queries.push_back(queries[q]);
        fwd_mates.push_back(c);
        back_queries.push_back(candidates[c]);
        back_mates.push_back(q);
    }
    RetrievalReport report;
    report.query_to_candidate = recall_at_k(mate_ranks(fwd_queries, candidates, fwd_mates, threads), ks);
    report.candidate_to_query = recall_at_k(mate_ranks(back_queries, queries, back_mates, threads), ks);
    return report;
}

}  // namespace concept_align
