// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0

#include "concept_align/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "concept_align/error.hpp"
#include "concept_align/parallel.hpp"

namespace concept_align {

Vec concept_similarity_features(const ImageEmbedding& image, std::span<const Vec> concept_embs) {
    Vec out;
    out.reserve(concept_embs.size());
    for (const auto& g : concept_embs) {
        out.push_back(cosine(image.cls, g));
    }
    return out;
}

Vec fused_similarity_features(const ImageEmbedding& image, std::span<const Vec> concept_embs,
                              const AlignmentParams& params) {
    const std::size_t k = params.effective_k(image.regions.rows());
    Vec out;
    out.reserve(concept_embs.size());
    for (const auto& g : concept_embs) {
        Vec pooled(image.regions.cols(), 0.0);
        for (std::size_t i : topk_regions(image, g, k)) {
            const auto row = image.regions.row(i);
            for (std::size_t c = 0; c < pooled.size(); ++c) {
                pooled[c] += row[c] / static_cast<double>(k);
            }
        }
        out.push_back(params.beta * cosine(pooled, g) + (1.0 - params.beta) * cosine(image.cls, g));
    }
    return out;
}

namespace {

/// Distinct (features, class) rows with their share of the sample count.
struct WeightedRows {
    Mat x;
    std::vector<std::size_t> y;
    Vec weight;
};

WeightedRows canonical_rows(const Mat& features, std::span<const std::size_t> labels) {
    const std::size_t n = features.rows();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto less = [&](std::size_t a, std::size_t b) {
        if (labels[a] != labels[b]) {
            return labels[a] < labels[b];
        }
        const auto ra = features.row(a);
        const auto rb = features.row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    };
    std::sort(order.begin(), order.end(), less);

    WeightedRows out;
    out.x = Mat(0, features.cols());
    std::vector<std::size_t> counts;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = order[i];
        if (i > 0 && !less(order[i - 1], idx) && !less(idx, order[i - 1])) {
            ++counts.back();
            continue;
        }
        out.x.append_row(features.row(idx));
        out.y.push_back(labels[idx]);
        counts.push_back(1);
    }
    for (std::size_t c : counts) {
        out.weight.push_back(static_cast<double>(c) / static_cast<double>(n));
    }
    return out;
}

struct Objective {
    const WeightedRows& data;
    std::size_t n_classes;
    double inv_c;

    /// Objective value; fills gradients when given.
    double eval(const Mat& w, const Vec& b, Mat* dw, Vec* db) const {
        if (dw) {
            *dw = Mat(w.rows(), w.cols());
            *db = Vec(n_classes, 0.0);
        }
        double loss = 0.0;
        Vec logits(n_classes);
        for (std::size_t i = 0; i < data.x.rows(); ++i) {
            const auto x = data.x.row(i);
            for (std::size_t c = 0; c < n_classes; ++c) {
                double s = b[c];
                for (std::size_t j = 0; j < x.size(); ++j) {
                    s += x[j] * w(j, c);
                }
                logits[c] = s;
            }
            const double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double s : logits) {
                z += std::exp(s - mx);
            }
            const double lse = mx + std::log(z);
            loss += data.weight[i] * (lse - logits[data.y[i]]);
            if (dw) {
                for (std::size_t c = 0; c < n_classes; ++c) {
                    const double r = data.weight[i] * (std::exp(logits[c] - lse) - (c == data.y[i] ? 1.0 : 0.0));
                    (*db)[c] += r;
                    for (std::size_t j = 0; j < x.size(); ++j) {
                        (*dw)(j, c) += r * x[j];
                    }
                }
            }
        }
        double sq = 0.0;
        for (double v : w.values()) {
            sq += v * v;
        }
        if (dw) {
            auto g = dw->values();
            auto wv = w.values();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += inv_c * wv[i];
            }
        }
        return loss + 0.5 * inv_c * sq;
    }
};

double max_abs(const Mat& dw, const Vec& db) {
    double m = 0.0;
    for (double v : dw.values()) m = std::max(m, std::abs(v));
    for (double v : db) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace

ConceptBottleneck train_cbm(const Mat& features, std::span<const std::string> labels,
                            std::span<const std::string> concept_ids, const CbmFitOptions& options,
                            CbmFitReport* report) {
    if (features.rows() == 0) {
        throw Error(ErrorCode::EmptyInput, "CBM training needs at least one sample");
    }
    if (labels.size() != features.rows()) {
        throw Error(ErrorCode::LengthMismatch, "one label per feature row is required");
    }
    if (concept_ids.size() != features.cols()) {
        throw Error(ErrorCode::DimMismatch, "one concept id per feature column is required");
    }
    if (!(options.l2_inverse_strength > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "l2_inverse_strength must be > 0");
    }
    require_finite(features.values(), "CBM features");

    ConceptBottleneck cbm;
    cbm.concept_ids.assign(concept_ids.begin(), concept_ids.end());
    cbm.class_ids.assign(labels.begin(), labels.end());
    std::sort(cbm.class_ids.begin(), cbm.class_ids.end());
    cbm.class_ids.erase(std::unique(cbm.class_ids.begin(), cbm.class_ids.end()), cbm.class_ids.end());
    if (cbm.class_ids.size() < 2) {
        throw Error(ErrorCode::SingleClass, "CBM training needs at least two distinct labels");
    }
    std::vector<std::size_t> y;
    y.reserve(labels.size());
    for (const auto& l : labels) {
        y.push_back(static_cast<std::size_t>(
            std::lower_bound(cbm.class_ids.begin(), cbm.class_ids.end(), l) - cbm.class_ids.begin()));
    }

    const auto rows = canonical_rows(features, y);
    const std::size_t k = cbm.class_ids.size();
    const Objective objective{rows, k, 1.0 / options.l2_inverse_strength};

    Mat w(features.cols(), k);
    Vec b(k, 0.0);
    Mat dw;
    Vec db;
    double f = objective.eval(w, b, &dw, &db);
    double eta = 1.0;
    std::size_t step = 0;
    double gmax = max_abs(dw, db);
    while (step < options.max_steps && gmax >= options.tolerance) {
        double gsq = 0.0;
        for (double v : dw.values()) gsq += v * v;
        for (double v : db) gsq += v * v;
        Mat w_try;
        Vec b_try;
        double f_try = 0.0;
        for (int halvings = 0;; ++halvings) {
            w_try = w;
            b_try = b;
            auto wv = w_try.values();
            auto gv = dw.values();
            for (std::size_t i = 0; i < wv.size(); ++i) wv[i] -= eta * gv[i];
            for (std::size_t c = 0; c < k; ++c) b_try[c] -= eta * db[c];
            f_try = objective.eval(w_try, b_try, nullptr, nullptr);
            if (f_try <= f - 1e-4 * eta * gsq || halvings >= 60) {
                break;
            }
            eta *= 0.5;
        }
        if (!std::isfinite(f_try)) {
            throw Error(ErrorCode::NonFinite, "CBM objective became non-finite at step " + std::to_string(step));
        }
        w = std::move(w_try);
        b = std::move(b_try);
        f = objective.eval(w, b, &dw, &db);
        gmax = max_abs(dw, db);
        eta = std::min(eta * 2.0, 1e3);
        ++step;
    }
    cbm.weights = std::move(w);
    cbm.bias = std::move(b);
    if (report) {
        *report = {step, f, gmax};
    }
    return cbm;
}

Vec cbm_predict_proba(const ConceptBottleneck& cbm, std::span<const double> features) {
    if (features.size() != cbm.weights.rows()) {
        throw Error(ErrorCode::DimMismatch, "feature width does not match the CBM");
    }
    Vec logits(cbm.bias);
    for (std::size_t c = 0; c < logits.size(); ++c) {
        for (std::size_t j = 0; j < features.size(); ++j) {
            logits[c] += features[j] * cbm.weights(j, c);
        }
    }
    return softmax(logits);
}

std::size_t cbm_predict(const ConceptBottleneck& cbm, std::span<const double> features) {
    return argmax(cbm_predict_proba(cbm, features));
}

namespace {

std::size_t class_column(const ConceptBottleneck& cbm, const std::string& class_id) {
    const auto it = std::find(cbm.class_ids.begin(), cbm.class_ids.end(), class_id);
    if (it == cbm.class_ids.end()) {
        throw Error(ErrorCode::UnknownClass, "class '" + class_id + "' is not in the CBM");
    }
    return static_cast<std::size_t>(it - cbm.class_ids.begin());
}

std::vector<RankedConcept> rank(std::vector<RankedConcept> items, std::size_t top_n) {
    std::sort(items.begin(), items.end(), [](const RankedConcept& a, const RankedConcept& b) {
        if (a.weight != b.weight) {
            return a.weight > b.weight;
        }
        return a.concept_id < b.concept_id;
    });
    if (top_n > 0 && items.size() > top_n) {
        items.resize(top_n);
    }
    return items;
}

}  // namespace

std::vector<RankedConcept> concept_class_association(const ConceptBottleneck& cbm, const std::string& class_id,
                                                     std::size_t top_n) {
    const std::size_t col = class_column(cbm, class_id);
    std::vector<RankedConcept> items;
    for (std::size_t j = 0; j < cbm.concept_ids.size(); ++j) {
        items.push_back({cbm.concept_ids[j], cbm.weights(j, col)});
    }
    return rank(std::move(items), top_n);
}

std::vector<RankedConcept> disease_level_inspection(std::span<const ConceptBottleneck> cbms,
                                                    const std::string& class_id, std::size_t top_n) {
    if (cbms.empty()) {
        throw Error(ErrorCode::EmptyInput, "no CBMs to average");
    }
    const auto& vocab = cbms.front().concept_ids;
    for (const auto& cbm : cbms) {
        if (cbm.concept_ids != vocab) {
            throw Error(ErrorCode::VocabMismatch, "CBMs do not share one concept vocabulary");
        }
    }
    std::vector<RankedConcept> items;
    for (std::size_t j = 0; j < vocab.size(); ++j) {
        items.push_back({vocab[j], 0.0});
    }
    for (const auto& cbm : cbms) {
        const std::size_t col = class_column(cbm, class_id);
        for (std::size_t j = 0; j < vocab.size(); ++j) {
            items[j].weight += cbm.weights(j, col);
        }
    }
    for (auto& item : items) {
        item.weight /= static_cast<double>(cbms.size());
    }
    return rank(std::move(items), top_n);
}

Vec region_saliency(const ImageEmbedding& image, std::span<const double> concept_emb) {
    Vec out(image.regions.rows());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = cosine(image.regions.row(i), concept_emb);
    }
    return out;
}

std::vector<std::vector<bool>> concept_presence(std::span<const ImageEmbedding> images,
                                                std::span<const ConceptPrompt> prompts,
                                                const AlignmentParams& params, double threshold,
                                                std::size_t threads) {
    std::vector<std::vector<bool>> present(images.size());
    parallel_for(images.size(), threads, [&](std::size_t i) {
        const auto probs = annotate_concepts(images[i], prompts, params);
        std::vector<bool> row(probs.size());
        for (std::size_t j = 0; j < probs.size(); ++j) {
            row[j] = probs[j] >= threshold;
        }
        present[i] = std::move(row);
    });
    return present;
}

ConceptDiffReport concept_presence_difference(std::span<const ImageEmbedding> pos_images,
                                              std::span<const ImageEmbedding> neg_images,
                                              std::span<const ConceptPrompt> prompts,
                                              const AlignmentParams& params, double presence_threshold,
                                              std::size_t threads) {
    if (pos_images.empty() || neg_images.empty()) {
        throw Error(ErrorCode::EmptySet, "both image sets must be non-empty");
    }
    const auto pos = concept_presence(pos_images, prompts, params, presence_threshold, threads);
    const auto neg = concept_presence(neg_images, prompts, params, presence_threshold, threads);
    ConceptDiffReport report;
    report.m = pos_images.size();
    report.n = neg_images.size();
    for (std::size_t j = 0; j < prompts.size(); ++j) {
        ConceptDiffRow row;
        row.cui = prompts[j].cui;
        for (const auto& p : pos) row.n_pos += p[j] ? 1 : 0;
        for (const auto& p : neg) row.n_neg += p[j] ? 1 : 0;
        row.prop_pos = static_cast<double>(row.n_pos) / static_cast<double>(report.m);
        row.prop_neg = static_cast<double>(row.n_neg) / static_cast<double>(report.n);
        row.d = row.prop_pos - row.prop_neg;
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::vector<ConceptDiffRow> sorted_by_d(const ConceptDiffReport& report) {
    auto rows = report.rows;
    std::stable_sort(rows.begin(), rows.end(), [](const ConceptDiffRow& a, const ConceptDiffRow& b) {
        if (a.d != b.d) {
            return a.d > b.d;
        }
        return a.cui < b.cui;
    });
    return rows;
}

}  // namespace concept_align
