// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0

#include "concept_align/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "concept_align/error.hpp"
#include "concept_align/rng.hpp"

namespace concept_align {

namespace {

/// A vector cached with its norm and unit direction.
struct Unit {
    Vec dir;
    double len = 0.0;
};

Unit make_unit(std::span<const double> v) {
    const double len = norm(v);
    if (!(len >= kZeroNormThreshold)) {
        throw Error(ErrorCode::ZeroNorm, "zero vector in alignment objective");
    }
    Unit u{Vec(v.begin(), v.end()), len};
    for (double& x : u.dir) {
        x /= len;
    }
    return u;
}

/// Pulls a gradient w.r.t. a unit direction back to the raw vector:
/// d/dv = (g - (g.u) u) / |v|.
void unit_backward(const Unit& u, std::span<const double> grad_dir, std::span<double> out) {
    const double proj = dot(grad_dir, u.dir);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += (grad_dir[i] - proj * u.dir[i]) / u.len;
    }
}

/// Clamped cosine between unit vectors plus whether the clamp was active.
struct Cos {
    double value;
    bool clamped;
};

Cos unit_cosine(const Unit& a, const Unit& b) {
    const double raw = dot(a.dir, b.dir);
    const double c = std::clamp(raw, -1.0, 1.0);
    return {c, c != raw};
}

struct ImageCache {
    Unit cls;
    std::vector<Unit> regions;
};

struct TextCache {
    Unit cls;
    std::vector<Unit> concepts;
};

ImageCache cache_image(const ImageEmbedding& img) {
    if (img.regions.rows() == 0) {
        throw Error(ErrorCode::EmptyInput, img.id + ": image has no regions");
    }
    ImageCache c{make_unit(img.cls), {}};
    for (std::size_t i = 0; i < img.regions.rows(); ++i) {
        c.regions.push_back(make_unit(img.regions.row(i)));
    }
    return c;
}

TextCache cache_text(const Triplet& t) {
    TextCache c{make_unit(t.text.cls), {}};
    for (const auto& span : t.concepts) {
        c.concepts.push_back(make_unit(concept_embedding(t.text, span)));
    }
    return c;
}

void check_batch(const TripletBatch& batch) {
    if (batch.empty()) {
        throw Error(ErrorCode::EmptyInput, "batch must contain at least one triplet");
    }
    const std::size_t h = batch.front().image.dim();
    for (const auto& t : batch) {
        if (t.image.dim() != h || t.text.dim() != h || t.image.regions.cols() != h ||
            t.text.tokens.cols() != h) {
            throw Error(ErrorCode::DimMismatch, "embedding widths differ within batch");
        }
    }
}

double pairing(std::size_t m, std::size_t n) { return m == n ? 1.0 : -1.0; }

/// Everything the loss needs, computed once and shared with the gradient.
struct Forward {
    std::vector<ImageCache> images;
    std::vector<TextCache> texts;
};

Forward forward(const TripletBatch& batch) {
    check_batch(batch);
    Forward f;
    for (const auto& t : batch) {
        f.images.push_back(cache_image(t.image));
        f.texts.push_back(cache_text(t));
    }
    return f;
}

double it_align_from(const Forward& f, const AlignmentParams& p) {
    const std::size_t b = f.images.size();
    double acc = 0.0;
    for (std::size_t m = 0; m < b; ++m) {
        for (std::size_t n = 0; n < b; ++n) {
            const double c = unit_cosine(f.images[m].cls, f.texts[n].cls).value;
            acc += log_sigmoid(pairing(m, n) * (p.t_g * c - p.b_g));
        }
    }
    return -acc / static_cast<double>(b);
}

/// S(I_m, T_n) with the winning region per concept column.
double similarity_from(const ImageCache& img, const TextCache& txt, const AlignmentParams& p,
                       std::vector<std::size_t>* winners) {
    const std::size_t w = txt.concepts.size();
    double acc = 0.0;
    if (winners) {
        winners->assign(w, 0);
    }
    // For t_l > 0, A_ij is increasing in a_ij, so the column max can be found
    // on the cosines and log-sigmoid evaluated once per column.
    const bool monotone = p.t_l > 0.0;
    for (std::size_t j = 0; j < w; ++j) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < img.regions.size(); ++i) {
            const double a = unit_cosine(img.regions[i], txt.concepts[j]).value;
            const double v = monotone ? a : log_sigmoid(p.t_l * a - p.b_l);
            if (v > best) {
                best = v;
                best_i = i;
            }
        }
        if (monotone) {
            best = log_sigmoid(p.t_l * best - p.b_l);
        }
        acc += best;
        if (winners) {
            (*winners)[j] = best_i;
        }
    }
    return acc / static_cast<double>(w);
}

double rc_align_from(const Forward& f, const AlignmentParams& p) {
    const std::size_t b = f.images.size();
    double acc = 0.0;
    for (std::size_t m = 0; m < b; ++m) {
        for (std::size_t n = 0; n < b; ++n) {
            if (f.texts[n].concepts.empty()) {
                continue;
            }
            acc += pairing(m, n) * similarity_from(f.images[m], f.texts[n], p, nullptr);
        }
    }
    return -acc / static_cast<double>(b);
}

}  // namespace

double it_align_loss(const TripletBatch& batch, const AlignmentParams& params) {
    check_batch(batch);
    Forward f;
    for (const auto& t : batch) {
        f.images.push_back({make_unit(t.image.cls), {}});
        f.texts.push_back({make_unit(t.text.cls), {}});
    }
    return it_align_from(f, params);
}

Vec concept_embedding(const TextEmbedding& text, const ConceptSpan& span) {
    validate_span(span, text.num_tokens());
    Vec out(text.tokens.cols(), 0.0);
    for (std::size_t v : span.token_indices) {
        const auto row = text.tokens.row(v - 1);
        for (std::size_t c = 0; c < out.size(); ++c) {
            out[c] += row[c];
        }
    }
    const double inv = 1.0 / static_cast<double>(span.token_indices.size());
    for (double& x : out) {
        x *= inv;
    }
    return out;
}

Mat region_concept_matrix(const ImageEmbedding& image, std::span<const Vec> concept_embs,
                          const AlignmentParams& params) {
    if (concept_embs.empty() || image.regions.rows() == 0) {
        throw Error(ErrorCode::EmptyInput, "region-concept matrix needs r >= 1 and w >= 1");
    }
    Mat a(image.regions.rows(), concept_embs.size());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            a(i, j) = log_sigmoid(params.t_l * cosine(image.regions.row(i), concept_embs[j]) - params.b_l);
        }
    }
    return a;
}

double pair_similarity_score(const Mat& a) {
    if (a.rows() == 0 || a.cols() == 0) {
        throw Error(ErrorCode::EmptyInput, "similarity score of an empty matrix");
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
        double best = a(0, j);
        for (std::size_t i = 1; i < a.rows(); ++i) {
            best = std::max(best, a(i, j));
        }
        acc += best;
    }
    return acc / static_cast<double>(a.cols());
}

double rc_align_loss(const TripletBatch& batch, const AlignmentParams& params) {
    return rc_align_from(forward(batch), params);
}

LossBreakdown total_loss(const TripletBatch& batch, const AlignmentParams& params) {
    const Forward f = forward(batch);
    LossBreakdown out;
    out.alpha = params.alpha;
    out.it_align = it_align_from(f, params);
    out.rc_align = rc_align_from(f, params);
    out.total = out.it_align + params.alpha * out.rc_align;
    return out;
}

LossAndGradient total_loss_grad(const TripletBatch& batch, const AlignmentParams& p) {
    const Forward f = forward(batch);
    const std::size_t b = batch.size();
    const double inv_b = 1.0 / static_cast<double>(b);

    LossAndGradient out;
    out.loss.alpha = p.alpha;
    auto& g = out.grad;

    // Gradients w.r.t. unit directions, pulled back to raw vectors at the end.
    std::vector<Vec> d_x(b), d_y(b);
    std::vector<std::vector<Vec>> d_regions(b), d_concepts(b);
    for (std::size_t m = 0; m < b; ++m) {
        const std::size_t h = batch[m].image.dim();
        d_x[m].assign(h, 0.0);
        d_y[m].assign(h, 0.0);
        d_regions[m].assign(f.images[m].regions.size(), Vec(h, 0.0));
        d_concepts[m].assign(f.texts[m].concepts.size(), Vec(h, 0.0));
    }

    // IT-Align: term log sigma(u), u = z (t_g c - b_g), d/du log sigma(u) = sigma(-u).
    double it_acc = 0.0;
    for (std::size_t m = 0; m < b; ++m) {
        for (std::size_t n = 0; n < b; ++n) {
            const double z = pairing(m, n);
            const Cos c = unit_cosine(f.images[m].cls, f.texts[n].cls);
            const double u = z * (p.t_g * c.value - p.b_g);
            it_acc += log_sigmoid(u);
            const double dl_du = -inv_b * sigmoid(-u);
            g.t_g += dl_du * z * c.value;
            g.b_g -= dl_du * z;
            if (!c.clamped) {
                const double coef = dl_du * z * p.t_g;
                const auto& x = f.images[m].cls.dir;
                const auto& y = f.texts[n].cls.dir;
                for (std::size_t k = 0; k < x.size(); ++k) {
                    d_x[m][k] += coef * y[k];
                    d_y[n][k] += coef * x[k];
                }
            }
        }
    }
    out.loss.it_align = -it_acc * inv_b;

    // RC-Align: dL/dS_mn = -z/|B|; S averages the column maxima of A.
    double rc_acc = 0.0;
    std::vector<std::size_t> winners;
    for (std::size_t m = 0; m < b; ++m) {
        for (std::size_t n = 0; n < b; ++n) {
            const auto& txt = f.texts[n];
            if (txt.concepts.empty()) {
                continue;
            }
            const double z = pairing(m, n);
            const auto& img = f.images[m];
            rc_acc += z * similarity_from(img, txt, p, &winners);
            const double dl_da_entry = -z * inv_b / static_cast<double>(txt.concepts.size());
            for (std::size_t j = 0; j < txt.concepts.size(); ++j) {
                const std::size_t i = winners[j];
                const Cos a = unit_cosine(img.regions[i], txt.concepts[j]);
                const double u = p.t_l * a.value - p.b_l;
                // Scaled by alpha since these feed the total loss.
                const double dl_du = p.alpha * dl_da_entry * sigmoid(-u);
                g.t_l += dl_du * a.value;
                g.b_l -= dl_du;
                if (!a.clamped) {
                    const double coef = dl_du * p.t_l;
                    const auto& rdir = img.regions[i].dir;
                    const auto& cdir = txt.concepts[j].dir;
                    for (std::size_t k = 0; k < rdir.size(); ++k) {
                        d_regions[m][i][k] += coef * cdir[k];
                        d_concepts[n][j][k] += coef * rdir[k];
                    }
                }
            }
        }
    }
    out.loss.rc_align = -rc_acc * inv_b;
    out.loss.total = out.loss.it_align + p.alpha * out.loss.rc_align;
    g.alpha = out.loss.rc_align;

    g.triplets.resize(b);
    for (std::size_t m = 0; m < b; ++m) {
        const auto& t = batch[m];
        auto& tg = g.triplets[m];
        const std::size_t h = t.image.dim();
        tg.image_cls.assign(h, 0.0);
        tg.text_cls.assign(h, 0.0);
        tg.regions = Mat(t.image.regions.rows(), h);
        tg.tokens = Mat(t.text.tokens.rows(), h);
        unit_backward(f.images[m].cls, d_x[m], tg.image_cls);
        unit_backward(f.texts[m].cls, d_y[m], tg.text_cls);
        for (std::size_t i = 0; i < f.images[m].regions.size(); ++i) {
            unit_backward(f.images[m].regions[i], d_regions[m][i], tg.regions.row(i));
        }
        for (std::size_t j = 0; j < t.concepts.size(); ++j) {
            Vec d_concept(h, 0.0);
            unit_backward(f.texts[m].concepts[j], d_concepts[m][j], d_concept);
            const auto& idx = t.concepts[j].token_indices;
            const double share = 1.0 / static_cast<double>(idx.size());
            for (std::size_t v : idx) {
                auto row = tg.tokens.row(v - 1);
                for (std::size_t k = 0; k < h; ++k) {
                    row[k] += share * d_concept[k];
                }
            }
        }
    }
    return out;
}

double min_argmax_gap(const TripletBatch& batch, const AlignmentParams& p) {
    const Forward f = forward(batch);
    double gap = std::numeric_limits<double>::infinity();
    for (const auto& img : f.images) {
        if (img.regions.size() < 2) {
            continue;
        }
        for (const auto& txt : f.texts) {
            for (const auto& concept_dir : txt.concepts) {
                double first = -std::numeric_limits<double>::infinity();
                double second = first;
                for (const auto& region : img.regions) {
                    const double v = log_sigmoid(p.t_l * unit_cosine(region, concept_dir).value - p.b_l);
                    if (v > first) {
                        second = first;
                        first = v;
                    } else if (v > second) {
                        second = v;
                    }
                }
                gap = std::min(gap, first - second);
            }
        }
    }
    return gap;
}

GradCheckReport gradient_check(const TripletBatch& batch, const AlignmentParams& params, double step) {
    const auto analytic = total_loss_grad(batch, params);
    GradCheckReport report;
    auto compare = [&](double a, double numeric) {
        const double scale = std::max({std::abs(a), std::abs(numeric), 1e-3});
        const double err = std::abs(a - numeric) / scale;
        ++report.components;
        if (err > report.max_error || !std::isfinite(err)) {
            report.max_error = err;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    };
    auto central = [&](auto&& mutate) {
        TripletBatch plus = batch;
        AlignmentParams pp = params;
        mutate(plus, pp, step);
        const double up = total_loss(plus, pp).total;
        TripletBatch minus = batch;
        AlignmentParams pm = params;
        mutate(minus, pm, -step);
        const double down = total_loss(minus, pm).total;
        return (up - down) / (2.0 * step);
    };

    for (std::size_t m = 0; m < batch.size(); ++m) {
        const auto& tg = analytic.grad.triplets[m];
        for (std::size_t k = 0; k < batch[m].image.cls.size(); ++k) {
            compare(tg.image_cls[k],
                    central([&](TripletBatch& bt, AlignmentParams&, double d) { bt[m].image.cls[k] += d; }));
            compare(tg.text_cls[k],
                    central([&](TripletBatch& bt, AlignmentParams&, double d) { bt[m].text.cls[k] += d; }));
        }
        for (std::size_t i = 0; i < tg.regions.rows(); ++i) {
            for (std::size_t k = 0; k < tg.regions.cols(); ++k) {
                compare(tg.regions(i, k), central([&](TripletBatch& bt, AlignmentParams&, double d) {
                            bt[m].image.regions(i, k) += d;
                        }));
            }
        }
        for (std::size_t i = 0; i < tg.tokens.rows(); ++i) {
            for (std::size_t k = 0; k < tg.tokens.cols(); ++k) {
                compare(tg.tokens(i, k), central([&](TripletBatch& bt, AlignmentParams&, double d) {
                            bt[m].text.tokens(i, k) += d;
                        }));
            }
        }
    }
    compare(analytic.grad.t_g, central([](TripletBatch&, AlignmentParams& q, double d) { q.t_g += d; }));
    compare(analytic.grad.b_g, central([](TripletBatch&, AlignmentParams& q, double d) { q.b_g += d; }));
    compare(analytic.grad.t_l, central([](TripletBatch&, AlignmentParams& q, double d) { q.t_l += d; }));
    compare(analytic.grad.b_l, central([](TripletBatch&, AlignmentParams& q, double d) { q.b_l += d; }));
    return report;
}

TripletBatch random_batch(std::size_t batch_size, std::size_t r, std::size_t s, std::size_t max_concepts,
                          std::size_t h, unsigned long long seed) {
    if (batch_size == 0 || r == 0 || s == 0 || h == 0 || max_concepts == 0) {
        throw Error(ErrorCode::InvalidArgument, "random batch dimensions must be positive");
    }
    Rng rng(seed);
    auto fill = [&](std::span<double> xs) {
        for (double& x : xs) {
            x = rng.normal();
        }
    };
    TripletBatch batch;
    for (std::size_t m = 0; m < batch_size; ++m) {
        Triplet t;
        t.image.id = "img" + std::to_string(m);
        t.text.id = "txt" + std::to_string(m);
        t.image.cls.resize(h);
        t.text.cls.resize(h);
        t.image.regions = Mat(r, h);
        t.text.tokens = Mat(s, h);
        fill(t.image.cls);
        fill(t.text.cls);
        fill(t.image.regions.values());
        fill(t.text.tokens.values());
        const std::size_t w = 1 + rng.below(max_concepts);
        for (std::size_t j = 0; j < w; ++j) {
            ConceptSpan span{"C" + std::to_string(m) + "_" + std::to_string(j), {}};
            for (std::size_t v = 1; v <= s; ++v) {
                if (rng.uniform() < 0.4) {
                    span.token_indices.push_back(v);
                }
            }
            if (span.token_indices.empty()) {
                span.token_indices.push_back(1 + rng.below(s));
            }
            t.concepts.push_back(std::move(span));
        }
        batch.push_back(std::move(t));
    }
    return batch;
}

}  // namespace concept_align
