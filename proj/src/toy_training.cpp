// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0

#include "concept_align/toy_training.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "concept_align/error.hpp"
#include "concept_align/rng.hpp"

namespace concept_align {

namespace {

void fill_unit_gaussian(Rng& rng, std::span<double> row) {
    double len = 0.0;
    do {
        for (double& x : row) {
            x = rng.normal();
        }
        len = norm(row);
    } while (len < 1e-6);
    for (double& x : row) {
        x /= len;
    }
}

Mat unit_rows(Rng& rng, std::size_t rows, std::size_t cols) {
    Mat m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        fill_unit_gaussian(rng, m.row(r));
    }
    return m;
}

/// Random permutation of [0, n) by Fisher-Yates on our own RNG.
std::vector<std::size_t> permutation(Rng& rng, std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
        std::swap(p[i - 1], p[rng.below(i)]);
    }
    return p;
}

/// Fills `slots` rows: planted rows copy their prototype, the rest copy a
/// random background vector; then isotropic noise is added everywhere.
Mat place_slots(Rng& rng, std::size_t n_slots, const Mat& prototypes, const Mat& background,
                std::span<const std::size_t> concept_ids, std::span<const std::size_t> positions,
                double sigma) {
    Mat out(n_slots, prototypes.cols());
    std::vector<bool> planted(n_slots, false);
    for (std::size_t j = 0; j < concept_ids.size(); ++j) {
        const auto src = prototypes.row(concept_ids[j]);
        std::copy(src.begin(), src.end(), out.row(positions[j]).begin());
        planted[positions[j]] = true;
    }
    for (std::size_t i = 0; i < n_slots; ++i) {
        if (!planted[i]) {
            const auto src = background.row(rng.below(background.rows()));
            std::copy(src.begin(), src.end(), out.row(i).begin());
        }
    }
    if (sigma > 0.0) {
        for (double& x : out.values()) {
            x += sigma * rng.normal();
        }
    }
    return out;
}

Vec project(std::span<const double> raw, const Mat& proj) {
    Vec out(proj.cols(), 0.0);
    for (std::size_t d = 0; d < raw.size(); ++d) {
        const double x = raw[d];
        if (x == 0.0) {
            continue;
        }
        const auto row = proj.row(d);
        for (std::size_t c = 0; c < out.size(); ++c) {
            out[c] += x * row[c];
        }
    }
    return out;
}

Mat project_rows(const Mat& raw, const Mat& proj) {
    Mat out(raw.rows(), proj.cols());
    for (std::size_t r = 0; r < raw.rows(); ++r) {
        const Vec p = project(raw.row(r), proj);
        std::copy(p.begin(), p.end(), out.row(r).begin());
    }
    return out;
}

/// dW += raw^T * grad for a single row pair.
void accumulate_outer(Mat& d_proj, std::span<const double> raw, std::span<const double> grad) {
    for (std::size_t d = 0; d < raw.size(); ++d) {
        auto row = d_proj.row(d);
        for (std::size_t c = 0; c < grad.size(); ++c) {
            row[c] += raw[d] * grad[c];
        }
    }
}

}  // namespace

void validate_spec(const SyntheticSpec& spec) {
    auto fail = [](const std::string& why) { throw Error(ErrorCode::SpecInvalid, why); };
    if (spec.n_classes < 2) fail("need at least two classes");
    if (spec.n_concepts < spec.n_classes) fail("need n_concepts >= n_classes");
    if (spec.concepts_per_class < 1 || spec.concepts_per_class >= spec.n_concepts) {
        fail("concepts_per_class must lie in [1, n_concepts)");
    }
    if (spec.concepts_per_class > spec.regions || spec.concepts_per_class > spec.tokens) {
        fail("concepts_per_class exceeds the number of region or token slots");
    }
    if (spec.samples_per_class < 1) fail("need at least one sample per class");
    if (spec.d_img_raw < 1 || spec.d_txt_raw < 1) fail("raw dimensions must be positive");
    if (spec.n_background < 1) fail("need at least one background vector");
    if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) fail("noise_sigma must be >= 0");
}

std::string synthetic_cui(std::size_t concept_index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "SYN%04zu", concept_index);
    return buf;
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec, Split split) {
    validate_spec(spec);
    SyntheticDataset ds;
    ds.spec = spec;
    ds.split = split;

    Rng world(derive_seed(spec.seed, 0));
    ds.image_prototypes = unit_rows(world, spec.n_concepts, spec.d_img_raw);
    ds.text_prototypes = unit_rows(world, spec.n_concepts, spec.d_txt_raw);
    ds.image_background = unit_rows(world, spec.n_background, spec.d_img_raw);
    ds.text_background = unit_rows(world, spec.n_background, spec.d_txt_raw);

    ds.class_concepts.resize(spec.n_classes);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        for (std::size_t j = 0; j < spec.concepts_per_class; ++j) {
            ds.class_concepts[c].push_back((c + j) % spec.n_concepts);
        }
    }

    Rng rng(derive_seed(spec.seed, 1 + static_cast<std::uint64_t>(split)));
    const std::size_t total = spec.n_classes * spec.samples_per_class;
    const char* prefix = split == Split::Train ? "train" : "heldout";
    for (std::size_t idx = 0; idx < total; ++idx) {
        const std::size_t cls = idx % spec.n_classes;
        const auto& concepts = ds.class_concepts[cls];
        RawTriplet t;
        t.label = static_cast<int>(cls);
        t.planted_concepts = concepts;
        const auto region_slots = permutation(rng, spec.regions);
        const auto token_slots = permutation(rng, spec.tokens);
        std::vector<std::size_t> region_pos(region_slots.begin(), region_slots.begin() + concepts.size());
        std::vector<std::size_t> token_pos(token_slots.begin(), token_slots.begin() + concepts.size());
        t.planted_regions = region_pos;

        char id[64];
        std::snprintf(id, sizeof(id), "%s-%05zu", prefix, idx);
        t.image.id = std::string("img-") + id;
        t.text.id = std::string("txt-") + id;
        t.image.regions = place_slots(rng, spec.regions, ds.image_prototypes, ds.image_background, concepts,
                                      region_pos, spec.noise_sigma);
        t.text.tokens = place_slots(rng, spec.tokens, ds.text_prototypes, ds.text_background, concepts,
                                    token_pos, spec.noise_sigma);
        for (std::size_t j = 0; j < concepts.size(); ++j) {
            t.concepts.push_back({synthetic_cui(concepts[j]), {token_pos[j] + 1}});
        }
        // Spans must be listed by position for reproducible manifests.
        std::sort(t.concepts.begin(), t.concepts.end(),
                  [](const ConceptSpan& a, const ConceptSpan& b) { return a.token_indices < b.token_indices; });
        ds.triplets.push_back(std::move(t));
    }
    return ds;
}

ToyEncoder init_encoder(std::size_t d_img_raw, std::size_t d_txt_raw, std::size_t h, std::uint64_t seed) {
    if (h == 0 || d_img_raw == 0 || d_txt_raw == 0) {
        throw Error(ErrorCode::InvalidArgument, "encoder dimensions must be positive");
    }
    Rng rng(derive_seed(seed, 0xE1C0DE));
    ToyEncoder enc{Mat(d_img_raw, h), Mat(d_txt_raw, h)};
    const double bi = 1.0 / std::sqrt(static_cast<double>(d_img_raw));
    const double bt = 1.0 / std::sqrt(static_cast<double>(d_txt_raw));
    for (double& x : enc.image_proj.values()) {
        x = rng.uniform(-bi, bi);
    }
    for (double& x : enc.text_proj.values()) {
        x = rng.uniform(-bt, bt);
    }
    return enc;
}

ImageEmbedding encode_image(const ToyEncoder& enc, const RawImage& raw) {
    if (raw.regions.cols() != enc.image_proj.rows()) {
        throw Error(ErrorCode::DimMismatch, raw.id + ": raw image width does not match encoder");
    }
    return {raw.id, project(mean_pool(raw.regions), enc.image_proj), project_rows(raw.regions, enc.image_proj)};
}

TextEmbedding encode_text(const ToyEncoder& enc, const RawText& raw) {
    if (raw.tokens.cols() != enc.text_proj.rows()) {
        throw Error(ErrorCode::DimMismatch, raw.id + ": raw text width does not match encoder");
    }
    return {raw.id, project(mean_pool(raw.tokens), enc.text_proj), project_rows(raw.tokens, enc.text_proj)};
}

TripletBatch encode_dataset(const ToyEncoder& enc, const SyntheticDataset& dataset) {
    TripletBatch out;
    out.reserve(dataset.triplets.size());
    for (const auto& t : dataset.triplets) {
        out.push_back({encode_image(enc, t.image), encode_text(enc, t.text), t.concepts});
    }
    return out;
}

TrainResult train(const TrainConfig& config, const SyntheticDataset& dataset) {
    if (dataset.triplets.empty()) {
        throw Error(ErrorCode::EmptyInput, "training dataset is empty");
    }
    if (!(config.learning_rate >= 0.0) || config.steps < 1) {
        throw Error(ErrorCode::InvalidArgument, "learning_rate must be >= 0 and steps >= 1");
    }
    const auto& spec = dataset.spec;
    TrainResult result;
    result.encoder = init_encoder(spec.d_img_raw, spec.d_txt_raw, config.h, config.seed);
    auto& enc = result.encoder;
    auto& params = result.params;
    params.t_g = config.t_g;
    params.b_g = config.b_g;
    params.t_l = config.t_l;
    params.b_l = config.b_l;
    params.alpha = config.alpha;
    validate_params(params);

    const std::size_t n = dataset.triplets.size();
    const std::size_t batch_size = config.batch_size == 0 ? n : std::min(config.batch_size, n);
    Rng batch_rng(derive_seed(config.seed, 0xBA7C));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = n;

    Mat vel_img(enc.image_proj.rows(), enc.image_proj.cols());
    Mat vel_txt(enc.text_proj.rows(), enc.text_proj.cols());
    double vel_scalars[4] = {0.0, 0.0, 0.0, 0.0};

    for (std::size_t step = 0; step < config.steps; ++step) {
        std::vector<std::size_t> members;
        if (batch_size == n) {
            members = order;
        } else {
            for (std::size_t i = 0; i < batch_size; ++i) {
                if (cursor == n) {
                    order = permutation(batch_rng, n);
                    cursor = 0;
                }
                members.push_back(order[cursor++]);
            }
        }
        TripletBatch batch;
        batch.reserve(members.size());
        for (std::size_t idx : members) {
            const auto& t = dataset.triplets[idx];
            batch.push_back({encode_image(enc, t.image), encode_text(enc, t.text), t.concepts});
        }

        AlignmentParams step_params = params;
        if (step < config.warmup_steps_without_rc) {
            step_params.alpha = 0.0;
        }
        const auto lg = total_loss_grad(batch, step_params);
        result.trace.push_back({step, lg.loss.it_align, lg.loss.rc_align, lg.loss.total});
        if (!std::isfinite(lg.loss.total)) {
            throw Error(ErrorCode::Divergence, "loss became non-finite at step " + std::to_string(step));
        }

        Mat d_img(enc.image_proj.rows(), enc.image_proj.cols());
        Mat d_txt(enc.text_proj.rows(), enc.text_proj.cols());
        for (std::size_t b = 0; b < members.size(); ++b) {
            const auto& raw = dataset.triplets[members[b]];
            const auto& g = lg.grad.triplets[b];
            accumulate_outer(d_img, mean_pool(raw.image.regions), g.image_cls);
            for (std::size_t i = 0; i < raw.image.regions.rows(); ++i) {
                accumulate_outer(d_img, raw.image.regions.row(i), g.regions.row(i));
            }
            accumulate_outer(d_txt, mean_pool(raw.text.tokens), g.text_cls);
            for (std::size_t i = 0; i < raw.text.tokens.rows(); ++i) {
                accumulate_outer(d_txt, raw.text.tokens.row(i), g.tokens.row(i));
            }
        }

        const double lr = config.learning_rate;
        const double mu = config.momentum;
        auto update = [&](Mat& w, Mat& vel, const Mat& d) {
            auto wv = w.values();
            auto vv = vel.values();
            auto dv = d.values();
            for (std::size_t i = 0; i < wv.size(); ++i) {
                vv[i] = mu * vv[i] + dv[i];
                wv[i] -= lr * vv[i];
            }
        };
        update(enc.image_proj, vel_img, d_img);
        update(enc.text_proj, vel_txt, d_txt);
        const double grads[4] = {lg.grad.t_g, lg.grad.b_g, lg.grad.t_l, lg.grad.b_l};
        double* targets[4] = {&params.t_g, &params.b_g, &params.t_l, &params.b_l};
        const int n_scalars = config.freeze_local_scalars ? 2 : 4;
        for (int i = 0; i < n_scalars; ++i) {
            vel_scalars[i] = mu * vel_scalars[i] + grads[i];
            *targets[i] -= lr * vel_scalars[i];
        }
        params.t_g = std::max(params.t_g, 1e-6);
        params.t_l = std::max(params.t_l, 1e-6);
        const auto finite = [](std::span<const double> xs) {
            return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
        };
        if (!finite(enc.image_proj.values()) || !finite(enc.text_proj.values()) ||
            !finite(std::array{params.t_g, params.b_g, params.t_l, params.b_l})) {
            throw Error(ErrorCode::Divergence, "parameters became non-finite at step " + std::to_string(step));
        }
    }
    return result;
}

std::vector<ClassSpec> synthetic_classes(const ToyEncoder& enc, const SyntheticDataset& dataset) {
    std::vector<ClassSpec> classes;
    for (std::size_t c = 0; c < dataset.class_concepts.size(); ++c) {
        RawText raw;
        raw.id = "class-" + std::to_string(c);
        for (std::size_t concept_index : dataset.class_concepts[c]) {
            raw.tokens.append_row(dataset.text_prototypes.row(concept_index));
        }
        ClassSpec spec;
        spec.class_id = std::to_string(c);
        spec.text = encode_text(enc, raw);
        for (std::size_t j = 0; j < spec.text.tokens.rows(); ++j) {
            const auto row = spec.text.tokens.row(j);
            spec.concept_embs.emplace_back(row.begin(), row.end());
        }
        classes.push_back(std::move(spec));
    }
    return classes;
}

std::vector<RawPrompt> synthetic_prompt_texts(const SyntheticDataset& dataset) {
    const Mat& protos = dataset.text_prototypes;
    std::vector<RawPrompt> prompts;
    for (std::size_t j = 0; j < protos.rows(); ++j) {
        RawPrompt p{synthetic_cui(j), {"prompt-" + synthetic_cui(j), Mat(0, protos.cols())},
                    {"prompt-not-" + synthetic_cui(j), Mat(0, protos.cols())}};
        p.positive.tokens.append_row(protos.row(j));
        for (std::size_t o = 0; o < protos.rows(); ++o) {
            if (o != j) {
                p.negative.tokens.append_row(protos.row(o));
            }
        }
        prompts.push_back(std::move(p));
    }
    return prompts;
}

std::vector<ConceptPrompt> synthetic_prompts(const ToyEncoder& enc, const SyntheticDataset& dataset) {
    std::vector<ConceptPrompt> prompts;
    for (const auto& p : synthetic_prompt_texts(dataset)) {
        prompts.push_back({p.cui, encode_text(enc, p.positive), encode_text(enc, p.negative)});
    }
    return prompts;
}

double eval_synthetic(const ToyEncoder& enc, const AlignmentParams& params, const SyntheticDataset& heldout,
                      double beta, std::size_t k) {
    if (heldout.triplets.empty()) {
        throw Error(ErrorCode::EmptyInput, "held-out set is empty");
    }
    const auto classes = synthetic_classes(enc, heldout);
    AlignmentParams p = params;
    p.beta = beta;
    p.k = k;
    std::size_t correct = 0;
    for (const auto& t : heldout.triplets) {
        const auto pred = fuse_predict(encode_image(enc, t.image), classes, p);
        if (static_cast<int>(pred.argmax) == t.label) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(heldout.triplets.size());
}

double smoothed_head(const std::vector<TraceRow>& trace, std::size_t window) {
    const std::size_t n = std::min(window, trace.size());
    if (n == 0) {
        throw Error(ErrorCode::EmptyInput, "empty loss trace");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += trace[i].total;
    }
    return acc / static_cast<double>(n);
}

double smoothed_tail(const std::vector<TraceRow>& trace, std::size_t window) {
    const std::size_t n = std::min(window, trace.size());
    if (n == 0) {
        throw Error(ErrorCode::EmptyInput, "empty loss trace");
    }
    double acc = 0.0;
    for (std::size_t i = trace.size() - n; i < trace.size(); ++i) {
        acc += trace[i].total;
    }
    return acc / static_cast<double>(n);
}

}  // namespace concept_align
