// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale stand-in for pre-training: linear encoders over raw slot
// vectors, a seeded synthetic generator with planted region/token concept
// placements, and gradient descent on the total alignment loss.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "concept_align/embedding.hpp"
#include "concept_align/numerics.hpp"
#include "concept_align/objectives.hpp"
#include "concept_align/zeroshot.hpp"

namespace concept_align {

struct SyntheticSpec {
    std::size_t n_concepts = 4;
    std::size_t n_classes = 4;
    std::size_t samples_per_class = 32;
    /// Class c owns concepts {c, c+1, ..., c+m-1} mod n_concepts.
    std::size_t concepts_per_class = 2;
    std::size_t regions = 6;
    std::size_t tokens = 6;
    std::size_t d_img_raw = 16;
    std::size_t d_txt_raw = 16;
    /// Distinct background vectors that fill non-concept slots.
    std::size_t n_background = 4;
    double noise_sigma = 0.1;
    std::uint64_t seed = 1;
};

/// Throws SpecInvalid on inconsistent sizes (see SyntheticSpec comments).
void validate_spec(const SyntheticSpec& spec);

enum class Split { Train = 0, Heldout = 1 };

struct RawImage {
    std::string id;
    Mat regions;  // r x d_img_raw
};

struct RawText {
    std::string id;
    Mat tokens;  // s x d_txt_raw
};

struct RawTriplet {
    RawImage image;
    RawText text;
    std::vector<ConceptSpan> concepts;  // one single-token span per planted concept
    int label = 0;
    std::vector<std::size_t> planted_concepts;  // concept index per planted slot
    std::vector<std::size_t> planted_regions;   // 0-based region slot per planted concept
};

struct SyntheticDataset {
    SyntheticSpec spec;
    Split split = Split::Train;
    std::vector<RawTriplet> triplets;
    /// class -> owned concept indices
    std::vector<std::vector<std::size_t>> class_concepts;
    Mat image_prototypes;  // n_concepts x d_img_raw
    Mat text_prototypes;   // n_concepts x d_txt_raw
    Mat image_background;  // n_background x d_img_raw
    Mat text_background;   // n_background x d_txt_raw
};

/// Concept identifier used in spans, e.g. "SYN0003".
std::string synthetic_cui(std::size_t concept_index);

/// Pure function of (spec, split). Prototypes depend only on spec.seed, so
/// train and held-out splits share concepts but draw disjoint sample streams.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec, Split split = Split::Train);

struct ToyEncoder {
    Mat image_proj;  // d_img_raw x h
    Mat text_proj;   // d_txt_raw x h

    std::size_t dim() const noexcept { return image_proj.cols(); }
};

/// Uniform(-1/sqrt(d_raw), 1/sqrt(d_raw)) initialization.
ToyEncoder init_encoder(std::size_t d_img_raw, std::size_t d_txt_raw, std::size_t h, std::uint64_t seed);

/// Projects every slot; the cls vector is the projected mean of the slots.
ImageEmbedding encode_image(const ToyEncoder& enc, const RawImage& raw);
TextEmbedding encode_text(const ToyEncoder& enc, const RawText& raw);

struct TrainConfig {
    std::size_t h = 16;
    double learning_rate = 0.05;
    std::size_t steps = 30000;
    /// 0 = full batch. Pairs keep the region-concept term bounded below.
    std::size_t batch_size = 2;
    double alpha = 0.5;
    double momentum = 0.0;
    double t_g = 10.0;
    double b_g = 5.0;
    double t_l = 5.0;
    double b_l = 5.0;
    std::size_t warmup_steps_without_rc = 0;
    /// Hold t_l and b_l at their initial values.
    bool freeze_local_scalars = true;
    std::uint64_t seed = 42;
};

struct TraceRow {
    std::size_t step = 0;
    double it_align = 0.0;
    double rc_align = 0.0;
    double total = 0.0;
};

struct TrainResult {
    ToyEncoder encoder;
    AlignmentParams params;
    std::vector<TraceRow> trace;
};

/// Logit scales are projected to max(t, 1e-6) after every step. Throws
/// Divergence (with the step index) if the loss or the parameters become
/// non-finite.
TrainResult train(const TrainConfig& config, const SyntheticDataset& dataset);

/// Encodes a dataset split into triplets for the loss functions.
TripletBatch encode_dataset(const ToyEncoder& enc, const SyntheticDataset& dataset);

/// One class per spec class: its text holds the class's concept text
/// prototypes as tokens, and its concepts are those encoded tokens.
std::vector<ClassSpec> synthetic_classes(const ToyEncoder& enc, const SyntheticDataset& dataset);

struct RawPrompt {
    std::string cui;
    RawText positive;
    RawText negative;
};

/// Raw prompt texts, one pair per concept (see synthetic_prompts).
std::vector<RawPrompt> synthetic_prompt_texts(const SyntheticDataset& dataset);

/// One prompt pair per concept: the positive prompt holds the concept's text
/// prototype, the negative prompt the prototypes of every other concept.
std::vector<ConceptPrompt> synthetic_prompts(const ToyEncoder& enc, const SyntheticDataset& dataset);

/// Zero-shot accuracy of fuse_predict on the dataset with the given beta/k.
double eval_synthetic(const ToyEncoder& enc, const AlignmentParams& params, const SyntheticDataset& heldout,
                      double beta, std::size_t k);

/// Mean of the first / last `window` totals of a trace.
double smoothed_head(const std::vector<TraceRow>& trace, std::size_t window = 10);
double smoothed_tail(const std::vector<TraceRow>& trace, std::size_t window = 10);

}  // namespace concept_align
