// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON / CSV persistence for trained toy models, loss traces and concept
// bottleneck models.

#pragma once

#include <string>
#include <vector>

#include "concept_align/embedding.hpp"
#include "concept_align/explain.hpp"
#include "concept_align/toy_training.hpp"

namespace concept_align {

struct ToyModel {
    ToyEncoder encoder;
    AlignmentParams params;
};

/// {"h", "image_proj", "text_proj", "t_g", "b_g", "t_l", "b_l"}; doubles are
/// written with round-trip precision.
std::string toy_model_json(const ToyModel& model);
ToyModel parse_toy_model(const std::string& text);
void save_toy_model(const std::string& path, const ToyModel& model);
ToyModel load_toy_model(const std::string& path);

/// Header `step,it_align,rc_align,total`, one row per step.
std::string trace_csv(const std::vector<TraceRow>& trace);

/// {"concept_ids", "class_ids", "weights", "bias"}.
std::string cbm_json(const ConceptBottleneck& cbm);
ConceptBottleneck parse_cbm(const std::string& text);
void save_cbm(const std::string& path, const ConceptBottleneck& cbm);
ConceptBottleneck load_cbm(const std::string& path);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace concept_align
