// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0
//
// Input/output helpers shared by the concept-align subcommands.

#pragma once

#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "concept_align/ccem.hpp"
#include "concept_align/model_io.hpp"
#include "concept_align/zeroshot.hpp"

namespace concept_align::cli {

/// Writes to a file when a path is given, otherwise to stdout.
class Sink {
public:
    explicit Sink(const std::string& path);
    std::ostream& stream() { return *os_; }
    /// Flushes and reports write failures as IoError.
    void finish();

private:
    std::string path_;
    std::ofstream file_;
    std::ostream* os_;
};

/// Reads a CCEM file; with a projection every row is mapped through it.
std::vector<EmbeddingRecord> load_records(const std::string& path, const Mat* projection);

ImageStore load_images(const std::string& path, const ToyModel* model);
TextStore load_texts(const std::string& path, const ToyModel* model);

/// Concept vectors by id; each is the mean of its record's rows.
std::map<std::string, Vec> load_concepts(const std::string& path, const ToyModel* model);

/// classes.json: [{"class_id", "text", "concepts": [...]}].
std::vector<ClassSpec> load_classes(const std::string& path, const TextStore& texts,
                                    const std::map<std::string, Vec>& concepts);

/// prompts.json: [{"cui", "positive", "negative"}] with text ids.
std::vector<ConceptPrompt> load_prompts(const std::string& path, const TextStore& texts);

/// labels CSV `image_id,label` (header optional).
std::vector<std::pair<std::string, std::string>> load_labels(const std::string& path);

/// Numeric CSV: one row per line, comma separated, optional header.
Mat load_numeric_csv(const std::string& path);
std::vector<int> load_int_column(const std::string& path);

/// Shortest round-trip decimal.
std::string num(double v);

}  // namespace concept_align::cli
