// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "concept_align/ccem.hpp"
#include "concept_align/embedding.hpp"

namespace concept_align {

/// One manifest line, before ids are resolved against the stores:
/// {"image": "...", "text": "...", "concepts": [{"cui": "...", "tokens": [..]}], "label": 3}
struct ManifestEntry {
    std::string image_id;
    std::string text_id;
    std::vector<ConceptSpan> concepts;
    std::optional<int> label;
};

struct Dataset {
    TripletBatch triplets;
    std::vector<std::optional<int>> labels;
};

/// Parses JSONL manifest text. Blank lines are ignored; any other line that
/// does not match the schema raises MalformedLine with its 1-based number.
std::vector<ManifestEntry> parse_manifest(const std::string& text);

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// Resolves ids and validates spans, preserving manifest order.
/// Throws UnknownId or SpanOutOfRange (message carries the line number).
Dataset resolve_manifest(const std::vector<ManifestEntry>& entries, const ImageStore& images,
                         const TextStore& texts);

Dataset load_manifest(const std::filesystem::path& path, const ImageStore& images,
                      const TextStore& texts);

std::string manifest_line(const ManifestEntry& entry);

}  // namespace concept_align
