// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dictionary concept extraction: Unicode tokenization, a token-level prefix
// trie over vocabulary synonyms, greedy left-to-right longest match, and
// per-concept corpus counts.

#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace concept_align {

struct Token {
    std::string text;   // lowercase
    std::size_t begin;  // byte offsets into the caption
    std::size_t end;
};

/// Lowercases (simple case mapping) and splits on every non-alphanumeric
/// code point. Malformed UTF-8 bytes act as separators.
std::vector<Token> tokenize(std::string_view caption);

class ConceptVocab {
public:
    ConceptVocab();
    ~ConceptVocab();
    ConceptVocab(ConceptVocab&&) noexcept;
    ConceptVocab& operator=(ConceptVocab&&) noexcept;

    /// Adds a synonym (tokenized like captions). Re-adding with the same CUI
    /// is a no-op; a different CUI throws ConflictingSynonym. A synonym with no
    /// tokens throws MalformedRow.
    void add(std::string_view cui, std::string_view synonym);

    /// Longest entry starting at tokens[start]: (token count, cui).
    std::optional<std::pair<std::size_t, std::string>> longest_match(std::span<const Token> tokens,
                                                                     std::size_t start) const;

    std::size_t size() const noexcept { return size_; }

private:
    struct Node;
    std::unique_ptr<Node> root_;
    std::size_t size_ = 0;
};

/// TSV rows `cui<TAB>canonical_name<TAB>synonym`; blank lines and lines
/// starting with '#' are skipped. Both the canonical name and the synonym are
/// registered. Throws MalformedRow (with line number) or ConflictingSynonym.
ConceptVocab parse_vocab(std::string_view tsv);
ConceptVocab load_vocab(const std::string& path);

struct ExtractedSpan {
    std::size_t start = 0;  // token index
    std::size_t end = 0;    // exclusive
    std::string cui;
    std::string surface;  // caption bytes covered by the span
};

struct ExtractionResult {
    std::string id;
    std::vector<Token> tokens;
    std::vector<ExtractedSpan> spans;
};

struct ExtractOptions {
    /// Exact matches score 1.0, so any threshold in [0, 1] admits them all.
    double threshold = 0.8;
};

ExtractionResult extract(std::string id, std::string_view caption, const ConceptVocab& vocab,
                         const ExtractOptions& options = {});

struct Caption {
    std::string id;
    std::string caption;
};

/// JSONL {"id", "caption"} per line; blank lines skipped. Throws
/// MalformedLine with the line number.
std::vector<Caption> parse_captions(std::string_view jsonl);
std::vector<Caption> load_captions(const std::string& path);

std::vector<ExtractionResult> extract_all(std::span<const Caption> captions, const ConceptVocab& vocab,
                                          const ExtractOptions& options = {}, std::size_t threads = 1);

/// {"id","tokens","spans":[{"start","end","cui","surface"}]} on one line.
std::string extraction_json(const ExtractionResult& result);

/// Parses one output line back (tokens carry no offsets).
ExtractionResult parse_extraction_json(std::string_view line);

struct CuiCount {
    std::string cui;
    std::size_t count = 0;
};

/// Span counts per CUI, by descending count then CUI.
std::vector<CuiCount> corpus_stats(std::span<const ExtractionResult> results);

}  // namespace concept_align
