// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0
//
// CCEM: the binary embedding store.
//
// Layout (little-endian, no padding):
//   "CCEM" | u32 version = 1 | u32 record count
//   per record: u16 id length | id bytes (UTF-8) | u32 rows | u32 cols
//               | rows * cols float32, row-major
// Row 0 of a record is the cls vector; rows 1.. are regions (images) or
// tokens (texts).

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "concept_align/embedding.hpp"

namespace concept_align {

inline constexpr std::uint32_t kCcemVersion = 1;

struct EmbeddingRecord {
    std::string id;
    Mat rows;  // row 0 = cls

    friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

EmbeddingRecord to_record(const ImageEmbedding& image);
EmbeddingRecord to_record(const TextEmbedding& text);
/// Throws EmptyInput if the record has fewer than two rows.
ImageEmbedding to_image(const EmbeddingRecord& record);
TextEmbedding to_text(const EmbeddingRecord& record);

/// Serializes records. Throws DimMismatch when widths differ across records
/// and InvalidArgument for ids longer than 65535 bytes.
std::vector<std::uint8_t> encode_ccem(std::span<const EmbeddingRecord> records);

/// Parses a CCEM byte buffer. Throws BadMagic, UnsupportedVersion, Truncated,
/// TrailingBytes or DimMismatch.
std::vector<EmbeddingRecord> decode_ccem(std::span<const std::uint8_t> bytes);

void write_ccem(std::span<const EmbeddingRecord> records, const std::filesystem::path& path);
void write_ccem(std::span<const ImageEmbedding> images, const std::filesystem::path& path);
void write_ccem(std::span<const TextEmbedding> texts, const std::filesystem::path& path);

std::vector<EmbeddingRecord> read_ccem(const std::filesystem::path& path);

/// Id-indexed, immutable-after-build view over a list of embeddings.
template <typename T>
class Store {
public:
    Store() = default;
    explicit Store(std::vector<T> items);

    const T& at(const std::string& id) const;
    bool contains(const std::string& id) const { return index_.count(id) != 0; }

    const std::vector<T>& items() const noexcept { return items_; }
    std::size_t size() const noexcept { return items_.size(); }

private:
    std::vector<T> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

using ImageStore = Store<ImageEmbedding>;
using TextStore = Store<TextEmbedding>;
using RecordStore = Store<EmbeddingRecord>;

ImageStore load_image_store(const std::filesystem::path& path);
TextStore load_text_store(const std::filesystem::path& path);

}  // namespace concept_align
