// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0

#include "concept_align/ccem.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "concept_align/error.hpp"

namespace concept_align {

namespace {

constexpr std::uint8_t kMagic[4] = {0x43, 0x43, 0x45, 0x4D};

class ByteWriter {
public:
    void u16(std::uint16_t v) { put_le(v); }
    void u32(std::uint32_t v) { put_le(v); }
    void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        out_.insert(out_.end(), p, p + n);
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    template <typename U>
    void put_le(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint16_t u16(const char* what) { return get_le<std::uint16_t>(what); }
    std::uint32_t u32(const char* what) { return get_le<std::uint32_t>(what); }
    float f32(const char* what) { return std::bit_cast<float>(get_le<std::uint32_t>(what)); }

    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        need(n, what);
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw Error(ErrorCode::Truncated, std::string("CCEM truncated while reading ") + what);
        }
    }

private:
    template <typename U>
    U get_le(const char* what) {
        need(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            v |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
        }
        pos_ += sizeof(U);
        return v;
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

Mat stack(std::span<const double> cls, const Mat& rest) {
    Mat out;
    out.append_row(cls);
    for (std::size_t r = 0; r < rest.rows(); ++r) {
        out.append_row(rest.row(r));
    }
    return out;
}

Mat tail_rows(const Mat& m) {
    Mat out(m.rows() - 1, m.cols());
    for (std::size_t r = 1; r < m.rows(); ++r) {
        auto dst = out.row(r - 1);
        auto src = m.row(r);
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return out;
}

}  // namespace

EmbeddingRecord to_record(const ImageEmbedding& image) {
    return {image.id, stack(image.cls, image.regions)};
}

EmbeddingRecord to_record(const TextEmbedding& text) {
    return {text.id, stack(text.cls, text.tokens)};
}

ImageEmbedding to_image(const EmbeddingRecord& record) {
    if (record.rows.rows() < 2) {
        throw Error(ErrorCode::EmptyInput, record.id + ": image record needs cls + >= 1 region row");
    }
    const auto cls = record.rows.row(0);
    return {record.id, Vec(cls.begin(), cls.end()), tail_rows(record.rows)};
}

TextEmbedding to_text(const EmbeddingRecord& record) {
    if (record.rows.rows() < 2) {
        throw Error(ErrorCode::EmptyInput, record.id + ": text record needs cls + >= 1 token row");
    }
    const auto cls = record.rows.row(0);
    return {record.id, Vec(cls.begin(), cls.end()), tail_rows(record.rows)};
}

std::vector<std::uint8_t> encode_ccem(std::span<const EmbeddingRecord> records) {
    if (records.size() > std::numeric_limits<std::uint32_t>::max()) {
        throw Error(ErrorCode::InvalidArgument, "too many records for CCEM");
    }
    ByteWriter w;
    w.bytes(kMagic, sizeof(kMagic));
    w.u32(kCcemVersion);
    w.u32(static_cast<std::uint32_t>(records.size()));
    const std::size_t width = records.empty() ? 0 : records.front().rows.cols();
    for (const auto& rec : records) {
        if (rec.rows.cols() != width) {
            throw Error(ErrorCode::DimMismatch, "record '" + rec.id + "' has width " +
                                                    std::to_string(rec.rows.cols()) + ", store uses " +
                                                    std::to_string(width));
        }
        if (rec.id.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw Error(ErrorCode::InvalidArgument, "record id longer than 65535 bytes");
        }
        if (rec.rows.rows() > std::numeric_limits<std::uint32_t>::max()) {
            throw Error(ErrorCode::InvalidArgument, "record '" + rec.id + "' has too many rows");
        }
        w.u16(static_cast<std::uint16_t>(rec.id.size()));
        w.bytes(rec.id.data(), rec.id.size());
        w.u32(static_cast<std::uint32_t>(rec.rows.rows()));
        w.u32(static_cast<std::uint32_t>(rec.rows.cols()));
        for (double v : rec.rows.values()) {
            w.f32(static_cast<float>(v));
        }
    }
    return w.take();
}

std::vector<EmbeddingRecord> decode_ccem(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw Error(ErrorCode::BadMagic, "not a CCEM file (bad magic)");
    }
    r.take(sizeof(kMagic), "magic");
    const std::uint32_t version = r.u32("version");
    if (version != kCcemVersion) {
        throw Error(ErrorCode::UnsupportedVersion,
                    "CCEM version " + std::to_string(version) + " is not supported");
    }
    const std::uint32_t count = r.u32("record count");
    std::vector<EmbeddingRecord> out;
    std::size_t width = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t id_len = r.u16("id length");
        const auto id_bytes = r.take(id_len, "id");
        std::string id(id_bytes.begin(), id_bytes.end());
        const std::uint32_t rows = r.u32("rows");
        const std::uint32_t cols = r.u32("cols");
        if (i == 0) {
            width = cols;
        } else if (cols != width) {
            throw Error(ErrorCode::DimMismatch, "record '" + id + "' width differs within store");
        }
        const std::uint64_t n = static_cast<std::uint64_t>(rows) * cols;
        if (n > r.remaining() / 4) {
            throw Error(ErrorCode::Truncated, "CCEM truncated inside record '" + id + "'");
        }
        std::vector<double> values(static_cast<std::size_t>(n));
        for (double& v : values) {
            v = r.f32("payload");
        }
        out.push_back({std::move(id), Mat(rows, cols, std::move(values))});
    }
    if (r.remaining() != 0) {
        throw Error(ErrorCode::TrailingBytes,
                    std::to_string(r.remaining()) + " trailing bytes after last CCEM record");
    }
    return out;
}

void write_ccem(std::span<const EmbeddingRecord> records, const std::filesystem::path& path) {
    const auto bytes = encode_ccem(records);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error(ErrorCode::IoError, "write to '" + path.string() + "' failed");
    }
}

void write_ccem(std::span<const ImageEmbedding> images, const std::filesystem::path& path) {
    std::vector<EmbeddingRecord> records;
    records.reserve(images.size());
    for (const auto& img : images) {
        records.push_back(to_record(img));
    }
    write_ccem(records, path);
}

void write_ccem(std::span<const TextEmbedding> texts, const std::filesystem::path& path) {
    std::vector<EmbeddingRecord> records;
    records.reserve(texts.size());
    for (const auto& txt : texts) {
        records.push_back(to_record(txt));
    }
    write_ccem(records, path);
}

std::vector<EmbeddingRecord> read_ccem(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_ccem(bytes);
}

namespace {
const std::string& item_id(const ImageEmbedding& x) { return x.id; }
const std::string& item_id(const TextEmbedding& x) { return x.id; }
const std::string& item_id(const EmbeddingRecord& x) { return x.id; }
}  // namespace

template <typename T>
Store<T>::Store(std::vector<T> items) : items_(std::move(items)) {
    for (std::size_t i = 0; i < items_.size(); ++i) {
        if (!index_.emplace(item_id(items_[i]), i).second) {
            throw Error(ErrorCode::InvalidArgument, "duplicate id '" + item_id(items_[i]) + "' in store");
        }
    }
}

template <typename T>
const T& Store<T>::at(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) {
        throw Error(ErrorCode::UnknownId, "unknown id '" + id + "'");
    }
    return items_[it->second];
}

template class Store<ImageEmbedding>;
template class Store<TextEmbedding>;
template class Store<EmbeddingRecord>;

ImageStore load_image_store(const std::filesystem::path& path) {
    std::vector<ImageEmbedding> images;
    for (const auto& rec : read_ccem(path)) {
        images.push_back(to_image(rec));
    }
    return ImageStore(std::move(images));
}

TextStore load_text_store(const std::filesystem::path& path) {
    std::vector<TextEmbedding> texts;
    for (const auto& rec : read_ccem(path)) {
        texts.push_back(to_text(rec));
    }
    return TextStore(std::move(texts));
}

}  // namespace concept_align
