// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0

#include "concept_align/manifest.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "concept_align/error.hpp"

namespace concept_align {

using json = nlohmann::json;

namespace {

[[noreturn]] void malformed(std::size_t line, const std::string& why) {
    throw Error(ErrorCode::MalformedLine, "manifest line " + std::to_string(line) + ": " + why);
}

ManifestEntry parse_entry(const std::string& line, std::size_t line_no) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        malformed(line_no, e.what());
    }
    if (!j.is_object()) {
        malformed(line_no, "record is not a JSON object");
    }
    ManifestEntry entry;
    if (!j.contains("image") || !j["image"].is_string()) {
        malformed(line_no, "missing string field 'image'");
    }
    if (!j.contains("text") || !j["text"].is_string()) {
        malformed(line_no, "missing string field 'text'");
    }
    entry.image_id = j["image"].get<std::string>();
    entry.text_id = j["text"].get<std::string>();
    if (j.contains("concepts")) {
        const auto& cs = j["concepts"];
        if (!cs.is_array()) {
            malformed(line_no, "'concepts' must be an array");
        }
        for (const auto& c : cs) {
            if (!c.is_object() || !c.contains("cui") || !c["cui"].is_string() ||
                !c.contains("tokens") || !c["tokens"].is_array()) {
                malformed(line_no, "concept needs string 'cui' and array 'tokens'");
            }
            ConceptSpan span;
            span.cui = c["cui"].get<std::string>();
            for (const auto& t : c["tokens"]) {
                if (!t.is_number_integer()) {
                    malformed(line_no, "token indices must be integers");
                }
                const auto v = t.get<long long>();
                if (v < 0) {
                    throw Error(ErrorCode::SpanOutOfRange, "manifest line " + std::to_string(line_no) +
                                                               ": negative token index");
                }
                span.token_indices.push_back(static_cast<std::size_t>(v));
            }
            entry.concepts.push_back(std::move(span));
        }
    }
    if (j.contains("label") && !j["label"].is_null()) {
        if (!j["label"].is_number_integer()) {
            malformed(line_no, "'label' must be an integer");
        }
        entry.label = j["label"].get<int>();
    }
    return entry;
}

bool is_blank(const std::string& s) {
    return s.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

std::vector<ManifestEntry> parse_manifest(const std::string& text) {
    std::vector<ManifestEntry> out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) {
            continue;
        }
        out.push_back(parse_entry(line, line_no));
    }
    return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open manifest '" + path.string() + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_manifest(buf.str());
}

Dataset resolve_manifest(const std::vector<ManifestEntry>& entries, const ImageStore& images,
                         const TextStore& texts) {
    Dataset ds;
    ds.triplets.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        const std::string where = "manifest record " + std::to_string(i + 1) + ": ";
        if (!images.contains(e.image_id)) {
            throw Error(ErrorCode::UnknownId, where + "unknown image id '" + e.image_id + "'");
        }
        if (!texts.contains(e.text_id)) {
            throw Error(ErrorCode::UnknownId, where + "unknown text id '" + e.text_id + "'");
        }
        Triplet t{images.at(e.image_id), texts.at(e.text_id), e.concepts};
        if (t.image.dim() != t.text.dim()) {
            throw Error(ErrorCode::DimMismatch, where + "image and text widths differ");
        }
        for (const auto& span : t.concepts) {
            try {
                validate_span(span, t.text.num_tokens());
            } catch (const Error& err) {
                throw Error(err.code(), where + err.what());
            }
        }
        ds.triplets.push_back(std::move(t));
        ds.labels.push_back(e.label);
    }
    return ds;
}

Dataset load_manifest(const std::filesystem::path& path, const ImageStore& images,
                      const TextStore& texts) {
    return resolve_manifest(read_manifest(path), images, texts);
}

std::string manifest_line(const ManifestEntry& entry) {
    json j;
    j["image"] = entry.image_id;
    j["text"] = entry.text_id;
    j["concepts"] = json::array();
    for (const auto& c : entry.concepts) {
        j["concepts"].push_back({{"cui", c.cui}, {"tokens", c.token_indices}});
    }
    if (entry.label) {
        j["label"] = *entry.label;
    }
    return j.dump();
}

}  // namespace concept_align
