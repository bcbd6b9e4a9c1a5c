// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0

#include "concept_align/extraction.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "concept_align/error.hpp"
#include "concept_align/parallel.hpp"

namespace concept_align {

using json = nlohmann::json;

std::vector<Token> tokenize(std::string_view caption) {
    std::vector<Token> tokens;
    const auto* s = reinterpret_cast<const std::uint8_t*>(caption.data());
    const auto length = static_cast<std::int32_t>(caption.size());
    std::int32_t i = 0;
    std::string current;
    std::size_t begin = 0;
    auto flush = [&](std::size_t end) {
        if (!current.empty()) {
            tokens.push_back({std::move(current), begin, end});
            current.clear();
        }
    };
    while (i < length) {
        const std::int32_t start = i;
        UChar32 c;
        U8_NEXT(s, i, length, c);
        if (c < 0 || !u_isalnum(c)) {
            flush(static_cast<std::size_t>(start));
            continue;
        }
        if (current.empty()) {
            begin = static_cast<std::size_t>(start);
        }
        const UChar32 lower = u_tolower(c);
        char buf[U8_MAX_LENGTH];
        std::int32_t n = 0;
        U8_APPEND_UNSAFE(buf, n, lower);
        current.append(buf, static_cast<std::size_t>(n));
    }
    flush(caption.size());
    return tokens;
}

struct ConceptVocab::Node {
    std::map<std::string, std::unique_ptr<Node>, std::less<>> children;
    std::optional<std::string> cui;
};

ConceptVocab::ConceptVocab() : root_(std::make_unique<Node>()) {}
ConceptVocab::~ConceptVocab() = default;
ConceptVocab::ConceptVocab(ConceptVocab&&) noexcept = default;
ConceptVocab& ConceptVocab::operator=(ConceptVocab&&) noexcept = default;

void ConceptVocab::add(std::string_view cui, std::string_view synonym) {
    if (cui.empty()) {
        throw Error(ErrorCode::MalformedRow, "empty CUI");
    }
    const auto tokens = tokenize(synonym);
    if (tokens.empty()) {
        throw Error(ErrorCode::MalformedRow, "synonym '" + std::string(synonym) + "' has no tokens");
    }
    Node* node = root_.get();
    for (const auto& t : tokens) {
        auto& child = node->children[t.text];
        if (!child) {
            child = std::make_unique<Node>();
        }
        node = child.get();
    }
    if (node->cui) {
        if (*node->cui != cui) {
            throw Error(ErrorCode::ConflictingSynonym, "synonym '" + std::string(synonym) + "' maps to both " +
                                                           *node->cui + " and " + std::string(cui));
        }
        return;
    }
    node->cui = std::string(cui);
    ++size_;
}

std::optional<std::pair<std::size_t, std::string>> ConceptVocab::longest_match(std::span<const Token> tokens,
                                                                               std::size_t start) const {
    std::optional<std::pair<std::size_t, std::string>> best;
    const Node* node = root_.get();
    for (std::size_t i = start; i < tokens.size(); ++i) {
        const auto it = node->children.find(tokens[i].text);
        if (it == node->children.end()) {
            break;
        }
        node = it->second.get();
        if (node->cui) {
            best = std::make_pair(i - start + 1, *node->cui);
        }
    }
    return best;
}

namespace {

std::string read_file(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, std::string("cannot open ") + what + " '" + path + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Splits on '\n', dropping a trailing '\r'.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        fn(line, line_no);
    }
}

bool blank(std::string_view line) {
    return line.find_first_not_of(" \t") == std::string_view::npos;
}

}  // namespace

ConceptVocab parse_vocab(std::string_view tsv) {
    ConceptVocab vocab;
    for_each_line(tsv, [&](std::string_view line, std::size_t line_no) {
        if (blank(line) || line.front() == '#') {
            return;
        }
        std::vector<std::string_view> fields;
        std::size_t pos = 0;
        while (true) {
            const auto tab = line.find('\t', pos);
            fields.push_back(line.substr(pos, tab == std::string_view::npos ? std::string_view::npos : tab - pos));
            if (tab == std::string_view::npos) {
                break;
            }
            pos = tab + 1;
        }
        const std::string where = "vocab line " + std::to_string(line_no) + ": ";
        if (fields.size() != 3) {
            throw Error(ErrorCode::MalformedRow, where + "expected 3 tab-separated fields, got " +
                                                     std::to_string(fields.size()));
        }
        try {
            vocab.add(fields[0], fields[1]);
            vocab.add(fields[0], fields[2]);
        } catch (const Error& e) {
            throw Error(e.code(), where + e.what());
        }
    });
    return vocab;
}

ConceptVocab load_vocab(const std::string& path) {
    return parse_vocab(read_file(path, "vocab"));
}

ExtractionResult extract(std::string id, std::string_view caption, const ConceptVocab& vocab,
                         const ExtractOptions& options) {
    if (!(options.threshold >= 0.0 && options.threshold <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "threshold must lie in [0, 1]");
    }
    ExtractionResult result;
    result.id = std::move(id);
    result.tokens = tokenize(caption);
    const auto& tokens = result.tokens;
    std::size_t i = 0;
    while (i < tokens.size()) {
        auto match = vocab.longest_match(tokens, i);
        if (!match) {
            ++i;
            continue;
        }
        const std::size_t end = i + match->first;
        const std::size_t from = tokens[i].begin;
        result.spans.push_back(
            {i, end, std::move(match->second), std::string(caption.substr(from, tokens[end - 1].end - from))});
        i = end;
    }
    return result;
}

std::vector<Caption> parse_captions(std::string_view jsonl) {
    std::vector<Caption> out;
    for_each_line(jsonl, [&](std::string_view line, std::size_t line_no) {
        if (blank(line)) {
            return;
        }
        const std::string where = "captions line " + std::to_string(line_no) + ": ";
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::MalformedLine, where + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("caption") ||
            !j["caption"].is_string()) {
            throw Error(ErrorCode::MalformedLine, where + "expected string fields \"id\" and \"caption\"");
        }
        out.push_back({j["id"].get<std::string>(), j["caption"].get<std::string>()});
    });
    return out;
}

std::vector<Caption> load_captions(const std::string& path) {
    return parse_captions(read_file(path, "captions"));
}

std::vector<ExtractionResult> extract_all(std::span<const Caption> captions, const ConceptVocab& vocab,
                                          const ExtractOptions& options, std::size_t threads) {
    std::vector<ExtractionResult> out(captions.size());
    parallel_for(captions.size(), threads,
                 [&](std::size_t i) { out[i] = extract(captions[i].id, captions[i].caption, vocab, options); });
    return out;
}

std::string extraction_json(const ExtractionResult& result) {
    json j;
    j["id"] = result.id;
    j["tokens"] = json::array();
    for (const auto& t : result.tokens) {
        j["tokens"].push_back(t.text);
    }
    j["spans"] = json::array();
    for (const auto& s : result.spans) {
        j["spans"].push_back({{"start", s.start}, {"end", s.end}, {"cui", s.cui}, {"surface", s.surface}});
    }
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

ExtractionResult parse_extraction_json(std::string_view line) {
    ExtractionResult r;
    try {
        const json j = json::parse(line);
        r.id = j.at("id").get<std::string>();
        for (const auto& t : j.at("tokens")) {
            r.tokens.push_back({t.get<std::string>(), 0, 0});
        }
        for (const auto& s : j.at("spans")) {
            r.spans.push_back({s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>(),
                               s.at("cui").get<std::string>(), s.at("surface").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedLine, std::string("extraction record: ") + e.what());
    }
    return r;
}

std::vector<CuiCount> corpus_stats(std::span<const ExtractionResult> results) {
    std::map<std::string, std::size_t> counts;
    for (const auto& r : results) {
        for (const auto& s : r.spans) {
            ++counts[s.cui];
        }
    }
    std::vector<CuiCount> out;
    for (auto& [cui, n] : counts) {
        out.push_back({cui, n});
    }
    std::stable_sort(out.begin(), out.end(), [](const CuiCount& a, const CuiCount& b) { return a.count > b.count; });
    return out;
}

}  // namespace concept_align
