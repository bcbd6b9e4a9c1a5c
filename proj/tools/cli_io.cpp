// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli_io.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "concept_align/error.hpp"

namespace concept_align::cli {

using json = nlohmann::json;

Sink::Sink(const std::string& path) : path_(path), os_(&std::cout) {
    if (!path.empty()) {
        file_.open(path, std::ios::binary);
        if (!file_) {
            throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
        }
        os_ = &file_;
    }
}

void Sink::finish() {
    os_->flush();
    if (!*os_) {
        throw Error(ErrorCode::IoError, "write to '" + (path_.empty() ? std::string("stdout") : path_) + "' failed");
    }
}

std::vector<EmbeddingRecord> load_records(const std::string& path, const Mat* projection) {
    auto records = read_ccem(path);
    if (!projection) {
        return records;
    }
    for (auto& rec : records) {
        if (rec.rows.cols() != projection->rows()) {
            throw Error(ErrorCode::DimMismatch, "record '" + rec.id + "' has width " +
                                                    std::to_string(rec.rows.cols()) + ", model expects " +
                                                    std::to_string(projection->rows()));
        }
        Mat out(rec.rows.rows(), projection->cols());
        for (std::size_t r = 0; r < rec.rows.rows(); ++r) {
            const auto in = rec.rows.row(r);
            auto o = out.row(r);
            for (std::size_t d = 0; d < in.size(); ++d) {
                const auto p = projection->row(d);
                for (std::size_t c = 0; c < o.size(); ++c) {
                    o[c] += in[d] * p[c];
                }
            }
        }
        rec.rows = std::move(out);
    }
    return records;
}

ImageStore load_images(const std::string& path, const ToyModel* model) {
    std::vector<ImageEmbedding> items;
    for (const auto& rec : load_records(path, model ? &model->encoder.image_proj : nullptr)) {
        items.push_back(to_image(rec));
    }
    return ImageStore(std::move(items));
}

TextStore load_texts(const std::string& path, const ToyModel* model) {
    std::vector<TextEmbedding> items;
    for (const auto& rec : load_records(path, model ? &model->encoder.text_proj : nullptr)) {
        items.push_back(to_text(rec));
    }
    return TextStore(std::move(items));
}

std::map<std::string, Vec> load_concepts(const std::string& path, const ToyModel* model) {
    std::map<std::string, Vec> out;
    for (const auto& rec : load_records(path, model ? &model->encoder.text_proj : nullptr)) {
        if (rec.rows.rows() == 0) {
            throw Error(ErrorCode::EmptyInput, "concept '" + rec.id + "' has no rows");
        }
        if (!out.emplace(rec.id, mean_pool(rec.rows)).second) {
            throw Error(ErrorCode::InvalidArgument, "duplicate concept id '" + rec.id + "'");
        }
    }
    return out;
}

namespace {

json parse_json_file(const std::string& path) {
    const std::string text = read_text_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedLine, "'" + path + "': " + e.what());
    }
}

std::string string_field(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key) || !j[key].is_string()) {
        throw Error(ErrorCode::MalformedLine, where + ": missing string field \"" + key + "\"");
    }
    return j[key].get<std::string>();
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

std::vector<std::string> lines_of(const std::string& path) {
    std::stringstream ss(read_text_file(path));
    std::vector<std::string> out;
    std::string line;
    while (std::getline(ss, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        out.push_back(line);
    }
    return out;
}

bool parse_number(const std::string& cell, double& v) {
    const auto b = cell.find_first_not_of(' ');
    const auto e = cell.find_last_not_of(' ');
    if (b == std::string::npos) {
        return false;
    }
    const char* first = cell.data() + b;
    const char* last = cell.data() + e + 1;
    const auto res = std::from_chars(first, last, v);
    return res.ec == std::errc() && res.ptr == last;
}

}  // namespace

std::vector<ClassSpec> load_classes(const std::string& path, const TextStore& texts,
                                    const std::map<std::string, Vec>& concepts) {
    const json j = parse_json_file(path);
    if (!j.is_array()) {
        throw Error(ErrorCode::MalformedLine, "'" + path + "' must hold a JSON array");
    }
    std::vector<ClassSpec> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string where = path + " entry " + std::to_string(i + 1);
        ClassSpec spec;
        spec.class_id = string_field(j[i], "class_id", where);
        spec.text = texts.at(string_field(j[i], "text", where));
        if (j[i].contains("concepts")) {
            for (const auto& c : j[i]["concepts"]) {
                const auto id = c.get<std::string>();
                const auto it = concepts.find(id);
                if (it == concepts.end()) {
                    throw Error(ErrorCode::UnknownId, where + ": unknown concept '" + id + "'");
                }
                spec.concept_embs.push_back(it->second);
            }
        }
        out.push_back(std::move(spec));
    }
    return out;
}

std::vector<ConceptPrompt> load_prompts(const std::string& path, const TextStore& texts) {
    const json j = parse_json_file(path);
    if (!j.is_array()) {
        throw Error(ErrorCode::MalformedLine, "'" + path + "' must hold a JSON array");
    }
    std::vector<ConceptPrompt> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string where = path + " entry " + std::to_string(i + 1);
        out.push_back({string_field(j[i], "cui", where), texts.at(string_field(j[i], "positive", where)),
                       texts.at(string_field(j[i], "negative", where))});
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> load_labels(const std::string& path) {
    std::vector<std::pair<std::string, std::string>> out;
    const auto lines = lines_of(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto cells = split_commas(lines[i]);
        if (i == 0 && !cells.empty() && cells[0] == "image_id") {
            continue;
        }
        if (cells.size() != 2 || cells[0].empty() || cells[1].empty()) {
            throw Error(ErrorCode::MalformedRow, path + " line " + std::to_string(i + 1) +
                                                     ": expected image_id,label");
        }
        out.emplace_back(cells[0], cells[1]);
    }
    return out;
}

Mat load_numeric_csv(const std::string& path) {
    const auto lines = lines_of(path);
    Mat out;
    bool first_row = true;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto cells = split_commas(lines[i]);
        Vec row;
        bool ok = true;
        for (const auto& cell : cells) {
            double v = 0.0;
            ok = ok && parse_number(cell, v);
            row.push_back(v);
        }
        if (!ok) {
            if (i == 0) {
                continue;  // header
            }
            throw Error(ErrorCode::MalformedRow, path + " line " + std::to_string(i + 1) + ": not numeric");
        }
        if (first_row) {
            out = Mat(0, row.size());
            first_row = false;
        }
        if (row.size() != out.cols()) {
            throw Error(ErrorCode::MalformedRow, path + " line " + std::to_string(i + 1) + ": expected " +
                                                     std::to_string(out.cols()) + " columns");
        }
        out.append_row(row);
    }
    if (out.rows() == 0) {
        throw Error(ErrorCode::EmptyInput, "'" + path + "' holds no values");
    }
    return out;
}

std::vector<int> load_int_column(const std::string& path) {
    const Mat m = load_numeric_csv(path);
    if (m.cols() != 1) {
        throw Error(ErrorCode::MalformedRow, "'" + path + "' must have one column");
    }
    std::vector<int> out;
    for (double v : m.values()) {
        if (v != std::floor(v) || std::abs(v) > 1e9) {
            throw Error(ErrorCode::MalformedRow, "'" + path + "' holds a non-integer label");
        }
        out.push_back(static_cast<int>(v));
    }
    return out;
}

std::string num(double v) {
    return format_double(v);
}

}  // namespace concept_align::cli
