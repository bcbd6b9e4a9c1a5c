// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0

#include "concept_align/model_io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "concept_align/error.hpp"

namespace concept_align {

using json = nlohmann::json;

namespace {

json mat_json(const Mat& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return rows;
}

Mat json_mat(const json& j, const char* what) {
    if (!j.is_array()) {
        throw Error(ErrorCode::MalformedLine, std::string(what) + " must be an array of rows");
    }
    Mat m;
    for (const auto& row : j) {
        const auto values = row.get<std::vector<double>>();
        if (m.rows() == 0) {
            m = Mat(0, values.size());
        }
        if (values.size() != m.cols()) {
            throw Error(ErrorCode::DimMismatch, std::string(what) + " rows have different lengths");
        }
        m.append_row(values);
    }
    return m;
}

json parse_json(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedLine, std::string(what) + ": " + e.what());
    }
}

}  // namespace

std::string format_double(double v) {
    return fmt::format("{}", v);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
    }
    out << content;
    if (!out) {
        throw Error(ErrorCode::IoError, "write to '" + path + "' failed");
    }
}

std::string toy_model_json(const ToyModel& model) {
    json j;
    j["h"] = model.encoder.dim();
    j["image_proj"] = mat_json(model.encoder.image_proj);
    j["text_proj"] = mat_json(model.encoder.text_proj);
    j["t_g"] = model.params.t_g;
    j["b_g"] = model.params.b_g;
    j["t_l"] = model.params.t_l;
    j["b_l"] = model.params.b_l;
    return j.dump() + "\n";
}

ToyModel parse_toy_model(const std::string& text) {
    const json j = parse_json(text, "model");
    ToyModel m;
    try {
        m.encoder.image_proj = json_mat(j.at("image_proj"), "image_proj");
        m.encoder.text_proj = json_mat(j.at("text_proj"), "text_proj");
        m.params.t_g = j.at("t_g").get<double>();
        m.params.b_g = j.at("b_g").get<double>();
        m.params.t_l = j.at("t_l").get<double>();
        m.params.b_l = j.at("b_l").get<double>();
        const auto h = j.at("h").get<std::size_t>();
        if (m.encoder.image_proj.cols() != h || m.encoder.text_proj.cols() != h) {
            throw Error(ErrorCode::DimMismatch, "projection width differs from h");
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedLine, std::string("model: ") + e.what());
    }
    require_finite(m.encoder.image_proj.values(), "image_proj");
    require_finite(m.encoder.text_proj.values(), "text_proj");
    return m;
}

void save_toy_model(const std::string& path, const ToyModel& model) {
    write_text_file(path, toy_model_json(model));
}

ToyModel load_toy_model(const std::string& path) {
    return parse_toy_model(read_text_file(path));
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
    std::string out = "step,it_align,rc_align,total\n";
    for (const auto& row : trace) {
        out += fmt::format("{},{},{},{}\n", row.step, row.it_align, row.rc_align, row.total);
    }
    return out;
}

std::string cbm_json(const ConceptBottleneck& cbm) {
    json j;
    j["concept_ids"] = cbm.concept_ids;
    j["class_ids"] = cbm.class_ids;
    j["weights"] = mat_json(cbm.weights);
    j["bias"] = cbm.bias;
    return j.dump() + "\n";
}

ConceptBottleneck parse_cbm(const std::string& text) {
    const json j = parse_json(text, "cbm");
    ConceptBottleneck cbm;
    try {
        cbm.concept_ids = j.at("concept_ids").get<std::vector<std::string>>();
        cbm.class_ids = j.at("class_ids").get<std::vector<std::string>>();
        cbm.weights = json_mat(j.at("weights"), "weights");
        cbm.bias = j.at("bias").get<Vec>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedLine, std::string("cbm: ") + e.what());
    }
    if (cbm.weights.rows() != cbm.concept_ids.size() || cbm.weights.cols() != cbm.class_ids.size() ||
        cbm.bias.size() != cbm.class_ids.size()) {
        throw Error(ErrorCode::DimMismatch, "cbm weights do not match concept/class ids");
    }
    return cbm;
}

void save_cbm(const std::string& path, const ConceptBottleneck& cbm) {
    write_text_file(path, cbm_json(cbm));
}

ConceptBottleneck load_cbm(const std::string& path) {
    return parse_cbm(read_text_file(path));
}

}  // namespace concept_align
