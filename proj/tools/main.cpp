// Copyright 2026 The concept-align Authors
// SPDX-License-Identifier: Apache-2.0
//
// concept-align: every pipeline of the library as a subcommand.
//
// Exit status: 0 ok, 2 usage, 3 data error, 4 numeric failure. Errors are
// printed to stderr as `ERROR <code>: <message>`.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cli_io.hpp"
#include "concept_align/ccem.hpp"
#include "concept_align/error.hpp"
#include "concept_align/explain.hpp"
#include "concept_align/extraction.hpp"
#include "concept_align/manifest.hpp"
#include "concept_align/metrics.hpp"
#include "concept_align/model_io.hpp"
#include "concept_align/objectives.hpp"
#include "concept_align/parallel.hpp"
#include "concept_align/rng.hpp"
#include "concept_align/toy_training.hpp"
#include "concept_align/zeroshot.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace concept_align;
using concept_align::cli::num;
using concept_align::cli::Sink;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    std::size_t threads = 1;
    std::string out;
    bool quiet = false;

    std::uint64_t seed_or(std::uint64_t fallback) const { return seed_opt->count() ? seed : fallback; }
};

/// Logit scales/biases and inference knobs; flags override model values.
struct ParamFlags {
    double t_g = 10.0, b_g = 0.0, t_l = 10.0, b_l = 0.0, alpha = 0.5, beta = 0.5;
    std::size_t k = 0;
    std::map<std::string, CLI::Option*> opts;

    void add(CLI::App* sub, bool alpha_flag, bool inference_flags) {
        opts["t_g"] = sub->add_option("--t-g", t_g, "Global logit scale")->capture_default_str();
        opts["b_g"] = sub->add_option("--b-g", b_g, "Global logit bias")->capture_default_str();
        opts["t_l"] = sub->add_option("--t-l", t_l, "Local logit scale")->capture_default_str();
        opts["b_l"] = sub->add_option("--b-l", b_l, "Local logit bias")->capture_default_str();
        if (alpha_flag) {
            sub->add_option("--alpha", alpha, "Weight of the region-concept term")->capture_default_str();
        }
        if (inference_flags) {
            sub->add_option("--beta", beta, "Local/global fusion weight")->capture_default_str();
            sub->add_option("--k", k, "Regions per concept (0 = min(16, r))")->capture_default_str();
        }
    }

    AlignmentParams resolve(const ToyModel* model) const {
        AlignmentParams p;
        p.t_g = t_g;
        p.b_g = b_g;
        p.t_l = t_l;
        p.b_l = b_l;
        if (model) {
            auto pick = [&](const char* name, double flag, double from_model) {
                return opts.at(name)->count() ? flag : from_model;
            };
            p.t_g = pick("t_g", t_g, model->params.t_g);
            p.b_g = pick("b_g", b_g, model->params.b_g);
            p.t_l = pick("t_l", t_l, model->params.t_l);
            p.b_l = pick("b_l", b_l, model->params.b_l);
        }
        p.alpha = alpha;
        p.beta = beta;
        p.k = k;
        validate_params(p);
        return p;
    }
};

std::unique_ptr<ToyModel> maybe_model(const std::string& path) {
    if (path.empty()) {
        return nullptr;
    }
    return std::make_unique<ToyModel>(load_toy_model(path));
}

void note(const Globals& g, const std::string& line) {
    if (!g.quiet) {
        std::cerr << line << "\n";
    }
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        out += c;
        if (c == '"') out += '"';
    }
    return out + "\"";
}

// ---------------------------------------------------------------------------
// loss / gradcheck

struct LossArgs {
    std::string images, texts, manifest, model;
    ParamFlags params;
};

void run_loss(const Globals& g, const LossArgs& a) {
    const auto model = maybe_model(a.model);
    const auto images = cli::load_images(a.images, model.get());
    const auto texts = cli::load_texts(a.texts, model.get());
    const auto data = load_manifest(a.manifest, images, texts);
    const auto params = a.params.resolve(model.get());
    const auto loss = total_loss(data.triplets, params);
    Sink out(g.out);
    out.stream() << "{\"it_align\":" << num(loss.it_align) << ",\"rc_align\":" << num(loss.rc_align)
                 << ",\"total\":" << num(loss.total) << ",\"alpha\":" << num(loss.alpha) << "}\n";
    out.finish();
}

struct GradcheckArgs {
    std::size_t h = 8, batch = 3, regions = 4, tokens = 5, max_concepts = 3, configs = 1;
    double step = 1e-5, tolerance = 1e-4, min_gap = 1e-4;
    ParamFlags params;
};

void run_gradcheck(const Globals& g, const GradcheckArgs& a) {
    if (a.h == 0 || a.batch == 0 || a.regions == 0 || a.tokens == 0 || a.max_concepts == 0 || a.configs == 0) {
        throw Error(ErrorCode::InvalidArgument, "sizes must be positive");
    }
    const auto params = a.params.resolve(nullptr);
    const std::uint64_t seed = g.seed_or(42);
    double worst = 0.0;
    std::size_t components = 0;
    std::size_t redrawn = 0;
    for (std::size_t c = 0; c < a.configs; ++c) {
        TripletBatch batch;
        for (std::uint64_t attempt = 0;; ++attempt) {
            batch = random_batch(a.batch, a.regions, a.tokens, a.max_concepts, a.h,
                                 derive_seed(derive_seed(seed, c), attempt));
            // Near-tied maxima make the loss non-differentiable within one step.
            if (min_argmax_gap(batch, params) >= a.min_gap || attempt >= 1000) {
                break;
            }
            ++redrawn;
        }
        const auto report = gradient_check(batch, params, a.step);
        worst = std::max(worst, report.max_error);
        components += report.components;
    }
    Sink out(g.out);
    out.stream() << "{\"max_relative_error\":" << num(worst) << ",\"configs\":" << a.configs
                 << ",\"components\":" << components << ",\"redrawn\":" << redrawn
                 << ",\"tolerance\":" << num(a.tolerance) << "}\n";
    out.finish();
    if (!(worst < a.tolerance)) {
        throw Error(ErrorCode::GradientMismatch,
                    "max relative error " + num(worst) + " exceeds tolerance " + num(a.tolerance));
    }
}

// ---------------------------------------------------------------------------
// gen-synthetic / train-toy

struct SynthArgs {
    SyntheticSpec spec;
};

EmbeddingRecord raw_record(const std::string& id, const Mat& slots) {
    Mat rows(0, slots.cols());
    rows.append_row(mean_pool(slots));
    for (std::size_t i = 0; i < slots.rows(); ++i) {
        rows.append_row(slots.row(i));
    }
    return {id, std::move(rows)};
}

void write_split(const fs::path& dir, const std::string& name, const SyntheticDataset& ds) {
    std::vector<EmbeddingRecord> images, texts;
    std::string manifest, labels = "image_id,label\n", assoc;
    for (const auto& t : ds.triplets) {
        images.push_back(raw_record(t.image.id, t.image.regions));
        texts.push_back(raw_record(t.text.id, t.text.tokens));
        manifest += manifest_line({t.image.id, t.text.id, t.concepts, t.label}) + "\n";
        labels += t.image.id + "," + std::to_string(t.label) + "\n";
        for (std::size_t j = 0; j < t.planted_concepts.size(); ++j) {
            assoc += name + "," + t.image.id + "," + synthetic_cui(t.planted_concepts[j]) + "," +
                     std::to_string(t.planted_regions[j]) + "\n";
        }
    }
    write_ccem(images, dir / (name + "_images.ccem"));
    write_ccem(texts, dir / (name + "_texts.ccem"));
    write_text_file((dir / (name + "_manifest.jsonl")).string(), manifest);
    write_text_file((dir / (name + "_labels.csv")).string(), labels);
    const auto assoc_path = dir / "associations.csv";
    std::string existing = fs::exists(assoc_path) && name != "train" ? read_text_file(assoc_path.string())
                                                                     : "split,image_id,cui,region\n";
    write_text_file(assoc_path.string(), existing + assoc);
}

void run_gen_synthetic(const Globals& g, SynthArgs a) {
    if (g.out.empty()) {
        throw Error(ErrorCode::InvalidArgument, "gen-synthetic needs --out DIR");
    }
    a.spec.seed = g.seed_or(1);
    const auto train = generate_synthetic(a.spec, Split::Train);
    const auto heldout = generate_synthetic(a.spec, Split::Heldout);
    const fs::path dir(g.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorCode::IoError, "cannot create '" + dir.string() + "': " + ec.message());
    }
    write_split(dir, "train", train);
    write_split(dir, "heldout", heldout);

    std::vector<EmbeddingRecord> concepts, class_texts, prompt_texts;
    for (std::size_t j = 0; j < train.text_prototypes.rows(); ++j) {
        Mat row(0, train.text_prototypes.cols());
        row.append_row(train.text_prototypes.row(j));
        concepts.push_back({synthetic_cui(j), std::move(row)});
    }
    json classes = json::array();
    for (std::size_t c = 0; c < train.class_concepts.size(); ++c) {
        Mat tokens(0, train.text_prototypes.cols());
        json ids = json::array();
        for (std::size_t j : train.class_concepts[c]) {
            tokens.append_row(train.text_prototypes.row(j));
            ids.push_back(synthetic_cui(j));
        }
        const std::string text_id = "class-" + std::to_string(c);
        class_texts.push_back(raw_record(text_id, tokens));
        classes.push_back({{"class_id", std::to_string(c)}, {"text", text_id}, {"concepts", ids}});
    }
    json prompts = json::array();
    for (const auto& p : synthetic_prompt_texts(train)) {
        prompt_texts.push_back(raw_record(p.positive.id, p.positive.tokens));
        prompt_texts.push_back(raw_record(p.negative.id, p.negative.tokens));
        prompts.push_back({{"cui", p.cui}, {"positive", p.positive.id}, {"negative", p.negative.id}});
    }
    write_ccem(concepts, dir / "concepts.ccem");
    write_ccem(class_texts, dir / "class_texts.ccem");
    write_ccem(prompt_texts, dir / "prompt_texts.ccem");
    write_text_file((dir / "classes.json").string(), classes.dump(1) + "\n");
    write_text_file((dir / "prompts.json").string(), prompts.dump(1) + "\n");
    const json spec = {{"n_concepts", a.spec.n_concepts},
                       {"n_classes", a.spec.n_classes},
                       {"samples_per_class", a.spec.samples_per_class},
                       {"concepts_per_class", a.spec.concepts_per_class},
                       {"regions", a.spec.regions},
                       {"tokens", a.spec.tokens},
                       {"d_img_raw", a.spec.d_img_raw},
                       {"d_txt_raw", a.spec.d_txt_raw},
                       {"n_background", a.spec.n_background},
                       {"noise_sigma", a.spec.noise_sigma},
                       {"seed", a.spec.seed}};
    write_text_file((dir / "spec.json").string(), spec.dump(1) + "\n");
    note(g, "wrote " + std::to_string(train.triplets.size()) + " train and " +
                std::to_string(heldout.triplets.size()) + " held-out triplets to " + dir.string());
}

/// Raw triplets from a CCEM/manifest split (row 0 of each record is dropped;
/// the encoder recomputes cls from the slots).
SyntheticDataset raw_dataset(const std::string& images_path, const std::string& texts_path,
                             const std::string& manifest_path) {
    const auto images = RecordStore(read_ccem(images_path));
    const auto texts = RecordStore(read_ccem(texts_path));
    const auto entries = read_manifest(manifest_path);
    SyntheticDataset ds;
    auto slots = [](const EmbeddingRecord& rec) {
        if (rec.rows.rows() < 2) {
            throw Error(ErrorCode::Truncated, "record '" + rec.id + "' has no slot rows");
        }
        Mat m(0, rec.rows.cols());
        for (std::size_t r = 1; r < rec.rows.rows(); ++r) {
            m.append_row(rec.rows.row(r));
        }
        return m;
    };
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        const std::string where = "manifest record " + std::to_string(i + 1) + ": ";
        if (!images.contains(e.image_id) || !texts.contains(e.text_id)) {
            throw Error(ErrorCode::UnknownId, where + "unknown image or text id");
        }
        RawTriplet t;
        t.image = {e.image_id, slots(images.at(e.image_id))};
        t.text = {e.text_id, slots(texts.at(e.text_id))};
        for (const auto& span : e.concepts) {
            validate_span(span, t.text.tokens.rows());
        }
        t.concepts = e.concepts;
        t.label = e.label.value_or(0);
        if (ds.triplets.empty()) {
            ds.spec.d_img_raw = t.image.regions.cols();
            ds.spec.d_txt_raw = t.text.tokens.cols();
        } else if (t.image.regions.cols() != ds.spec.d_img_raw || t.text.tokens.cols() != ds.spec.d_txt_raw) {
            throw Error(ErrorCode::DimMismatch, where + "raw width differs from earlier records");
        }
        ds.triplets.push_back(std::move(t));
    }
    if (ds.triplets.empty()) {
        throw Error(ErrorCode::EmptyInput, "manifest '" + manifest_path + "' has no records");
    }
    return ds;
}

struct ZeroshotInputs {
    std::string images, texts, concepts, classes;
};

struct TrainArgs {
    std::string data, images, texts, manifest;
    TrainConfig config;
    bool learn_local_scalars = false;
    double eval_beta = 0.5;
    std::size_t eval_k = 2;
};

double labelled_accuracy(const ImageStore& images, const std::vector<ClassSpec>& classes,
                         const std::vector<std::pair<std::string, std::string>>& labels,
                         const AlignmentParams& params, std::size_t threads) {
    std::vector<int> correct(labels.size(), 0);
    parallel_for(labels.size(), threads, [&](std::size_t i) {
        const auto pred = fuse_predict(images.at(labels[i].first), classes, params);
        correct[i] = classes[pred.argmax].class_id == labels[i].second ? 1 : 0;
    });
    std::size_t hits = 0;
    for (int c : correct) hits += static_cast<std::size_t>(c);
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

void run_train_toy(const Globals& g, TrainArgs a) {
    if (g.out.empty()) {
        throw Error(ErrorCode::InvalidArgument, "train-toy needs --out DIR");
    }
    const fs::path data(a.data);
    auto pick = [&](const std::string& explicit_path, const char* name) {
        if (!explicit_path.empty()) return explicit_path;
        if (a.data.empty()) {
            throw Error(ErrorCode::InvalidArgument, std::string("train-toy needs --data or --") + name);
        }
        return (data / (std::string("train_") + name + (std::string(name) == "manifest" ? ".jsonl" : ".ccem")))
            .string();
    };
    const auto ds = raw_dataset(pick(a.images, "images"), pick(a.texts, "texts"), pick(a.manifest, "manifest"));
    a.config.seed = g.seed_or(a.config.seed);
    a.config.freeze_local_scalars = !a.learn_local_scalars;
    const auto result = train(a.config, ds);
    const ToyModel model{result.encoder, result.params};

    const fs::path out_dir(g.out);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw Error(ErrorCode::IoError, "cannot create '" + out_dir.string() + "': " + ec.message());
    }
    save_toy_model((out_dir / "model.json").string(), model);
    write_text_file((out_dir / "trace.csv").string(), trace_csv(result.trace));

    json summary = {{"steps", result.trace.size()},
                    {"loss_head", smoothed_head(result.trace)},
                    {"loss_tail", smoothed_tail(result.trace)},
                    {"t_g", model.params.t_g},
                    {"b_g", model.params.b_g},
                    {"t_l", model.params.t_l},
                    {"b_l", model.params.b_l}};
    if (!a.data.empty() && fs::exists(data / "heldout_images.ccem") && fs::exists(data / "classes.json")) {
        const auto images = cli::load_images((data / "heldout_images.ccem").string(), &model);
        const auto texts = cli::load_texts((data / "class_texts.ccem").string(), &model);
        const auto concepts = cli::load_concepts((data / "concepts.ccem").string(), &model);
        const auto classes = cli::load_classes((data / "classes.json").string(), texts, concepts);
        const auto labels = cli::load_labels((data / "heldout_labels.csv").string());
        AlignmentParams p = model.params;
        p.beta = a.eval_beta;
        p.k = a.eval_k;
        summary["heldout_accuracy"] = labelled_accuracy(images, classes, labels, p, g.threads);
    }
    std::cout << summary.dump() << "\n";
}

// ---------------------------------------------------------------------------
// zeroshot / retrieve / annotate

struct ZeroshotArgs {
    ZeroshotInputs in;
    std::string model, labels;
    bool explain = false;
    ParamFlags params;
};

void run_zeroshot(const Globals& g, const ZeroshotArgs& a) {
    const auto model = maybe_model(a.model);
    const auto images = cli::load_images(a.in.images, model.get());
    const auto texts = cli::load_texts(a.in.texts, model.get());
    const auto concepts = a.in.concepts.empty() ? std::map<std::string, Vec>{}
                                                : cli::load_concepts(a.in.concepts, model.get());
    const auto classes = cli::load_classes(a.in.classes, texts, concepts);
    const auto params = a.params.resolve(model.get());

    const auto& items = images.items();
    std::vector<Prediction> preds(items.size());
    parallel_for(items.size(), g.threads, [&](std::size_t i) { preds[i] = fuse_predict(items[i], classes, params); });
    if (!preds.empty() && !preds.front().local_path_used) {
        note(g, "warning: no class has concepts; using the global path only");
    }

    Sink out(g.out);
    auto& os = out.stream();
    os << "image_id";
    for (const auto& c : classes) os << ",p_" << csv_field(c.class_id);
    os << ",argmax";
    if (a.explain) {
        for (const auto& c : classes) os << ",p_g_" << csv_field(c.class_id);
        for (const auto& c : classes) os << ",p_l_" << csv_field(c.class_id);
    }
    os << "\n";
    for (std::size_t i = 0; i < items.size(); ++i) {
        os << csv_field(items[i].id);
        for (double p : preds[i].p) os << "," << num(p);
        os << "," << csv_field(classes[preds[i].argmax].class_id);
        if (a.explain) {
            for (double p : preds[i].p_global) os << "," << num(p);
            for (double p : preds[i].p_local) os << "," << num(p);
        }
        os << "\n";
    }
    out.finish();

    if (!a.labels.empty()) {
        const auto labels = cli::load_labels(a.labels);
        if (labels.empty()) {
            throw Error(ErrorCode::EmptyInput, "labels file is empty");
        }
        note(g, "accuracy " + num(labelled_accuracy(images, classes, labels, params, g.threads)) + " (n=" +
                    std::to_string(labels.size()) + ")");
    }
}

struct RetrieveArgs {
    std::string images, texts, model, manifest;
    std::vector<std::size_t> ks{1, 5, 10};
};

void run_retrieve(const Globals& g, const RetrieveArgs& a) {
    const auto model = maybe_model(a.model);
    const auto images = cli::load_images(a.images, model.get());
    const auto texts = cli::load_texts(a.texts, model.get());
    if (images.size() == 0 || texts.size() == 0) {
        throw Error(ErrorCode::EmptyStore, "retrieval needs non-empty image and text stores");
    }
    std::vector<Vec> img_cls, txt_cls;
    std::map<std::string, std::size_t> img_index, txt_index;
    for (const auto& im : images.items()) {
        img_index[im.id] = img_cls.size();
        img_cls.push_back(im.cls);
    }
    for (const auto& t : texts.items()) {
        txt_index[t.id] = txt_cls.size();
        txt_cls.push_back(t.cls);
    }
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (!a.manifest.empty()) {
        for (const auto& e : read_manifest(a.manifest)) {
            if (!img_index.count(e.image_id) || !txt_index.count(e.text_id)) {
                throw Error(ErrorCode::UnknownId, "manifest pair " + e.image_id + " / " + e.text_id + " not in stores");
            }
            pairs.emplace_back(img_index[e.image_id], txt_index[e.text_id]);
        }
    } else {
        for (const auto& [id, i] : img_index) {
            if (const auto it = txt_index.find(id); it != txt_index.end()) {
                pairs.emplace_back(i, it->second);
            }
        }
        std::sort(pairs.begin(), pairs.end());
    }
    const auto report = retrieve(img_cls, txt_cls, pairs, a.ks, g.threads);
    Sink out(g.out);
    out.stream() << "direction,k,recall\n";
    for (const auto& r : report.query_to_candidate) out.stream() << "image_to_text," << r.k << "," << num(r.recall) << "\n";
    for (const auto& r : report.candidate_to_query) out.stream() << "text_to_image," << r.k << "," << num(r.recall) << "\n";
    out.finish();
}

struct AnnotateArgs {
    std::string images, texts, prompts, model;
    ParamFlags params;
};

void run_annotate(const Globals& g, const AnnotateArgs& a) {
    const auto model = maybe_model(a.model);
    const auto images = cli::load_images(a.images, model.get());
    const auto texts = cli::load_texts(a.texts, model.get());
    const auto prompts = cli::load_prompts(a.prompts, texts);
    const auto params = a.params.resolve(model.get());
    const auto& items = images.items();
    std::vector<std::vector<double>> probs(items.size());
    parallel_for(items.size(), g.threads, [&](std::size_t i) { probs[i] = annotate_concepts(items[i], prompts, params); });
    Sink out(g.out);
    out.stream() << "image_id,cui,presence\n";
    for (std::size_t i = 0; i < items.size(); ++i) {
        for (std::size_t j = 0; j < prompts.size(); ++j) {
            out.stream() << csv_field(items[i].id) << "," << csv_field(prompts[j].cui) << "," << num(probs[i][j]) << "\n";
        }
    }
    out.finish();
}

// ---------------------------------------------------------------------------
// cbm / concept-diff

struct CbmTrainArgs {
    std::string images, concepts, labels, model, features = "global";
    double c = 0.316;
    ParamFlags params;
};

void run_cbm_train(const Globals& g, const CbmTrainArgs& a) {
    const auto model = maybe_model(a.model);
    const auto images = cli::load_images(a.images, model.get());
    const auto concepts = cli::load_concepts(a.concepts, model.get());
    const auto labels = cli::load_labels(a.labels);
    if (concepts.empty()) {
        throw Error(ErrorCode::EmptyInput, "no concepts to build features from");
    }
    const auto params = a.params.resolve(model.get());
    std::vector<std::string> concept_ids;
    std::vector<Vec> embs;
    for (const auto& [id, v] : concepts) {
        concept_ids.push_back(id);
        embs.push_back(v);
    }
    Mat features(labels.size(), embs.size());
    std::vector<std::string> y;
    parallel_for(labels.size(), g.threads, [&](std::size_t i) {
        const auto& image = images.at(labels[i].first);
        const Vec f = a.features == "fused" ? fused_similarity_features(image, embs, params)
                                            : concept_similarity_features(image, embs);
        std::copy(f.begin(), f.end(), features.row(i).begin());
    });
    for (const auto& l : labels) y.push_back(l.second);
    CbmFitOptions options;
    options.l2_inverse_strength = a.c;
    CbmFitReport report;
    const auto cbm = train_cbm(features, y, concept_ids, options, &report);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        hits += cbm.class_ids[cbm_predict(cbm, features.row(i))] == y[i] ? 1 : 0;
    }
    Sink out(g.out);
    out.stream() << cbm_json(cbm);
    out.finish();
    note(g, "cbm steps " + std::to_string(report.steps) + ", grad max-norm " + num(report.grad_max_norm) +
                ", training accuracy " + num(static_cast<double>(hits) / static_cast<double>(labels.size())));
}

void write_ranking(const Globals& g, const std::vector<RankedConcept>& ranked, const char* weight_col) {
    Sink out(g.out);
    out.stream() << "rank,concept_id," << weight_col << "\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        out.stream() << i + 1 << "," << csv_field(ranked[i].concept_id) << "," << num(ranked[i].weight) << "\n";
    }
    out.finish();
}

struct CbmExplainArgs {
    std::vector<std::string> cbms;
    std::string class_id;
    std::size_t top = 0;
};

void run_cbm_explain(const Globals& g, const CbmExplainArgs& a) {
    write_ranking(g, concept_class_association(load_cbm(a.cbms.front()), a.class_id, a.top), "weight");
}

void run_cbm_inspect(const Globals& g, const CbmExplainArgs& a) {
    std::vector<ConceptBottleneck> models;
    for (const auto& path : a.cbms) models.push_back(load_cbm(path));
    write_ranking(g, disease_level_inspection(models, a.class_id, a.top), "mean_weight");
}

struct DiffArgs {
    std::string pos, neg, images, labels, positive_label, texts, prompts, model;
    double threshold = 0.5;
    ParamFlags params;
};

void run_concept_diff(const Globals& g, const DiffArgs& a) {
    const auto model = maybe_model(a.model);
    std::vector<ImageEmbedding> pos, neg;
    if (!a.images.empty()) {
        if (a.labels.empty() || a.positive_label.empty()) {
            throw Error(ErrorCode::InvalidArgument, "--images needs --labels and --positive-label");
        }
        const auto images = cli::load_images(a.images, model.get());
        for (const auto& [id, label] : cli::load_labels(a.labels)) {
            (label == a.positive_label ? pos : neg).push_back(images.at(id));
        }
    } else {
        if (a.pos.empty() || a.neg.empty()) {
            throw Error(ErrorCode::InvalidArgument, "give --pos and --neg, or --images with --labels");
        }
        pos = cli::load_images(a.pos, model.get()).items();
        neg = cli::load_images(a.neg, model.get()).items();
    }
    const auto texts = cli::load_texts(a.texts, model.get());
    const auto prompts = cli::load_prompts(a.prompts, texts);
    const auto params = a.params.resolve(model.get());
    const auto report = concept_presence_difference(pos, neg, prompts, params, a.threshold, g.threads);
    Sink out(g.out);
    out.stream() << "cui,n_pos,n_neg,prop_pos,prop_neg,D\n";
    for (const auto& r : sorted_by_d(report)) {
        out.stream() << csv_field(r.cui) << "," << r.n_pos << "," << r.n_neg << "," << num(r.prop_pos) << ","
                     << num(r.prop_neg) << "," << num(r.d) << "\n";
    }
    out.finish();
}

// ---------------------------------------------------------------------------
// extraction / stats

struct ExtractArgs {
    std::string vocab, captions;
    double threshold = 0.8;
};

void run_extract(const Globals& g, const ExtractArgs& a) {
    const auto vocab = load_vocab(a.vocab);
    const auto captions = load_captions(a.captions);
    const auto results = extract_all(captions, vocab, {a.threshold}, g.threads);
    Sink out(g.out);
    for (const auto& r : results) out.stream() << extraction_json(r) << "\n";
    out.finish();
}

struct StatsArgs {
    std::string extractions, manifest;
};

void run_stats(const Globals& g, const StatsArgs& a) {
    std::vector<ExtractionResult> results;
    if (!a.extractions.empty()) {
        std::stringstream ss(read_text_file(a.extractions));
        std::string line;
        while (std::getline(ss, line)) {
            if (line.find_first_not_of(" \t\r") != std::string::npos) {
                results.push_back(parse_extraction_json(line));
            }
        }
    } else if (!a.manifest.empty()) {
        for (const auto& e : read_manifest(a.manifest)) {
            ExtractionResult r;
            r.id = e.text_id;
            for (const auto& span : e.concepts) r.spans.push_back({0, 0, span.cui, ""});
            results.push_back(std::move(r));
        }
    } else {
        throw Error(ErrorCode::InvalidArgument, "stats needs --extractions or --manifest");
    }
    Sink out(g.out);
    out.stream() << "cui,count\n";
    for (const auto& c : corpus_stats(results)) out.stream() << csv_field(c.cui) << "," << c.count << "\n";
    out.finish();
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsArgs {
    std::string scores, predictions, labels, a, b;
    std::size_t ci = 0;
};

void write_metric(const Globals& g, const char* name, double point, const std::optional<BootstrapResult>& ci) {
    Sink out(g.out);
    out.stream() << "metric,value,ci_lo,ci_hi,ci_method,resamples,skipped\n";
    out.stream() << name << "," << num(point);
    if (ci) {
        out.stream() << "," << num(ci->lo) << "," << num(ci->hi) << ",percentile-bootstrap-95," << ci->resamples
                     << "," << ci->skipped << "\n";
    } else {
        out.stream() << ",,,none,0,0\n";
    }
    out.finish();
}

void run_metrics_auc(const Globals& g, const MetricsArgs& a) {
    const Mat scores = cli::load_numeric_csv(a.scores);
    const auto labels = cli::load_int_column(a.labels);
    if (scores.cols() == 1) {
        const Vec s(scores.values().begin(), scores.values().end());
        const double point = auc(s, labels);
        std::optional<BootstrapResult> ci;
        if (a.ci > 0) ci = auc_bootstrap(s, labels, a.ci, g.seed_or(7), g.threads);
        write_metric(g, "auc", point, ci);
        return;
    }
    const double point = macro_auc(scores, labels);
    std::optional<BootstrapResult> ci;
    if (a.ci > 0) {
        auto metric = [&](std::span<const std::size_t> idx) {
            Mat s(0, scores.cols());
            std::vector<int> l;
            for (std::size_t i : idx) {
                s.append_row(scores.row(i));
                l.push_back(labels[i]);
            }
            return macro_auc(s, l);
        };
        auto degenerate = [&](std::span<const std::size_t> idx) {
            std::set<int> seen;
            for (std::size_t i : idx) seen.insert(labels[i]);
            return seen.size() != scores.cols();
        };
        ci = bootstrap_ci(metric, labels.size(), a.ci, g.seed_or(7), degenerate, g.threads);
    }
    write_metric(g, "macro_auc", point, ci);
}

void run_metrics_acc(const Globals& g, const MetricsArgs& a) {
    const auto preds = cli::load_int_column(a.predictions);
    const auto labels = cli::load_int_column(a.labels);
    const double point = accuracy(preds, labels);
    std::optional<BootstrapResult> ci;
    if (a.ci > 0) ci = accuracy_bootstrap(preds, labels, a.ci, g.seed_or(7), g.threads);
    write_metric(g, "accuracy", point, ci);
}

void run_metrics_ttest(const Globals& g, const MetricsArgs& a) {
    const Mat xa = cli::load_numeric_csv(a.a);
    const Mat xb = cli::load_numeric_csv(a.b);
    if (xa.cols() != 1 || xb.cols() != 1) {
        throw Error(ErrorCode::MalformedRow, "t-test inputs must have one column");
    }
    const auto r = paired_ttest(xa.values(), xb.values());
    Sink out(g.out);
    out.stream() << "t,p,df,n\n" << num(r.t) << "," << num(r.p) << "," << r.df << "," << xa.rows() << "\n";
    out.finish();
}

int report(const std::string& code, const std::string& message, int status) {
    std::string flat = message;
    std::replace(flat.begin(), flat.end(), '\n', ' ');
    std::cerr << "ERROR " << code << ": " << flat << "\n";
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Concept-enhanced image-text alignment toolkit"};
    app.set_help_flag("--help", "Print this help message and exit");
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "Read options from a TOML/INI file (flags take precedence)");
    Globals g;
    g.seed_opt = app.add_option("--seed", g.seed, "Random seed (subcommand-specific default)");
    app.add_option("--threads", g.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output file (directory for gen-synthetic / train-toy); default stdout");
    app.add_flag("--quiet", g.quiet, "Suppress informational messages on stderr");

    std::function<void()> action;

    LossArgs loss;
    auto* s_loss = app.add_subcommand("loss", "Evaluate the alignment losses on a manifest");
    s_loss->add_option("--images", loss.images, "Image CCEM store")->required();
    s_loss->add_option("--texts", loss.texts, "Text CCEM store")->required();
    s_loss->add_option("--manifest", loss.manifest, "Triplet manifest (JSONL)")->required();
    s_loss->add_option("--model", loss.model, "Toy model: encodes raw stores and supplies t/b");
    loss.params.add(s_loss, true, false);
    s_loss->callback([&] { action = [&] { run_loss(g, loss); }; });

    GradcheckArgs gc;
    auto* s_gc = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
    s_gc->add_option("--h,--dim", gc.h, "Embedding width")->capture_default_str();
    s_gc->add_option("--batch", gc.batch, "Triplets per batch")->capture_default_str();
    s_gc->add_option("--regions", gc.regions, "Regions per image")->capture_default_str();
    s_gc->add_option("--tokens", gc.tokens, "Tokens per text")->capture_default_str();
    s_gc->add_option("--max-concepts", gc.max_concepts, "Max concept spans per text")->capture_default_str();
    s_gc->add_option("--configs", gc.configs, "Random configurations to check")->capture_default_str();
    s_gc->add_option("--step", gc.step, "Finite-difference step")->capture_default_str();
    s_gc->add_option("--tolerance", gc.tolerance, "Max allowed relative error")->capture_default_str();
    s_gc->add_option("--min-gap", gc.min_gap, "Redraw batches whose max-region margin is below this")
        ->capture_default_str();
    gc.params.add(s_gc, true, false);
    s_gc->callback([&] { action = [&] { run_gradcheck(g, gc); }; });

    SynthArgs synth;
    auto* s_syn = app.add_subcommand("gen-synthetic", "Write a seeded synthetic triplet dataset");
    s_syn->add_option("--n-concepts", synth.spec.n_concepts, "Concept count K")->capture_default_str();
    s_syn->add_option("--n-classes", synth.spec.n_classes, "Class count")->capture_default_str();
    s_syn->add_option("--samples-per-class", synth.spec.samples_per_class, "Samples per class")->capture_default_str();
    s_syn->add_option("--concepts-per-class", synth.spec.concepts_per_class, "Concepts owned by each class")
        ->capture_default_str();
    s_syn->add_option("--regions", synth.spec.regions, "Region slots per image")->capture_default_str();
    s_syn->add_option("--tokens", synth.spec.tokens, "Token slots per text")->capture_default_str();
    s_syn->add_option("--d-img", synth.spec.d_img_raw, "Raw image width")->capture_default_str();
    s_syn->add_option("--d-txt", synth.spec.d_txt_raw, "Raw text width")->capture_default_str();
    s_syn->add_option("--n-background", synth.spec.n_background, "Background vectors")->capture_default_str();
    s_syn->add_option("--noise", synth.spec.noise_sigma, "Noise sigma")->capture_default_str();
    s_syn->callback([&] { action = [&] { run_gen_synthetic(g, synth); }; });

    TrainArgs tr;
    auto* s_tr = app.add_subcommand("train-toy", "Train linear toy encoders on the total loss");
    s_tr->add_option("--data", tr.data, "Directory written by gen-synthetic");
    s_tr->add_option("--images", tr.images, "Raw image store (overrides --data)");
    s_tr->add_option("--texts", tr.texts, "Raw text store (overrides --data)");
    s_tr->add_option("--manifest", tr.manifest, "Manifest (overrides --data)");
    s_tr->add_option("--h,--dim", tr.config.h, "Embedding width")->capture_default_str();
    s_tr->add_option("--lr", tr.config.learning_rate, "Learning rate")->capture_default_str();
    s_tr->add_option("--steps", tr.config.steps, "Gradient steps")->capture_default_str();
    s_tr->add_option("--batch-size", tr.config.batch_size, "Triplets per step (0 = full batch)")
        ->capture_default_str();
    s_tr->add_option("--alpha", tr.config.alpha, "Weight of the region-concept term")->capture_default_str();
    s_tr->add_option("--momentum", tr.config.momentum, "Momentum")->capture_default_str();
    s_tr->add_option("--t-g", tr.config.t_g, "Initial global logit scale")->capture_default_str();
    s_tr->add_option("--b-g", tr.config.b_g, "Initial global logit bias")->capture_default_str();
    s_tr->add_option("--t-l", tr.config.t_l, "Initial local logit scale")->capture_default_str();
    s_tr->add_option("--b-l", tr.config.b_l, "Initial local logit bias")->capture_default_str();
    s_tr->add_option("--warmup-steps-without-rc", tr.config.warmup_steps_without_rc,
                     "Leading steps trained with alpha = 0")
        ->capture_default_str();
    s_tr->add_flag("--learn-local-scalars", tr.learn_local_scalars, "Also update t_l and b_l");
    s_tr->add_option("--eval-beta", tr.eval_beta, "Fusion weight for the held-out report")->capture_default_str();
    s_tr->add_option("--eval-k", tr.eval_k, "Top-k for the held-out report")->capture_default_str();
    s_tr->callback([&] { action = [&] { run_train_toy(g, tr); }; });

    ZeroshotArgs zs;
    auto* s_zs = app.add_subcommand("zeroshot", "Fused global/local zero-shot classification");
    s_zs->add_option("--images", zs.in.images, "Image CCEM store")->required();
    s_zs->add_option("--texts", zs.in.texts, "Text CCEM store holding the class texts")->required();
    s_zs->add_option("--concepts", zs.in.concepts, "Concept CCEM store (vector = mean of rows)");
    s_zs->add_option("--classes", zs.in.classes, "classes.json")->required();
    s_zs->add_option("--model", zs.model, "Toy model: encodes raw stores and supplies t/b");
    s_zs->add_option("--labels", zs.labels, "image_id,label CSV; prints accuracy to stderr");
    s_zs->add_flag("--explain", zs.explain, "Add p_g / p_l columns");
    zs.params.add(s_zs, false, true);
    s_zs->callback([&] { action = [&] { run_zeroshot(g, zs); }; });

    RetrieveArgs rt;
    auto* s_rt = app.add_subcommand("retrieve", "Bidirectional Recall@k on cls embeddings");
    s_rt->add_option("--images", rt.images, "Image CCEM store")->required();
    s_rt->add_option("--texts", rt.texts, "Text CCEM store")->required();
    s_rt->add_option("--model", rt.model, "Toy model for raw stores");
    s_rt->add_option("--manifest", rt.manifest, "Ground-truth pairs (default: equal ids)");
    s_rt->add_option("--k", rt.ks, "Cutoffs")->capture_default_str()->delimiter(',');
    s_rt->callback([&] { action = [&] { run_retrieve(g, rt); }; });

    AnnotateArgs an;
    auto* s_an = app.add_subcommand("annotate", "Concept presence from positive/negative prompts");
    s_an->add_option("--images", an.images, "Image CCEM store")->required();
    s_an->add_option("--texts", an.texts, "Text CCEM store holding the prompts")->required();
    s_an->add_option("--prompts", an.prompts, "prompts.json")->required();
    s_an->add_option("--model", an.model, "Toy model for raw stores");
    an.params.add(s_an, false, true);
    s_an->callback([&] { action = [&] { run_annotate(g, an); }; });

    auto* s_cbm = app.add_subcommand("cbm", "Concept bottleneck models");
    s_cbm->require_subcommand(1);
    CbmTrainArgs cbt;
    auto* s_cbt = s_cbm->add_subcommand("train", "Fit a CBM on concept-similarity features");
    s_cbt->add_option("--images", cbt.images, "Image CCEM store")->required();
    s_cbt->add_option("--concepts", cbt.concepts, "Concept CCEM store")->required();
    s_cbt->add_option("--labels", cbt.labels, "image_id,label CSV")->required();
    s_cbt->add_option("--model", cbt.model, "Toy model for raw stores");
    s_cbt->add_option("--C", cbt.c, "Inverse L2 strength")->capture_default_str();
    s_cbt->add_option("--features", cbt.features, "global | fused")
        ->capture_default_str()
        ->check(CLI::IsMember({"global", "fused"}));
    cbt.params.add(s_cbt, false, true);
    s_cbt->callback([&] { action = [&] { run_cbm_train(g, cbt); }; });
    CbmExplainArgs cbe;
    auto* s_cbe = s_cbm->add_subcommand("explain", "Rank concepts by CBM weight for a class");
    s_cbe->add_option("--cbm", cbe.cbms, "CBM JSON")->required()->expected(1);
    s_cbe->add_option("--class", cbe.class_id, "Class id")->required();
    s_cbe->add_option("--top", cbe.top, "Keep the top N (0 = all)")->capture_default_str();
    s_cbe->callback([&] { action = [&] { run_cbm_explain(g, cbe); }; });
    CbmExplainArgs cbi;
    auto* s_cbi = s_cbm->add_subcommand("inspect", "Rank concepts by weight averaged over CBMs");
    s_cbi->add_option("--cbm", cbi.cbms, "CBM JSON (repeatable)")->required();
    s_cbi->add_option("--class", cbi.class_id, "Class id")->required();
    s_cbi->add_option("--top", cbi.top, "Keep the top N (0 = all)")->capture_default_str();
    s_cbi->callback([&] { action = [&] { run_cbm_inspect(g, cbi); }; });

    DiffArgs df;
    auto* s_df = app.add_subcommand("concept-diff", "Concept presence difference between two image sets");
    s_df->add_option("--pos", df.pos, "Positive image store");
    s_df->add_option("--neg", df.neg, "Negative image store");
    s_df->add_option("--images", df.images, "Single store split by --labels / --positive-label");
    s_df->add_option("--labels", df.labels, "image_id,label CSV");
    s_df->add_option("--positive-label", df.positive_label, "Label of the positive set");
    s_df->add_option("--texts", df.texts, "Text store holding the prompts")->required();
    s_df->add_option("--prompts", df.prompts, "prompts.json")->required();
    s_df->add_option("--model", df.model, "Toy model for raw stores");
    s_df->add_option("--threshold", df.threshold, "Presence threshold")->capture_default_str();
    df.params.add(s_df, false, true);
    s_df->callback([&] { action = [&] { run_concept_diff(g, df); }; });

    ExtractArgs ex;
    auto* s_ex = app.add_subcommand("extract-concepts", "Dictionary longest-match concept extraction");
    s_ex->add_option("--vocab", ex.vocab, "Vocabulary TSV (cui, canonical name, synonym)")->required();
    s_ex->add_option("--captions", ex.captions, "Captions JSONL {id, caption}")->required();
    s_ex->add_option("--threshold", ex.threshold, "Match score threshold (exact matches score 1)")
        ->capture_default_str();
    s_ex->callback([&] { action = [&] { run_extract(g, ex); }; });

    StatsArgs st;
    auto* s_st = app.add_subcommand("stats", "Per-CUI frequency table");
    s_st->add_option("--extractions", st.extractions, "extract-concepts output");
    s_st->add_option("--manifest", st.manifest, "Triplet manifest");
    s_st->callback([&] { action = [&] { run_stats(g, st); }; });

    auto* s_me = app.add_subcommand("metrics", "Evaluation statistics");
    s_me->require_subcommand(1);
    MetricsArgs ma;
    auto* s_auc = s_me->add_subcommand("auc", "AUC (macro one-vs-rest for multi-column scores)");
    s_auc->add_option("--scores", ma.scores, "Scores CSV")->required();
    s_auc->add_option("--labels", ma.labels, "Labels CSV")->required();
    s_auc->add_option("--ci", ma.ci, "Bootstrap resamples (0 = no interval)")->capture_default_str();
    s_auc->callback([&] { action = [&] { run_metrics_auc(g, ma); }; });
    auto* s_acc = s_me->add_subcommand("acc", "Accuracy");
    s_acc->add_option("--predictions", ma.predictions, "Predicted labels CSV")->required();
    s_acc->add_option("--labels", ma.labels, "Labels CSV")->required();
    s_acc->add_option("--ci", ma.ci, "Bootstrap resamples (0 = no interval)")->capture_default_str();
    s_acc->callback([&] { action = [&] { run_metrics_acc(g, ma); }; });
    auto* s_tt = s_me->add_subcommand("ttest", "Two-sided paired t-test (items = rows: datasets or samples)");
    s_tt->add_option("--a", ma.a, "Per-item metric of system A")->required();
    s_tt->add_option("--b", ma.b, "Per-item metric of system B")->required();
    s_tt->callback([&] { action = [&] { run_metrics_ttest(g, ma); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report("Usage", e.what(), 2);
    }

    try {
        if (action) {
            action();
        }
    } catch (const Error& e) {
        const auto code = e.code();
        int status = 3;
        if (is_numeric_failure(code)) {
            status = 4;
        } else if (code == ErrorCode::InvalidArgument || code == ErrorCode::SpecInvalid) {
            status = 2;
        }
        return report(std::string(error_code_name(code)), e.what(), status);
    } catch (const std::exception& e) {
        return report("IoError", e.what(), 3);
    }
    return 0;
}
