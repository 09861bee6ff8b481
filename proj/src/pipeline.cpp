#include "reclaim/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "reclaim/errors.hpp"
#include "reclaim/hashing.hpp"
#include "reclaim/text_format.hpp"

namespace reclaim {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(RunId id) {
    switch (id) {
        case RunId::run1: return "run1";
        case RunId::run2: return "run2";
        case RunId::run3: return "run3";
        case RunId::run4: return "run4";
    }
    return "?";
}

RunId run_id_from_string(const std::string& s) {
    if (s == "run1") return RunId::run1;
    if (s == "run2") return RunId::run2;
    if (s == "run3") return RunId::run3;
    if (s == "run4") return RunId::run4;
    throw ConfigError("unknown run id \"" + s + "\" (expected run1..run4)");
}

namespace {

RunId parent_of(RunId id) {
    if (id == RunId::run3) return RunId::run1;
    if (id == RunId::run4) return RunId::run2;
    throw ConfigError("run has no parent");
}

ParamKind param_kind_from_string(const std::string& s) {
    if (s == "uniform") return ParamKind::uniform;
    if (s == "log_uniform") return ParamKind::log_uniform;
    if (s == "categorical") return ParamKind::categorical;
    throw ConfigError("unknown parameter kind \"" + s + "\"");
}

SearchSpace space_from_json(const json& obj) {
    SearchSpace space;
    for (const auto& p : obj) {
        ParamSpec spec;
        spec.name = p.at("name").get<std::string>();
        spec.kind = param_kind_from_string(p.at("kind").get<std::string>());
        if (spec.kind == ParamKind::categorical) {
            spec.choices = p.at("choices").get<std::vector<double>>();
        } else {
            spec.low = p.at("low").get<double>();
            spec.high = p.at("high").get<double>();
        }
        space.params.push_back(std::move(spec));
    }
    space.validate();
    return space;
}

}  // namespace

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json obj;
    try {
        obj = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": malformed JSON: " + e.what());
    }

    PipelineConfig cfg;
    try {
        cfg.corpus_path = obj.at("corpus").get<std::string>();
        if (obj.contains("embeddings_run1")) {
            cfg.embeddings_run1_path = obj.at("embeddings_run1").get<std::string>();
        }
        if (obj.contains("embeddings_run2")) {
            cfg.embeddings_run2_path = obj.at("embeddings_run2").get<std::string>();
        }
        if (obj.contains("translator")) {
            const json& t = obj.at("translator");
            const std::string kind = t.value("kind", "mock");
            if (kind == "mock") {
                cfg.translator.kind = TranslatorKind::mock;
            } else if (kind == "http" || kind == "http_chat_completions") {
                cfg.translator.kind = TranslatorKind::http_chat_completions;
            } else {
                throw ConfigError("translator.kind must be \"mock\" or \"http\"");
            }
            if (t.contains("base_url")) cfg.translator.base_url = t.at("base_url").get<std::string>();
            if (t.contains("model")) cfg.translator.model_name = t.at("model").get<std::string>();
            if (t.contains("cache_dir")) cfg.translator.cache_dir = t.at("cache_dir").get<std::string>();
            if (cfg.translator.kind == TranslatorKind::http_chat_completions &&
                !cfg.translator.base_url) {
                throw ConfigError("http translator requires translator.base_url");
            }
        }
        if (obj.contains("space")) cfg.space = space_from_json(obj.at("space"));
        cfg.k = obj.value("k", size_t{5});
        cfg.n_trials = obj.value("n_trials", size_t{50});
        cfg.seed = obj.value("seed", uint64_t{0});
        cfg.output_dir = obj.value("output_dir", std::string("out"));
        cfg.hash_dim = obj.value("hash_dim", size_t{256});
        cfg.max_epochs = obj.value("max_epochs", size_t{10});
        if (obj.contains("test_fraction")) cfg.test_fraction = obj.at("test_fraction").get<double>();
        if (obj.contains("baseline_embeddings")) {
            cfg.baseline_embeddings = obj.at("baseline_embeddings").get<std::vector<std::string>>();
        }
        if (obj.contains("loss")) {
            const json& l = obj.at("loss");
            const std::string kind = l.value("kind", "weighted_ce");
            if (kind == "weighted_ce") {
                cfg.loss.kind = LossKind::weighted_ce;
            } else if (kind == "hinge") {
                cfg.loss.kind = LossKind::hinge;
            } else {
                throw ConfigError("loss.kind must be \"weighted_ce\" or \"hinge\"");
            }
            cfg.loss.w0 = l.value("w0", cfg.loss.w0);
            cfg.loss.w1 = l.value("w1", cfg.loss.w1);
            cfg.loss.hinge_c = l.value("hinge_c", cfg.loss.hinge_c);
        }
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    if (cfg.k < 2) throw ConfigError("config: k must be >= 2");
    if (cfg.n_trials == 0) throw ConfigError("config: n_trials must be >= 1");
    if (cfg.test_fraction && (*cfg.test_fraction <= 0.0 || *cfg.test_fraction >= 1.0)) {
        throw ConfigError("config: test_fraction must lie in (0, 1)");
    }
    return cfg;
}

namespace {

// ------------------------- provenance -------------------------

std::string inputs_digest(const PipelineConfig& cfg, RunId run_id,
                          const std::vector<std::string>& extra_files) {
    std::string acc = "seed=" + std::to_string(cfg.seed);
    acc += ";corpus=" + sha256_file(cfg.corpus_path);
    if (run_id == RunId::run1 || run_id == RunId::run3) {
        acc += cfg.embeddings_run1_path
                   ? ";emb=" + sha256_file(*cfg.embeddings_run1_path)
                   : ";emb=hashed:" + std::to_string(cfg.hash_dim);
    }
    if (run_id == RunId::run2 || run_id == RunId::run4) {
        if (cfg.embeddings_run2_path) acc += ";emb=" + sha256_file(*cfg.embeddings_run2_path);
    }
    for (const auto& f : extra_files) acc += ";parent=" + sha256_file(f);
    return sha256_hex(acc);
}

std::string provenance_comment(const PipelineConfig& cfg, const std::string& digest) {
    return "seed=" + std::to_string(cfg.seed) + " inputs=" + digest;
}

// ------------------------- metrics serialization -------------------------

json metrics_to_json(const MetricsReport& r) {
    json obj;
    obj["accuracy"] = r.accuracy;
    obj["precision_pos"] = r.precision_pos;
    obj["recall_pos"] = r.recall_pos;
    obj["f1_pos"] = r.f1_pos;
    obj["precision_neg"] = r.precision_neg;
    obj["recall_neg"] = r.recall_neg;
    obj["f1_neg"] = r.f1_neg;
    obj["macro_f1"] = r.macro_f1;
    if (r.roc_auc) {
        obj["roc_auc"] = *r.roc_auc;
    } else {
        obj["roc_auc"] = nullptr;
    }
    if (!r.per_language.empty()) {
        json per_lang;
        for (const auto& [lang, sub] : r.per_language) {
            per_lang[to_string(lang)] = metrics_to_json(sub);
        }
        obj["per_language"] = per_lang;
    }
    return obj;
}

// ------------------------- data assembly -------------------------

struct RunData {
    Corpus augmented;          // full augmented corpus, 3N rows
    EmbeddingMatrix features;  // aligned with augmented
    // training subset (equals the whole augmented corpus unless a test
    // split is configured)
    Corpus train_corpus;
    EmbeddingMatrix train_features;
    // held-out native test rows (augmented-corpus indices), test mode only
    std::vector<size_t> test_rows;
};

EmbeddingMatrix take_feature_rows(const EmbeddingMatrix& src, const std::vector<size_t>& rows) {
    EmbeddingMatrix out;
    out.dim = src.dim;
    out.count = rows.size();
    out.source_tag = src.source_tag;
    out.data.reserve(rows.size() * src.dim);
    for (size_t r : rows) {
        const auto row = src.row(r);
        out.data.insert(out.data.end(), row.begin(), row.end());
    }
    return out;
}

Corpus take_corpus_rows(const Corpus& src, const std::vector<size_t>& rows) {
    std::vector<Example> ex;
    ex.reserve(rows.size());
    for (size_t r : rows) ex.push_back(src[r]);
    return Corpus(std::move(ex));
}

// Per-stratum shuffled cut of the native corpus: round(fraction * n) of each
// (lang, label) stratum goes to the test side.
std::vector<size_t> stratified_test_rows(const Corpus& native, double fraction, uint64_t seed) {
    std::vector<size_t> test;
    for (Lang lang : kAllLangs) {
        for (int label = 0; label < 2; ++label) {
            std::vector<size_t> members;
            for (size_t i = 0; i < native.size(); ++i) {
                if (native[i].lang == lang && native[i].label == label) members.push_back(i);
            }
            if (members.empty()) continue;
            Rng rng(derive_seed(seed, "test_split",
                                static_cast<uint64_t>(lang) * 2 + static_cast<uint64_t>(label)));
            rng.shuffle(members);
            const auto n_test = static_cast<size_t>(
                std::llround(fraction * static_cast<double>(members.size())));
            for (size_t i = 0; i < n_test && i < members.size(); ++i) test.push_back(members[i]);
        }
    }
    std::sort(test.begin(), test.end());
    return test;
}

RunData assemble_run_data(const PipelineConfig& cfg, RunId run_id, const Corpus& native) {
    RunData data;
    data.augmented = augment_corpus(native, cfg.translator);

    const bool is_run2 = (run_id == RunId::run2);
    if (is_run2) {
        if (!cfg.embeddings_run2_path) {
            throw ConfigError("run2 requires embeddings_run2 in the config");
        }
        data.features = load_embeddings(*cfg.embeddings_run2_path, data.augmented.size());
    } else if (cfg.embeddings_run1_path) {
        data.features = load_embeddings(*cfg.embeddings_run1_path, data.augmented.size());
    } else {
        data.features = hash_encode(data.augmented, cfg.hash_dim,
                                    derive_seed(cfg.seed, "hash_encode"));
    }

    if (!cfg.test_fraction) {
        data.train_corpus = data.augmented;
        data.train_features = data.features;
        return data;
    }

    // Hold out whole native examples: the native row and both of its
    // translations leave the training pool so no test content leaks in.
    // augment_corpus emits native i at augmented row 3i.
    const std::vector<size_t> test_native = stratified_test_rows(native, *cfg.test_fraction,
                                                                 cfg.seed);
    std::vector<bool> excluded(data.augmented.size(), false);
    for (size_t i : test_native) {
        excluded[3 * i] = true;
        excluded[3 * i + 1] = true;
        excluded[3 * i + 2] = true;
        data.test_rows.push_back(3 * i);
    }
    std::vector<size_t> train_rows;
    for (size_t r = 0; r < data.augmented.size(); ++r) {
        if (!excluded[r]) train_rows.push_back(r);
    }
    data.train_corpus = take_corpus_rows(data.augmented, train_rows);
    data.train_features = take_feature_rows(data.features, train_rows);
    return data;
}

TrainConfig train_config_from_params(const Params& params, const PipelineConfig& cfg) {
    TrainConfig tc;
    tc.learning_rate = params.at("learning_rate");
    tc.batch_size = static_cast<size_t>(params.at("batch_size"));
    tc.weight_decay = params.at("weight_decay");
    tc.dropout = params.at("dropout");
    tc.max_epochs = cfg.max_epochs;
    return tc;
}

}  // namespace

void save_predictions_tsv(const std::vector<PredictionRow>& rows, const std::string& path,
                          const std::string& provenance_comment) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write predictions: " + path);
    out << "id\tlang\tconf\tpred_default\tpred_thresholded\n";
    for (const auto& r : rows) {
        out << r.id << '\t' << to_string(r.lang) << '\t' << r.conf_text << '\t'
            << r.pred_default << '\t' << r.pred_thresholded << '\n';
    }
    if (!provenance_comment.empty()) out << "# " << provenance_comment << '\n';
    if (!out) throw DataError("write failed: " + path);
}

std::vector<PredictionRow> load_predictions_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open predictions: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "id\tlang\tconf\tpred_default\tpred_thresholded") {
        throw DataError(path + ": unexpected prediction header");
    }
    std::vector<PredictionRow> rows;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, '\t')) fields.push_back(field);
        if (fields.size() != 5) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": expected 5 fields");
        }
        PredictionRow row;
        row.id = fields[0];
        row.lang = lang_from_string(fields[1]);
        row.conf_text = fields[2];
        bool ok = false;
        row.conf = parse_double(fields[2], ok);
        if (!ok) throw DataError(path + ": line " + std::to_string(line_no) + ": bad conf value");
        auto parse_pred = [&](const std::string& s) {
            if (s == "0") return 0;
            if (s == "1") return 1;
            throw DataError(path + ": line " + std::to_string(line_no) + ": pred must be 0 or 1");
        };
        row.pred_default = parse_pred(fields[3]);
        row.pred_thresholded = parse_pred(fields[4]);
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

// ------------------------- run1 / run2 -------------------------

RunArtifact execute_training_run(const PipelineConfig& cfg, RunId run_id) {
    const Corpus native = load_corpus(cfg.corpus_path);
    const RunData data = assemble_run_data(cfg, run_id, native);
    const std::string digest = inputs_digest(cfg, run_id, {});
    const std::string provenance = provenance_comment(cfg, digest);

    const fs::path run_dir = fs::path(cfg.output_dir) / to_string(run_id);
    fs::create_directories(run_dir);
    save_corpus(data.augmented, (run_dir / "augmented.jsonl").string(), provenance);

    // 50-trial TPE study over cross-validated macro-F1. The CV seed is shared
    // by all trials so the objective is a pure function of the parameters.
    const uint64_t cv_seed = derive_seed(cfg.seed, "hpo-cv");
    TpeConfig tpe;
    tpe.seed = derive_seed(cfg.seed, "tpe");

    Objective objective = [&](const Params& params, const TrialPrunerHook& hook) {
        const TrainConfig tc = train_config_from_params(params, cfg);
        CvEpochHook epoch_hook = [&](size_t step, double f1) { return hook(step, f1); };
        const CvResult r = cross_validate(data.train_corpus, data.train_features, tc, cfg.loss,
                                          cfg.k, cv_seed, epoch_hook);
        return r.mean_macro_f1;  // ignored when the hook pruned the trial
    };
    const StudyResult study = optimize(objective, cfg.space, tpe, cfg.n_trials);

    save_study_jsonl(study.history, (run_dir / "trials.jsonl").string(), provenance);
    save_study_csv(study.history, cfg.space, (run_dir / "trials.csv").string(), provenance);

    // Final CV with the winning parameters reuses the study's CV seed, so its
    // mean macro-F1 reproduces the best trial's value exactly.
    const TrainConfig best_cfg = train_config_from_params(study.best.params, cfg);
    const CvResult final_cv = cross_validate(data.train_corpus, data.train_features, best_cfg,
                                             cfg.loss, cfg.k, cv_seed);
    save_cv_summary_csv(final_cv, (run_dir / "cv_summary.csv").string(), provenance);

    const fs::path ckpt_dir = run_dir / "checkpoints";
    fs::create_directories(ckpt_dir);
    for (size_t f = 0; f < final_cv.fold_checkpoints.size(); ++f) {
        save_checkpoint(final_cv.fold_checkpoints[f],
                        (ckpt_dir / ("fold" + std::to_string(f) + ".ckpt")).string(), provenance);
    }

    RunArtifact artifact;
    artifact.run_id = run_id;
    artifact.dir = run_dir.string();

    const std::vector<int> labels = data.train_corpus.labels();
    const std::vector<Lang> langs = data.train_corpus.langs();
    artifact.metric_report = scored_metrics(labels, final_cv.oof_scores, langs, 0.5);

    std::vector<PredictionRow> rows;
    for (size_t i = 0; i < data.train_corpus.size(); ++i) {
        const auto& ex = data.train_corpus[i];
        PredictionRow row;
        row.id = ex.id;
        row.lang = ex.lang;
        row.conf = final_cv.oof_scores[i];
        row.conf_text = format_double(row.conf);
        row.pred_default = final_cv.oof_preds[i];
        row.pred_thresholded = row.pred_default;  // single 0.5 rule at this stage
        rows.push_back(row);

        ScoredPrediction sp;
        sp.id = ex.id;
        sp.lang = ex.lang;
        sp.conf = row.conf;
        sp.label = ex.label;
        artifact.predictions.push_back(std::move(sp));
        artifact.preds_default.push_back(row.pred_default);
        artifact.preds_thresholded.push_back(row.pred_default);
    }
    save_predictions_tsv(rows, (run_dir / "predictions.tsv").string(), provenance);

    json metrics_doc;
    metrics_doc["run"] = to_string(run_id);
    metrics_doc["seed"] = cfg.seed;
    metrics_doc["inputs_sha256"] = digest;
    metrics_doc["source_tag"] = data.train_features.source_tag;
    metrics_doc["best_params"] = study.best.params;
    metrics_doc["best_trial_id"] = study.best.trial_id;
    metrics_doc["trials"] = {{"complete", study.n_complete},
                             {"pruned", study.n_pruned},
                             {"failed", study.n_failed}};
    metrics_doc["overall"] = metrics_to_json(artifact.metric_report);
    json folds = json::array();
    for (const auto& fr : final_cv.fold_reports) folds.push_back(metrics_to_json(fr));
    metrics_doc["folds"] = folds;
    metrics_doc["cv"] = {{"mean_macro_f1", final_cv.mean_macro_f1},
                         {"ci_half_width", final_cv.macro_f1_ci.half_width},
                         {"ci_level", final_cv.macro_f1_ci.level},
                         {"ci_method", final_cv.macro_f1_ci.method}};

    // Held-out test mode: refit one model on the whole training subset (one
    // internal stratified fold as validation) and score the untouched natives.
    if (!data.test_rows.empty()) {
        const FoldSplit inner = stratified_folds(data.train_corpus, cfg.k,
                                                 derive_seed(cfg.seed, "finalfit.split"));
        DatasetView train_view, val_view;
        train_view.features = &data.train_features;
        val_view.features = &data.train_features;
        const std::vector<int> sub_labels = data.train_corpus.labels();
        for (size_t f = 0; f < inner.folds.size(); ++f) {
            auto& view = (f == 0) ? val_view : train_view;
            for (size_t idx : inner.folds[f]) {
                view.indices.push_back(idx);
                view.labels.push_back(sub_labels[idx]);
            }
        }
        TrainConfig fit_cfg = best_cfg;
        fit_cfg.seed = derive_seed(cfg.seed, "finalfit");
        const Checkpoint final_model = train(train_view, val_view, fit_cfg, cfg.loss);
        save_checkpoint(final_model, (run_dir / "final_model.ckpt").string(), provenance);

        std::vector<PredictionRow> test_tsv;
        std::vector<int> test_labels, test_preds;
        std::vector<double> test_scores;
        std::vector<Lang> test_langs;
        for (size_t row_idx : data.test_rows) {
            const auto& ex = data.augmented[row_idx];
            const auto r = data.features.row(row_idx);
            const std::vector<double> x(r.begin(), r.end());
            const double conf = softmax_confidence(forward(final_model.model, x));
            PredictionRow row;
            row.id = ex.id;
            row.lang = ex.lang;
            row.conf = conf;
            row.conf_text = format_double(conf);
            row.pred_default = conf >= 0.5 ? 1 : 0;
            row.pred_thresholded = row.pred_default;
            test_tsv.push_back(row);
            test_labels.push_back(ex.label);
            test_preds.push_back(row.pred_default);
            test_scores.push_back(conf);
            test_langs.push_back(ex.lang);
        }
        save_predictions_tsv(test_tsv, (run_dir / "test_predictions.tsv").string(), provenance);
        artifact.test_metric_report =
            prediction_metrics(test_labels, test_preds, test_scores, test_langs);
        metrics_doc["test"] = metrics_to_json(*artifact.test_metric_report);
    }

    std::ofstream mout(run_dir / "metrics.json", std::ios::binary);
    if (!mout) throw DataError("cannot write metrics.json under " + run_dir.string());
    mout << metrics_doc.dump(2) << '\n';

    return artifact;
}

// ------------------------- run3 / run4 -------------------------

// Labels for prediction rows come from the parent's augmented corpus.
std::vector<ScoredPrediction> attach_labels(const std::vector<PredictionRow>& rows,
                                            const Corpus& augmented) {
    std::unordered_map<std::string, const Example*> by_id;
    for (const auto& ex : augmented.examples()) by_id.emplace(ex.id, &ex);
    std::vector<ScoredPrediction> preds;
    preds.reserve(rows.size());
    for (const auto& row : rows) {
        ScoredPrediction sp;
        sp.id = row.id;
        sp.lang = row.lang;
        sp.conf = row.conf;
        const auto it = by_id.find(row.id);
        if (it == by_id.end()) {
            throw DataError("prediction id \"" + row.id + "\" missing from augmented corpus");
        }
        sp.label = it->second->label;
        preds.push_back(std::move(sp));
    }
    return preds;
}

RunArtifact execute_threshold_run(const PipelineConfig& cfg, RunId run_id) {
    const RunId parent = parent_of(run_id);
    const fs::path parent_dir = fs::path(cfg.output_dir) / to_string(parent);
    const fs::path parent_preds = parent_dir / "predictions.tsv";
    const fs::path parent_corpus = parent_dir / "augmented.jsonl";
    if (!fs::exists(parent_preds) || !fs::exists(parent_corpus)) {
        throw DependencyError(std::string(to_string(run_id)) + " requires the " +
                              to_string(parent) + " artifact; run \"run --id " +
                              to_string(parent) + "\" first");
    }

    const std::vector<PredictionRow> parent_rows = load_predictions_tsv(parent_preds.string());
    const Corpus augmented = load_corpus(parent_corpus.string());
    std::vector<ScoredPrediction> predictions = attach_labels(parent_rows, augmented);

    const ThresholdMap tmap = sweep_thresholds(predictions);
    const ThresholdedPredictions refit = apply_thresholds(predictions, tmap);

    const std::string digest = inputs_digest(cfg, run_id, {parent_preds.string()});
    const std::string provenance = provenance_comment(cfg, digest);

    const fs::path run_dir = fs::path(cfg.output_dir) / to_string(run_id);
    fs::create_directories(run_dir);

    // conf strings are carried over from the parent verbatim, keeping run3
    // scores bit-identical to run1 (and run4 to run2).
    std::vector<PredictionRow> rows = parent_rows;
    for (size_t i = 0; i < rows.size(); ++i) rows[i].pred_thresholded = refit.preds[i];
    save_predictions_tsv(rows, (run_dir / "predictions.tsv").string(), provenance);
    save_threshold_report(tmap, (run_dir / "thresholds.json").string(), provenance);
    save_sweep_curves(predictions, (run_dir / "sweep_curves.csv").string(), provenance);

    RunArtifact artifact;
    artifact.run_id = run_id;
    artifact.dir = run_dir.string();
    artifact.predictions = predictions;
    artifact.thresholds = tmap;
    for (const auto& row : parent_rows) artifact.preds_default.push_back(row.pred_default);
    artifact.preds_thresholded = refit.preds;

    std::vector<int> labels;
    std::vector<double> scores;
    std::vector<Lang> langs;
    for (const auto& p : predictions) {
        labels.push_back(*p.label);
        scores.push_back(p.conf);
        langs.push_back(p.lang);
    }
    artifact.metric_report = prediction_metrics(labels, refit.preds, scores, langs);

    json metrics_doc;
    metrics_doc["run"] = to_string(run_id);
    metrics_doc["parent"] = to_string(parent);
    metrics_doc["seed"] = cfg.seed;
    metrics_doc["inputs_sha256"] = digest;
    metrics_doc["flips_vs_default"] = refit.flips_vs_default;
    metrics_doc["overall"] = metrics_to_json(artifact.metric_report);
    json taus;
    for (const auto& [lang, tau] : tmap.per_lang) taus[to_string(lang)] = tau;
    metrics_doc["thresholds"] = taus;

    // Thresholds are always fit on labeled validation scores; when the parent
    // carries a held-out test set they are merely applied to it.
    const fs::path parent_test = parent_dir / "test_predictions.tsv";
    if (fs::exists(parent_test)) {
        std::vector<PredictionRow> test_rows = load_predictions_tsv(parent_test.string());
        const Corpus native = load_corpus(cfg.corpus_path);
        std::vector<ScoredPrediction> test_preds = attach_labels(test_rows, native);
        const ThresholdedPredictions test_refit = apply_thresholds(test_preds, tmap);
        for (size_t i = 0; i < test_rows.size(); ++i) {
            test_rows[i].pred_thresholded = test_refit.preds[i];
        }
        save_predictions_tsv(test_rows, (run_dir / "test_predictions.tsv").string(), provenance);

        std::vector<int> t_labels;
        std::vector<double> t_scores;
        std::vector<Lang> t_langs;
        for (const auto& p : test_preds) {
            t_labels.push_back(*p.label);
            t_scores.push_back(p.conf);
            t_langs.push_back(p.lang);
        }
        artifact.test_metric_report =
            prediction_metrics(t_labels, test_refit.preds, t_scores, t_langs);
        metrics_doc["test"] = metrics_to_json(*artifact.test_metric_report);
    }

    std::ofstream mout(run_dir / "metrics.json", std::ios::binary);
    if (!mout) throw DataError("cannot write metrics.json under " + run_dir.string());
    mout << metrics_doc.dump(2) << '\n';

    return artifact;
}

}  // namespace

RunArtifact execute_run(const PipelineConfig& cfg, RunId run_id) {
    if (run_id == RunId::run1 || run_id == RunId::run2) {
        return execute_training_run(cfg, run_id);
    }
    return execute_threshold_run(cfg, run_id);
}

RunArtifact load_run_artifact(const PipelineConfig& cfg, RunId run_id) {
    const fs::path run_dir = fs::path(cfg.output_dir) / to_string(run_id);
    const fs::path preds_path = run_dir / "predictions.tsv";
    if (!fs::exists(preds_path)) {
        throw DependencyError(std::string("missing artifact for ") + to_string(run_id) + " at " +
                              preds_path.string());
    }

    // Labels come from the corpus the predictions were made on.
    fs::path corpus_path = run_dir / "augmented.jsonl";
    if (!fs::exists(corpus_path)) {
        const RunId parent = (run_id == RunId::run3)   ? RunId::run1
                             : (run_id == RunId::run4) ? RunId::run2
                                                       : run_id;
        corpus_path = fs::path(cfg.output_dir) / to_string(parent) / "augmented.jsonl";
    }
    if (!fs::exists(corpus_path)) {
        throw DependencyError(std::string("missing augmented corpus for ") + to_string(run_id));
    }

    const std::vector<PredictionRow> rows = load_predictions_tsv(preds_path.string());
    const Corpus augmented = load_corpus(corpus_path.string());

    RunArtifact artifact;
    artifact.run_id = run_id;
    artifact.dir = run_dir.string();
    artifact.predictions = attach_labels(rows, augmented);
    const fs::path thresholds_path = run_dir / "thresholds.json";
    if (fs::exists(thresholds_path)) {
        artifact.thresholds = load_threshold_report(thresholds_path.string());
    }

    std::vector<int> labels;
    std::vector<double> scores;
    std::vector<Lang> langs;
    for (size_t i = 0; i < rows.size(); ++i) {
        artifact.preds_default.push_back(rows[i].pred_default);
        artifact.preds_thresholded.push_back(rows[i].pred_thresholded);
        labels.push_back(*artifact.predictions[i].label);
        scores.push_back(rows[i].conf);
        langs.push_back(rows[i].lang);
    }
    artifact.metric_report = prediction_metrics(labels, artifact.preds_thresholded, scores, langs);
    return artifact;
}

namespace {

void write_label_distribution(std::ofstream& out, const std::string& dataset,
                              const Corpus& corpus) {
    const ContingencyTable table = label_language_table(corpus);
    for (size_t r = 0; r < kNumLangs; ++r) {
        const double rate = table.row_total(r) == 0
                                ? 0.0
                                : static_cast<double>(table.counts[r][1]) /
                                      static_cast<double>(table.row_total(r));
        out << dataset << ',' << to_string(static_cast<Lang>(r)) << ',' << table.counts[r][0]
            << ',' << table.counts[r][1] << ',' << format_double(rate) << '\n';
    }
}

const MetricsReport* language_block(const MetricsReport& r, Lang lang) {
    for (const auto& [l, sub] : r.per_language) {
        if (l == lang) return &sub;
    }
    return nullptr;
}

void write_metric_row(std::ofstream& out, const std::string& run, const std::string& scope,
                      const MetricsReport& m, const std::optional<double>& delta) {
    out << run << ',' << scope << ',' << format_double(m.accuracy) << ','
        << format_double(m.precision_pos) << ',' << format_double(m.recall_pos) << ','
        << format_double(m.f1_pos) << ',' << format_double(m.precision_neg) << ','
        << format_double(m.recall_neg) << ',' << format_double(m.f1_neg) << ','
        << format_double(m.macro_f1) << ',';
    if (m.roc_auc) out << format_double(*m.roc_auc);
    out << ',';
    if (delta) out << format_double(*delta);
    out << '\n';
}

}  // namespace

void emit_report(const PipelineConfig& cfg, const std::vector<RunArtifact>& artifacts) {
    if (artifacts.empty()) throw DataError("emit_report: no artifacts");

    const fs::path report_dir = fs::path(cfg.output_dir) / "report";
    fs::create_directories(report_dir);
    const Corpus corpus = load_corpus(cfg.corpus_path);
    const std::string provenance =
        provenance_comment(cfg, inputs_digest(cfg, RunId::run1, {}));

    // ---- label distribution (raw + augmented when available) ----
    {
        std::ofstream out(report_dir / "label_distribution.csv", std::ios::binary);
        if (!out) throw DataError("cannot write label_distribution.csv");
        out << "dataset,lang,label0,label1,positive_rate\n";
        write_label_distribution(out, "raw", corpus);
        for (const auto& a : artifacts) {
            if (a.run_id != RunId::run1 && a.run_id != RunId::run2) continue;
            const fs::path aug = fs::path(a.dir) / "augmented.jsonl";
            if (fs::exists(aug)) {
                write_label_distribution(out, "augmented", load_corpus(aug.string()));
                break;
            }
        }
        out << "# " << provenance << '\n';
    }

    // ---- chi-square summary ----
    {
        const ContingencyTable table = label_language_table(corpus);
        const ChiSquareResult chi = chi_square_independence(table);
        std::ofstream out(report_dir / "chi_square.csv", std::ios::binary);
        if (!out) throw DataError("cannot write chi_square.csv");
        out << "lang,label0,label1,row_total\n";
        for (size_t r = 0; r < kNumLangs; ++r) {
            out << to_string(static_cast<Lang>(r)) << ',' << table.counts[r][0] << ','
                << table.counts[r][1] << ',' << table.row_total(r) << '\n';
        }
        out << "# statistic=" << format_double(chi.statistic) << " dof=" << chi.dof
            << " p_value=" << format_double(chi.p_value) << '\n';
        out << "# " << provenance << '\n';
    }

    // ---- merged HPO history ----
    {
        std::ofstream out(report_dir / "hpo_history.csv", std::ios::binary);
        if (!out) throw DataError("cannot write hpo_history.csv");
        out << "run,trial_id,state,value";
        for (const auto& spec : cfg.space.params) out << ',' << spec.name;
        out << '\n';
        for (const auto& a : artifacts) {
            const fs::path log = fs::path(a.dir) / "trials.jsonl";
            if (!fs::exists(log)) continue;
            for (const auto& t : load_study_jsonl(log.string())) {
                out << to_string(a.run_id) << ',' << t.trial_id << ',' << to_string(t.state)
                    << ',';
                if (auto v = t.objective_value()) out << format_double(*v);
                for (const auto& spec : cfg.space.params) {
                    out << ',';
                    const auto it = t.params.find(spec.name);
                    if (it != t.params.end()) out << format_double(it->second);
                }
                out << '\n';
            }
        }
        out << "# " << provenance << '\n';
    }

    // ---- threshold curves ----
    {
        std::ofstream out(report_dir / "threshold_curves.csv", std::ios::binary);
        if (!out) throw DataError("cannot write threshold_curves.csv");
        out << "run,lang,tau,macro_f1,tpr,fpr\n";
        for (const auto& a : artifacts) {
            if (!a.thresholds) continue;
            for (Lang lang : kAllLangs) {
                for (const SweepPoint& pt : sweep_curve(a.predictions, lang)) {
                    out << to_string(a.run_id) << ',' << to_string(lang) << ','
                        << format_double(pt.tau) << ',' << format_double(pt.macro_f1) << ','
                        << format_double(pt.tpr) << ',' << format_double(pt.fpr) << '\n';
                }
            }
        }
        out << "# " << provenance << '\n';
    }

    // ---- per-run per-language metric table ----
    {
        std::ofstream out(report_dir / "metrics_table.csv", std::ios::binary);
        if (!out) throw DataError("cannot write metrics_table.csv");
        out << "run,scope,accuracy,precision_pos,recall_pos,f1_pos,precision_neg,recall_neg,"
               "f1_neg,macro_f1,roc_auc,delta_macro_f1\n";

        auto artifact_for = [&](RunId id) -> const RunArtifact* {
            for (const auto& a : artifacts) {
                if (a.run_id == id) return &a;
            }
            return nullptr;
        };

        for (const auto& a : artifacts) {
            const RunArtifact* parent = nullptr;
            if (a.run_id == RunId::run3) parent = artifact_for(RunId::run1);
            if (a.run_id == RunId::run4) parent = artifact_for(RunId::run2);

            std::optional<double> delta;
            if (parent) delta = a.metric_report.macro_f1 - parent->metric_report.macro_f1;
            write_metric_row(out, to_string(a.run_id), "overall", a.metric_report, delta);

            for (Lang lang : kAllLangs) {
                const MetricsReport* sub = language_block(a.metric_report, lang);
                if (!sub) continue;
                std::optional<double> sub_delta;
                if (parent) {
                    if (const MetricsReport* psub = language_block(parent->metric_report, lang)) {
                        sub_delta = sub->macro_f1 - psub->macro_f1;
                    }
                }
                write_metric_row(out, to_string(a.run_id), to_string(lang), *sub, sub_delta);
            }
        }
        out << "# " << provenance << '\n';
    }
}

AnalyzeResult run_analyze(const PipelineConfig& cfg) {
    const Corpus corpus = load_corpus(cfg.corpus_path);
    AnalyzeResult result;
    result.table = label_language_table(corpus);
    result.chi_square = chi_square_independence(result.table);

    const fs::path dir = fs::path(cfg.output_dir) / "analysis";
    fs::create_directories(dir);
    const std::string provenance =
        "seed=" + std::to_string(cfg.seed) + " inputs=" + sha256_file(cfg.corpus_path);

    std::ofstream out(dir / "label_distribution.csv", std::ios::binary);
    if (!out) throw DataError("cannot write label_distribution.csv");
    out << "dataset,lang,label0,label1,positive_rate\n";
    write_label_distribution(out, "raw", corpus);
    out << "# " << provenance << '\n';

    std::ofstream chi_out(dir / "chi_square.csv", std::ios::binary);
    if (!chi_out) throw DataError("cannot write chi_square.csv");
    chi_out << "lang,label0,label1,row_total\n";
    for (size_t r = 0; r < kNumLangs; ++r) {
        chi_out << to_string(static_cast<Lang>(r)) << ',' << result.table.counts[r][0] << ','
                << result.table.counts[r][1] << ',' << result.table.row_total(r) << '\n';
    }
    chi_out << "# statistic=" << format_double(result.chi_square.statistic)
            << " dof=" << result.chi_square.dof
            << " p_value=" << format_double(result.chi_square.p_value) << '\n';
    chi_out << "# " << provenance << '\n';
    return result;
}

std::vector<BaselineRow> run_baseline(const PipelineConfig& cfg) {
    const Corpus corpus = load_corpus(cfg.corpus_path);

    std::vector<EmbeddingMatrix> candidates;
    if (!cfg.baseline_embeddings.empty()) {
        for (const auto& path : cfg.baseline_embeddings) {
            candidates.push_back(load_embeddings(path, corpus.size()));
        }
    } else if (cfg.embeddings_run1_path) {
        candidates.push_back(load_embeddings(*cfg.embeddings_run1_path, corpus.size()));
    } else {
        candidates.push_back(hash_encode(corpus, cfg.hash_dim, derive_seed(cfg.seed, "hash_encode")));
    }

    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.batch_size = 32;
    tc.weight_decay = 0.0;
    tc.dropout = 0.0;
    tc.max_epochs = cfg.max_epochs;

    LossConfig hinge;
    hinge.kind = LossKind::hinge;
    hinge.hinge_c = 1.0;

    std::vector<BaselineRow> rows;
    for (const auto& emb : candidates) {
        const CvResult cv = cross_validate(corpus, emb, tc, hinge, cfg.k,
                                           derive_seed(cfg.seed, "baseline"));
        BaselineRow row;
        row.source_tag = emb.source_tag;
        double acc = 0.0, prec = 0.0, rec = 0.0;
        for (const auto& fr : cv.fold_reports) {
            acc += fr.accuracy;
            prec += (fr.precision_pos + fr.precision_neg) / 2.0;
            rec += (fr.recall_pos + fr.recall_neg) / 2.0;
        }
        const auto n = static_cast<double>(cv.fold_reports.size());
        row.accuracy = acc / n;
        row.precision = prec / n;
        row.recall = rec / n;
        row.f1 = cv.mean_macro_f1;
        row.f1_half_width = cv.macro_f1_ci.half_width;
        rows.push_back(std::move(row));
    }

    const fs::path dir = fs::path(cfg.output_dir) / "analysis";
    fs::create_directories(dir);
    std::ofstream out(dir / "baseline.csv", std::ios::binary);
    if (!out) throw DataError("cannot write baseline.csv");
    out << "embedding_model,accuracy,precision,recall,f1,f1_ci95_half_width\n";
    for (const auto& row : rows) {
        out << row.source_tag << ',' << format_double(row.accuracy) << ','
            << format_double(row.precision) << ',' << format_double(row.recall) << ','
            << format_double(row.f1) << ',' << format_double(row.f1_half_width) << '\n';
    }
    out << "# seed=" << cfg.seed << " inputs=" << sha256_file(cfg.corpus_path) << '\n';
    return rows;
}

}  // namespace reclaim
