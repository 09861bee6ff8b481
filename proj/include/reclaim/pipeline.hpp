#pragma once

#include <optional>
#include <string>
#include <vector>

#include "reclaim/augment.hpp"
#include "reclaim/calibrate.hpp"
#include "reclaim/corpus.hpp"
#include "reclaim/cross_validate.hpp"
#include "reclaim/evaluation.hpp"
#include "reclaim/hpo.hpp"
#include "reclaim/training.hpp"

namespace reclaim {

enum class RunId { run1, run2, run3, run4 };

const char* to_string(RunId id);
RunId run_id_from_string(const std::string& s);

struct PipelineConfig {
    std::string corpus_path;
    std::optional<std::string> embeddings_run1_path;  // hashed fallback when absent
    std::optional<std::string> embeddings_run2_path;  // required for run2/run4
    TranslatorEndpoint translator;
    SearchSpace space = SearchSpace::classifier_default();
    size_t k = 5;
    size_t n_trials = 50;
    uint64_t seed = 0;
    std::string output_dir = "out";
    size_t hash_dim = 256;
    size_t max_epochs = 10;
    LossConfig loss;
    std::optional<double> test_fraction;  // held-out test split mode when set
    std::vector<std::string> baseline_embeddings;
};

// Single JSON document; see README for the schema.
PipelineConfig load_pipeline_config(const std::string& path);

struct RunArtifact {
    RunId run_id = RunId::run1;
    std::vector<ScoredPrediction> predictions;  // out-of-fold, labels attached
    std::vector<int> preds_default;             // 0.5 rule
    std::vector<int> preds_thresholded;         // equals preds_default for run1/run2
    MetricsReport metric_report;
    std::optional<ThresholdMap> thresholds;  // run3/run4 only
    std::optional<MetricsReport> test_metric_report;  // test split mode only
    std::string dir;
};

// run1: augment -> 50-trial TPE study over CV macro-F1 -> final CV with the
// best parameters -> out-of-fold scored predictions and metrics at 0.5.
// run2: the same pipeline over the run2 embedding file.
// run3/run4: load the parent run's artifact, sweep per-language thresholds on
// its pooled out-of-fold validation scores, reclassify, re-score.
// Artifacts land under output_dir/<run_id>/ and reruns with unchanged inputs
// are byte-identical.
RunArtifact execute_run(const PipelineConfig& cfg, RunId run_id);

// Reads a run directory back (predictions + labels + thresholds); metrics are
// recomputed from the stored predictions.
RunArtifact load_run_artifact(const PipelineConfig& cfg, RunId run_id);

// Report bundle under output_dir/report/: label-distribution CSV, chi-square
// summary, merged HPO history CSV, threshold-curve CSV, and the per-run
// per-language metric table with run3-run1 / run4-run2 macro-F1 deltas.
void emit_report(const PipelineConfig& cfg, const std::vector<RunArtifact>& artifacts);

struct AnalyzeResult {
    ContingencyTable table;
    ChiSquareResult chi_square;
};

// Corpus analytics: label/language frequency table and the chi-square test,
// written under output_dir/analysis/.
AnalyzeResult run_analyze(const PipelineConfig& cfg);

struct BaselineRow {
    std::string source_tag;
    double accuracy = 0.0;
    double precision = 0.0;  // macro-averaged
    double recall = 0.0;     // macro-averaged
    double f1 = 0.0;         // macro-averaged
    double f1_half_width = 0.0;
};

// Hinge-mode (linear SVC style, C = 1.0) 5-fold CV per embedding file; the
// foundation-model comparison table, written to output_dir/analysis/baseline.csv.
std::vector<BaselineRow> run_baseline(const PipelineConfig& cfg);

// Prediction TSV row (header: id\tlang\tconf\tpred_default\tpred_thresholded).
// conf is kept as the exact emitted string so derived runs stay bit-identical.
struct PredictionRow {
    std::string id;
    Lang lang = Lang::en;
    std::string conf_text;
    double conf = 0.0;
    int pred_default = 0;
    int pred_thresholded = 0;
};

void save_predictions_tsv(const std::vector<PredictionRow>& rows, const std::string& path,
                          const std::string& provenance_comment);
std::vector<PredictionRow> load_predictions_tsv(const std::string& path);

}  // namespace reclaim
