#pragma once

#include <functional>

#include "reclaim/corpus.hpp"
#include "reclaim/evaluation.hpp"
#include "reclaim/features.hpp"
#include "reclaim/training.hpp"

namespace reclaim {

struct CvResult {
    std::vector<MetricsReport> fold_reports;  // in fold-index order
    IntervalEstimate macro_f1_ci;
    double mean_macro_f1 = 0.0;

    // Out-of-fold confidence scores / default-threshold predictions, aligned
    // with corpus rows. Every example is scored by the fold model that held
    // it out.
    std::vector<double> oof_scores;
    std::vector<int> oof_preds;
    std::vector<size_t> fold_of;
    std::vector<Checkpoint> fold_checkpoints;
    bool stopped_early = false;  // a CvEpochHook asked to stop mid-study
};

// continue -> true; step is a global (fold-major, epoch-minor) counter so
// intermediate values of different trials are comparable position by position.
using CvEpochHook = std::function<bool(size_t step, double val_macro_f1)>;

// Stratified k-fold cross-validation: train on k-1 folds, score the held-out
// fold at threshold 0.5, fold reports merged in fold order plus a 95% CI on
// macro-F1. Deterministic given seed.
CvResult cross_validate(const Corpus& corpus, const EmbeddingMatrix& embeddings,
                        const TrainConfig& cfg, const LossConfig& loss_cfg, size_t k,
                        uint64_t seed, const CvEpochHook& epoch_hook = nullptr);

// One row per fold plus a mean/CI row.
void save_cv_summary_csv(const CvResult& cv, const std::string& path,
                         const std::string& provenance_comment = "");

}  // namespace reclaim
