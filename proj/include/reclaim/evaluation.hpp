#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "reclaim/corpus.hpp"

namespace reclaim {

struct ConfusionCounts {
    long long tp = 0;
    long long fp = 0;
    long long fn = 0;
    long long tn = 0;

    long long total() const { return tp + fp + fn + tn; }
};

// Per-class precision/recall/F1 with the 0/0 -> 0 convention, macro-F1 as the
// unweighted mean of the two class F1s. roc_auc is present only when the
// report was built from scores with both classes represented.
struct MetricsReport {
    double accuracy = 0.0;
    double precision_pos = 0.0;
    double recall_pos = 0.0;
    double f1_pos = 0.0;
    double precision_neg = 0.0;
    double recall_neg = 0.0;
    double f1_neg = 0.0;
    double macro_f1 = 0.0;
    std::optional<double> roc_auc;
    std::vector<std::pair<Lang, MetricsReport>> per_language;
};

ConfusionCounts confusion(std::span<const int> labels, std::span<const int> preds);
MetricsReport metrics_from_counts(const ConfusionCounts& counts);
MetricsReport metrics(std::span<const int> labels, std::span<const int> preds);

// Threshold-free AUC over (positive, negative) pairs, ties counted half.
// Computed via tie-aware average ranks; equals the pairwise definition exactly.
// Throws DataError when only one class is present.
double roc_auc(std::span<const int> labels, std::span<const double> scores);

// Full report for explicit predictions: confusion metrics, AUC from the
// scores when well defined, and per-language sub-reports when langs are
// supplied.
MetricsReport prediction_metrics(std::span<const int> labels, std::span<const int> preds,
                                 std::span<const double> scores, std::span<const Lang> langs);

// Same, with preds derived from a single decision threshold
// (score >= threshold -> 1).
MetricsReport scored_metrics(std::span<const int> labels, std::span<const double> scores,
                             std::span<const Lang> langs, double threshold);

struct StratumCounts {
    Lang lang = Lang::en;
    int label = 0;
    std::vector<size_t> per_fold;
};

struct FoldSplit {
    size_t k = 0;
    std::vector<std::vector<size_t>> folds;  // disjoint, cover 0..n-1
    std::vector<StratumCounts> strata;
    std::vector<std::string> warnings;  // set when a stratum is smaller than k

    // fold index of each corpus row
    std::vector<size_t> assignment(size_t n) const;
};

// Joint (language, label) stratification. Within each stratum, indices are
// shuffled by (seed, stratum tag) and dealt to consecutive folds; the deal
// cursor carries over between strata so fold sizes stay balanced per language.
// Per-stratum per-fold counts differ by at most 1.
FoldSplit stratified_folds(const Corpus& corpus, size_t k, uint64_t seed);

struct IntervalEstimate {
    double mean = 0.0;
    double half_width = 0.0;
    double level = 0.95;
    std::string method = "student-t";
};

// mean +/- t_{k-1, 0.975} * s / sqrt(k) over fold scores. Only level 0.95 is
// supported. Throws DataError with fewer than 2 scores.
IntervalEstimate confidence_interval(std::span<const double> fold_scores, double level = 0.95);

}  // namespace reclaim
