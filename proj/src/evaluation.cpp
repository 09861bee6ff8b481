#include "reclaim/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reclaim/errors.hpp"
#include "reclaim/numeric.hpp"
#include "reclaim/rng.hpp"

namespace reclaim {

namespace {

double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

ConfusionCounts confusion(std::span<const int> labels, std::span<const int> preds) {
    if (labels.size() != preds.size()) {
        throw DataError("confusion: labels and preds length mismatch (" +
                        std::to_string(labels.size()) + " vs " + std::to_string(preds.size()) + ")");
    }
    if (labels.empty()) throw DataError("confusion: empty input");
    ConfusionCounts c;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1) {
            preds[i] == 1 ? ++c.tp : ++c.fn;
        } else {
            preds[i] == 1 ? ++c.fp : ++c.tn;
        }
    }
    return c;
}

MetricsReport metrics_from_counts(const ConfusionCounts& c) {
    if (c.total() == 0) throw DataError("metrics: empty confusion counts");
    MetricsReport r;
    const auto tp = static_cast<double>(c.tp);
    const auto fp = static_cast<double>(c.fp);
    const auto fn = static_cast<double>(c.fn);
    const auto tn = static_cast<double>(c.tn);

    r.accuracy = (tp + tn) / static_cast<double>(c.total());
    r.precision_pos = safe_ratio(tp, tp + fp);
    r.recall_pos = safe_ratio(tp, tp + fn);
    r.f1_pos = safe_ratio(2.0 * tp, 2.0 * tp + fp + fn);
    r.precision_neg = safe_ratio(tn, tn + fn);
    r.recall_neg = safe_ratio(tn, tn + fp);
    r.f1_neg = safe_ratio(2.0 * tn, 2.0 * tn + fn + fp);
    r.macro_f1 = (r.f1_pos + r.f1_neg) / 2.0;
    return r;
}

MetricsReport metrics(std::span<const int> labels, std::span<const int> preds) {
    return metrics_from_counts(confusion(labels, preds));
}

double roc_auc(std::span<const int> labels, std::span<const double> scores) {
    if (labels.size() != scores.size()) throw DataError("roc_auc: length mismatch");
    const size_t n = labels.size();
    size_t pos = 0;
    for (int y : labels) pos += (y == 1);
    const size_t neg = n - pos;
    if (pos == 0 || neg == 0) {
        throw DataError("roc_auc: degenerate input, needs at least one positive and one negative");
    }

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Sum of average ranks (1-based) of the positives; ties share a rank.
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (size_t t = i; t < j; ++t) {
            if (labels[order[t]] == 1) rank_sum_pos += avg_rank;
        }
        i = j;
    }
    const double p = static_cast<double>(pos);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

MetricsReport prediction_metrics(std::span<const int> labels, std::span<const int> preds,
                                 std::span<const double> scores, std::span<const Lang> langs) {
    if (labels.size() != preds.size() || labels.size() != scores.size()) {
        throw DataError("prediction_metrics: length mismatch");
    }
    if (!langs.empty() && langs.size() != labels.size()) {
        throw DataError("prediction_metrics: langs length mismatch");
    }

    MetricsReport r = metrics(labels, preds);
    size_t pos = 0;
    for (int y : labels) pos += (y == 1);
    if (pos > 0 && pos < labels.size()) r.roc_auc = roc_auc(labels, scores);

    if (!langs.empty()) {
        for (Lang lang : kAllLangs) {
            std::vector<int> sub_labels, sub_preds;
            std::vector<double> sub_scores;
            for (size_t i = 0; i < labels.size(); ++i) {
                if (langs[i] == lang) {
                    sub_labels.push_back(labels[i]);
                    sub_preds.push_back(preds[i]);
                    sub_scores.push_back(scores[i]);
                }
            }
            if (sub_labels.empty()) continue;
            r.per_language.emplace_back(
                lang, prediction_metrics(sub_labels, sub_preds, sub_scores, {}));
        }
    }
    return r;
}

MetricsReport scored_metrics(std::span<const int> labels, std::span<const double> scores,
                             std::span<const Lang> langs, double threshold) {
    std::vector<int> preds(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) preds[i] = scores[i] >= threshold ? 1 : 0;
    return prediction_metrics(labels, preds, scores, langs);
}

std::vector<size_t> FoldSplit::assignment(size_t n) const {
    std::vector<size_t> fold_of(n, k);
    for (size_t f = 0; f < folds.size(); ++f) {
        for (size_t idx : folds[f]) fold_of[idx] = f;
    }
    return fold_of;
}

FoldSplit stratified_folds(const Corpus& corpus, size_t k, uint64_t seed) {
    if (k < 2) throw ConfigError("stratified_folds: k must be >= 2");
    if (corpus.empty()) throw DataError("stratified_folds: empty corpus");

    FoldSplit split;
    split.k = k;
    split.folds.assign(k, {});

    size_t cursor = 0;
    for (Lang lang : kAllLangs) {
        for (int label = 0; label < 2; ++label) {
            std::vector<size_t> members;
            for (size_t i = 0; i < corpus.size(); ++i) {
                if (corpus[i].lang == lang && corpus[i].label == label) members.push_back(i);
            }
            if (members.empty()) continue;

            const uint64_t stratum_tag =
                static_cast<uint64_t>(lang) * 2 + static_cast<uint64_t>(label);
            Rng rng(derive_seed(seed, "stratified_folds", stratum_tag));
            rng.shuffle(members);

            StratumCounts sc;
            sc.lang = lang;
            sc.label = label;
            sc.per_fold.assign(k, 0);
            for (size_t i = 0; i < members.size(); ++i) {
                const size_t fold = (cursor + i) % k;
                split.folds[fold].push_back(members[i]);
                sc.per_fold[fold] += 1;
            }
            cursor = (cursor + members.size()) % k;

            if (members.size() < k) {
                split.warnings.push_back(std::string("stratum (") + to_string(lang) + ", " +
                                         std::to_string(label) + ") has " +
                                         std::to_string(members.size()) +
                                         " members, fewer than k=" + std::to_string(k) +
                                         "; some folds lack it");
            }
            split.strata.push_back(std::move(sc));
        }
    }
    for (auto& fold : split.folds) std::sort(fold.begin(), fold.end());
    return split;
}

IntervalEstimate confidence_interval(std::span<const double> fold_scores, double level) {
    if (level != 0.95) throw ConfigError("confidence_interval: only level 0.95 is supported");
    const size_t n = fold_scores.size();
    if (n < 2) throw DataError("confidence_interval: needs at least 2 scores");

    double mean = 0.0;
    for (double s : fold_scores) mean += s;
    mean /= static_cast<double>(n);

    double ss = 0.0;
    for (double s : fold_scores) ss += (s - mean) * (s - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));

    IntervalEstimate est;
    est.mean = mean;
    est.level = level;
    est.half_width = t_critical_95(n - 1) * sd / std::sqrt(static_cast<double>(n));
    return est;
}

}  // namespace reclaim
