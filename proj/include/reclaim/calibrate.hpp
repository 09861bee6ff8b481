#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reclaim/corpus.hpp"

namespace reclaim {

struct ScoredPrediction {
    std::string id;
    Lang lang = Lang::en;
    double conf = 0.0;             // P(reclamatory) in [0, 1]
    std::optional<int> label;      // present for validation, absent for test
};

struct ThresholdDiagnostics {
    double macro_f1_at_tau = 0.0;
    double macro_f1_at_default = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
};

struct ThresholdMap {
    std::map<Lang, double> per_lang;
    double default_tau = 0.5;  // applies to languages without an entry
    std::map<Lang, ThresholdDiagnostics> diagnostics;
};

// Per-language threshold selection. Candidates are {0, 1} plus midpoints of
// consecutive distinct confidence values, which realize every achievable
// confusion matrix; the candidate maximizing macro-F1 of (conf >= tau -> 1)
// wins, ties broken toward 0.5 and then toward the smaller tau. Endpoint
// winners are mapped to a labeling-equivalent interior value. Throws
// DataError when a language present in the input lacks a positive or a
// negative labeled example.
ThresholdMap sweep_thresholds(const std::vector<ScoredPrediction>& validation);

struct SweepPoint {
    double tau = 0.0;
    double macro_f1 = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
};

// Full candidate curve for one language (threshold-analysis plot data).
std::vector<SweepPoint> sweep_curve(const std::vector<ScoredPrediction>& validation, Lang lang);

struct ThresholdedPredictions {
    std::vector<int> preds;       // aligned with input order
    size_t flips_vs_default = 0;  // disagreements with the plain 0.5 rule
};

// pred = 1 iff conf >= tau(lang); languages missing from the map fall back to
// default_tau.
ThresholdedPredictions apply_thresholds(const std::vector<ScoredPrediction>& predictions,
                                        const ThresholdMap& tmap);

// {lang: {tau, macro_f1_at_tau, macro_f1_at_default, tpr, fpr}}
void save_threshold_report(const ThresholdMap& tmap, const std::string& path,
                           const std::string& provenance_comment = "");
ThresholdMap load_threshold_report(const std::string& path);

// CSV: lang,tau,macro_f1,tpr,fpr over every candidate threshold.
void save_sweep_curves(const std::vector<ScoredPrediction>& validation, const std::string& path,
                       const std::string& provenance_comment = "");

}  // namespace reclaim
