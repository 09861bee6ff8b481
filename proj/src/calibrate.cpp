#include "reclaim/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "reclaim/errors.hpp"
#include "reclaim/evaluation.hpp"
#include "reclaim/text_format.hpp"

namespace reclaim {

using nlohmann::json;

namespace {

struct LabeledScores {
    std::vector<double> confs;
    std::vector<int> labels;
};

LabeledScores labeled_scores_for(const std::vector<ScoredPrediction>& preds, Lang lang) {
    LabeledScores out;
    for (const auto& p : preds) {
        if (p.lang != lang || !p.label) continue;
        if (p.conf < 0.0 || p.conf > 1.0) {
            throw DataError("sweep_thresholds: conf out of [0,1] for id \"" + p.id + "\"");
        }
        out.confs.push_back(p.conf);
        out.labels.push_back(*p.label);
    }
    return out;
}

std::vector<double> candidate_thresholds(const std::vector<double>& confs) {
    std::vector<double> sorted = confs;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    std::vector<double> cands;
    cands.push_back(0.0);
    for (size_t i = 0; i + 1 < sorted.size(); ++i) {
        cands.push_back((sorted[i] + sorted[i + 1]) / 2.0);
    }
    cands.push_back(1.0);
    return cands;
}

SweepPoint evaluate_threshold(const LabeledScores& data, double tau) {
    std::vector<int> preds(data.confs.size());
    for (size_t i = 0; i < data.confs.size(); ++i) preds[i] = data.confs[i] >= tau ? 1 : 0;
    const ConfusionCounts c = confusion(data.labels, preds);
    SweepPoint pt;
    pt.tau = tau;
    pt.macro_f1 = metrics_from_counts(c).macro_f1;
    pt.tpr = (c.tp + c.fn) == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    pt.fpr = (c.fp + c.tn) == 0 ? 0.0 : static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
    return pt;
}

}  // namespace

std::vector<SweepPoint> sweep_curve(const std::vector<ScoredPrediction>& validation, Lang lang) {
    const LabeledScores data = labeled_scores_for(validation, lang);
    if (data.confs.empty()) return {};
    std::vector<SweepPoint> curve;
    for (double tau : candidate_thresholds(data.confs)) {
        curve.push_back(evaluate_threshold(data, tau));
    }
    return curve;
}

ThresholdMap sweep_thresholds(const std::vector<ScoredPrediction>& validation) {
    ThresholdMap tmap;
    for (Lang lang : kAllLangs) {
        const LabeledScores data = labeled_scores_for(validation, lang);
        if (data.confs.empty()) continue;  // language absent, default threshold applies

        const long long pos = std::count(data.labels.begin(), data.labels.end(), 1);
        if (pos == 0 || pos == static_cast<long long>(data.labels.size())) {
            throw DataError(std::string("sweep_thresholds: language ") + to_string(lang) +
                            " has a single label class, cannot calibrate");
        }

        SweepPoint best;
        bool have_best = false;
        for (double tau : candidate_thresholds(data.confs)) {
            const SweepPoint pt = evaluate_threshold(data, tau);
            if (!have_best) {
                best = pt;
                have_best = true;
                continue;
            }
            if (pt.macro_f1 > best.macro_f1) {
                best = pt;
            } else if (pt.macro_f1 == best.macro_f1) {
                const double d_new = std::abs(pt.tau - 0.5);
                const double d_old = std::abs(best.tau - 0.5);
                if (d_new < d_old || (d_new == d_old && pt.tau < best.tau)) best = pt;
            }
        }

        // Endpoint winners get a labeling-equivalent interior representative,
        // keeping every stored tau inside (0, 1).
        double tau = best.tau;
        const auto [min_it, max_it] = std::minmax_element(data.confs.begin(), data.confs.end());
        if (tau == 0.0 && *min_it > 0.0) tau = *min_it;
        if (tau == 1.0 && *max_it < 1.0) tau = (*max_it + 1.0) / 2.0;

        tmap.per_lang[lang] = tau;
        ThresholdDiagnostics diag;
        diag.macro_f1_at_tau = best.macro_f1;
        diag.macro_f1_at_default = evaluate_threshold(data, 0.5).macro_f1;
        diag.tpr = best.tpr;
        diag.fpr = best.fpr;
        tmap.diagnostics[lang] = diag;
    }
    if (tmap.per_lang.empty()) {
        throw DataError("sweep_thresholds: no labeled validation predictions");
    }
    return tmap;
}

ThresholdedPredictions apply_thresholds(const std::vector<ScoredPrediction>& predictions,
                                        const ThresholdMap& tmap) {
    ThresholdedPredictions out;
    out.preds.reserve(predictions.size());
    for (const auto& p : predictions) {
        const auto it = tmap.per_lang.find(p.lang);
        const double tau = it != tmap.per_lang.end() ? it->second : tmap.default_tau;
        const int pred = p.conf >= tau ? 1 : 0;
        const int pred_default = p.conf >= 0.5 ? 1 : 0;
        if (pred != pred_default) ++out.flips_vs_default;
        out.preds.push_back(pred);
    }
    return out;
}

void save_threshold_report(const ThresholdMap& tmap, const std::string& path,
                           const std::string& provenance_comment) {
    json report;
    for (const auto& [lang, tau] : tmap.per_lang) {
        json entry;
        entry["tau"] = tau;
        const auto it = tmap.diagnostics.find(lang);
        if (it != tmap.diagnostics.end()) {
            entry["macro_f1_at_tau"] = it->second.macro_f1_at_tau;
            entry["macro_f1_at_default"] = it->second.macro_f1_at_default;
            entry["tpr"] = it->second.tpr;
            entry["fpr"] = it->second.fpr;
        }
        report[to_string(lang)] = entry;
    }
    report["default"] = tmap.default_tau;
    if (!provenance_comment.empty()) report["provenance"] = provenance_comment;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write threshold report: " + path);
    out << report.dump(2) << '\n';
    if (!out) throw DataError("write failed: " + path);
}

ThresholdMap load_threshold_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open threshold report: " + path);
    json report;
    try {
        report = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path + ": malformed threshold report: " + e.what());
    }
    ThresholdMap tmap;
    if (report.contains("default")) tmap.default_tau = report.at("default").get<double>();
    for (Lang lang : kAllLangs) {
        const char* key = to_string(lang);
        if (!report.contains(key)) continue;
        const json& entry = report.at(key);
        tmap.per_lang[lang] = entry.at("tau").get<double>();
        ThresholdDiagnostics diag;
        diag.macro_f1_at_tau = entry.value("macro_f1_at_tau", 0.0);
        diag.macro_f1_at_default = entry.value("macro_f1_at_default", 0.0);
        diag.tpr = entry.value("tpr", 0.0);
        diag.fpr = entry.value("fpr", 0.0);
        tmap.diagnostics[lang] = diag;
    }
    return tmap;
}

void save_sweep_curves(const std::vector<ScoredPrediction>& validation, const std::string& path,
                       const std::string& provenance_comment) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write sweep curves: " + path);
    out << "lang,tau,macro_f1,tpr,fpr\n";
    for (Lang lang : kAllLangs) {
        for (const SweepPoint& pt : sweep_curve(validation, lang)) {
            out << to_string(lang) << ',' << format_double(pt.tau) << ','
                << format_double(pt.macro_f1) << ',' << format_double(pt.tpr) << ','
                << format_double(pt.fpr) << '\n';
        }
    }
    if (!provenance_comment.empty()) out << "# " << provenance_comment << '\n';
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace reclaim
