#include "reclaim/cross_validate.hpp"

#include <fstream>

#include "reclaim/errors.hpp"
#include "reclaim/text_format.hpp"

namespace reclaim {

CvResult cross_validate(const Corpus& corpus, const EmbeddingMatrix& embeddings,
                        const TrainConfig& cfg, const LossConfig& loss_cfg, size_t k,
                        uint64_t seed, const CvEpochHook& epoch_hook) {
    if (embeddings.count != corpus.size()) {
        throw DataError("cross_validate: embeddings (" + std::to_string(embeddings.count) +
                        " rows) not aligned with corpus (" + std::to_string(corpus.size()) + ")");
    }

    const FoldSplit split = stratified_folds(corpus, k, derive_seed(seed, "cv.split"));
    const std::vector<int> labels = corpus.labels();
    const std::vector<Lang> langs = corpus.langs();

    CvResult result;
    result.oof_scores.assign(corpus.size(), 0.0);
    result.oof_preds.assign(corpus.size(), 0);
    result.fold_of = split.assignment(corpus.size());

    std::vector<double> fold_f1;
    for (size_t fold = 0; fold < k; ++fold) {
        DatasetView train_view;
        train_view.features = &embeddings;
        DatasetView val_view;
        val_view.features = &embeddings;
        for (size_t f = 0; f < k; ++f) {
            for (size_t idx : split.folds[f]) {
                auto& view = (f == fold) ? val_view : train_view;
                view.indices.push_back(idx);
                view.labels.push_back(labels[idx]);
            }
        }

        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = derive_seed(seed, "cv.fold", fold);

        PrunerHook hook = nullptr;
        bool stopped = false;
        if (epoch_hook) {
            hook = [&, fold](size_t epoch, double f1) {
                const size_t step = fold * cfg.max_epochs + epoch;
                const bool go = epoch_hook(step, f1);
                if (!go) stopped = true;
                return go;
            };
        }

        const Checkpoint best = train(train_view, val_view, fold_cfg, loss_cfg, hook);

        // Held-out scores from this fold's best checkpoint.
        std::vector<int> val_labels;
        std::vector<double> val_scores;
        std::vector<Lang> val_langs;
        for (size_t idx : val_view.indices) {
            const auto r = embeddings.row(idx);
            const std::vector<double> x(r.begin(), r.end());
            const double conf = softmax_confidence(forward(best.model, x));
            result.oof_scores[idx] = conf;
            result.oof_preds[idx] = conf >= 0.5 ? 1 : 0;
            val_labels.push_back(labels[idx]);
            val_scores.push_back(conf);
            val_langs.push_back(langs[idx]);
        }
        result.fold_reports.push_back(scored_metrics(val_labels, val_scores, val_langs, 0.5));
        fold_f1.push_back(result.fold_reports.back().macro_f1);
        result.fold_checkpoints.push_back(best);

        if (stopped) {
            result.stopped_early = true;
            break;
        }
    }

    result.mean_macro_f1 = 0.0;
    for (double f1 : fold_f1) result.mean_macro_f1 += f1;
    result.mean_macro_f1 /= static_cast<double>(fold_f1.size());
    if (fold_f1.size() >= 2) result.macro_f1_ci = confidence_interval(fold_f1);

    return result;
}

void save_cv_summary_csv(const CvResult& cv, const std::string& path,
                         const std::string& provenance_comment) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write cv summary: " + path);
    out << "fold,accuracy,precision_pos,recall_pos,f1_pos,precision_neg,recall_neg,f1_neg,"
           "macro_f1,roc_auc,macro_f1_ci95_half_width\n";

    auto write_fields = [&](const MetricsReport& m) {
        out << format_double(m.accuracy) << ',' << format_double(m.precision_pos) << ','
            << format_double(m.recall_pos) << ',' << format_double(m.f1_pos) << ','
            << format_double(m.precision_neg) << ',' << format_double(m.recall_neg) << ','
            << format_double(m.f1_neg) << ',' << format_double(m.macro_f1) << ',';
        if (m.roc_auc) out << format_double(*m.roc_auc);
    };

    MetricsReport mean;
    double auc_sum = 0.0;
    size_t auc_count = 0;
    for (size_t f = 0; f < cv.fold_reports.size(); ++f) {
        const MetricsReport& m = cv.fold_reports[f];
        out << f << ',';
        write_fields(m);
        out << ",\n";
        mean.accuracy += m.accuracy;
        mean.precision_pos += m.precision_pos;
        mean.recall_pos += m.recall_pos;
        mean.f1_pos += m.f1_pos;
        mean.precision_neg += m.precision_neg;
        mean.recall_neg += m.recall_neg;
        mean.f1_neg += m.f1_neg;
        mean.macro_f1 += m.macro_f1;
        if (m.roc_auc) {
            auc_sum += *m.roc_auc;
            ++auc_count;
        }
    }
    const auto k = static_cast<double>(cv.fold_reports.size());
    mean.accuracy /= k;
    mean.precision_pos /= k;
    mean.recall_pos /= k;
    mean.f1_pos /= k;
    mean.precision_neg /= k;
    mean.recall_neg /= k;
    mean.f1_neg /= k;
    mean.macro_f1 /= k;
    if (auc_count > 0) mean.roc_auc = auc_sum / static_cast<double>(auc_count);
    out << "mean,";
    write_fields(mean);
    out << ',' << format_double(cv.macro_f1_ci.half_width) << '\n';
    if (!provenance_comment.empty()) out << "# " << provenance_comment << '\n';
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace reclaim
