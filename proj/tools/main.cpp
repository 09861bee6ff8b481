#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "reclaim/errors.hpp"
#include "reclaim/hashing.hpp"
#include "reclaim/pipeline.hpp"
#include "reclaim/text_format.hpp"

namespace {

reclaim::PipelineConfig load_config(const std::string& config_path, uint64_t* seed_override,
                                    std::string* output_override,
                                    double* test_split_override) {
    reclaim::PipelineConfig cfg = reclaim::load_pipeline_config(config_path);
    if (seed_override) cfg.seed = *seed_override;
    if (output_override) cfg.output_dir = *output_override;
    if (test_split_override) cfg.test_fraction = *test_split_override;
    return cfg;
}

void print_metrics_line(const std::string& scope, const reclaim::MetricsReport& m) {
    std::printf("  %-8s acc=%.4f macro_f1=%.4f f1_pos=%.4f f1_neg=%.4f", scope.c_str(),
                m.accuracy, m.macro_f1, m.f1_pos, m.f1_neg);
    if (m.roc_auc) std::printf(" auc=%.4f", *m.roc_auc);
    std::printf("\n");
}

void print_report(const reclaim::RunArtifact& artifact) {
    std::printf("%s -> %s\n", reclaim::to_string(artifact.run_id), artifact.dir.c_str());
    print_metrics_line("overall", artifact.metric_report);
    for (const auto& [lang, sub] : artifact.metric_report.per_language) {
        print_metrics_line(reclaim::to_string(lang), sub);
    }
    if (artifact.thresholds) {
        std::printf("  thresholds:");
        for (const auto& [lang, tau] : artifact.thresholds->per_lang) {
            std::printf(" %s=%.4f", reclaim::to_string(lang), tau);
        }
        std::printf("\n");
    }
    if (artifact.test_metric_report) {
        print_metrics_line("test", *artifact.test_metric_report);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multilingual reclamation-classification pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<uint64_t> seed_override;
    std::optional<std::string> output_override;
    app.add_option("--config", config_path, "pipeline config (JSON)")->required();
    app.add_option("--seed", seed_override, "override the config seed");
    app.add_option("--output", output_override, "override the output directory");

    auto* analyze = app.add_subcommand("analyze", "corpus analytics and chi-square test");
    bool baseline = false;
    analyze->add_flag("--baseline", baseline,
                      "hinge-mode 5-fold CV per embedding file (foundation-model table)");

    auto* augment_cmd = app.add_subcommand("augment", "back-translate the corpus to 3N rows");

    auto* hpo_cmd = app.add_subcommand("hpo", "run the TPE study only");

    auto* run_cmd = app.add_subcommand("run", "execute run1|run2|run3|run4");
    std::string run_id_text;
    std::optional<double> test_split;
    run_cmd->add_option("--id", run_id_text, "run identifier")->required();
    run_cmd->add_option("--test-split", test_split,
                        "hold out a stratified native test fraction (e.g. 0.2)");

    auto* report_cmd = app.add_subcommand("report", "emit the report bundle from existing runs");

    CLI11_PARSE(app, argc, argv);

    try {
        reclaim::PipelineConfig cfg =
            load_config(config_path, seed_override ? &*seed_override : nullptr,
                        output_override ? &*output_override : nullptr,
                        test_split ? &*test_split : nullptr);

        if (*analyze) {
            const reclaim::AnalyzeResult res = reclaim::run_analyze(cfg);
            std::printf("lang  label0  label1\n");
            for (size_t r = 0; r < reclaim::kNumLangs; ++r) {
                std::printf("%-4s %7lld %7lld\n",
                            reclaim::to_string(static_cast<reclaim::Lang>(r)),
                            res.table.counts[r][0], res.table.counts[r][1]);
            }
            std::printf("chi_square statistic=%.6f dof=%zu p_value=%.6g\n",
                        res.chi_square.statistic, res.chi_square.dof, res.chi_square.p_value);
            if (baseline) {
                std::printf("\nembedding_model            acc     prec    rec     f1\n");
                for (const auto& row : reclaim::run_baseline(cfg)) {
                    std::printf("%-25s %.4f  %.4f  %.4f  %.4f +/- %.4f\n", row.source_tag.c_str(),
                                row.accuracy, row.precision, row.recall, row.f1,
                                row.f1_half_width);
                }
            }
        } else if (*augment_cmd) {
            const reclaim::Corpus corpus = reclaim::load_corpus(cfg.corpus_path);
            const reclaim::Corpus augmented = reclaim::augment_corpus(corpus, cfg.translator);
            std::filesystem::create_directories(cfg.output_dir);
            const std::string path = cfg.output_dir + "/augmented.jsonl";
            const std::string provenance = "seed=" + std::to_string(cfg.seed) +
                                           " inputs=" + reclaim::sha256_file(cfg.corpus_path);
            reclaim::save_corpus(augmented, path, provenance);
            std::printf("augmented %zu -> %zu examples: %s\n", corpus.size(), augmented.size(),
                        path.c_str());
        } else if (*hpo_cmd) {
            // Same study the run1 pipeline performs, emitted standalone.
            const reclaim::Corpus corpus = reclaim::load_corpus(cfg.corpus_path);
            const reclaim::Corpus augmented = reclaim::augment_corpus(corpus, cfg.translator);
            reclaim::EmbeddingMatrix emb;
            if (cfg.embeddings_run1_path) {
                emb = reclaim::load_embeddings(*cfg.embeddings_run1_path, augmented.size());
            } else {
                emb = reclaim::hash_encode(augmented, cfg.hash_dim,
                                           reclaim::derive_seed(cfg.seed, "hash_encode"));
            }
            const uint64_t cv_seed = reclaim::derive_seed(cfg.seed, "hpo-cv");
            reclaim::TpeConfig tpe;
            tpe.seed = reclaim::derive_seed(cfg.seed, "tpe");
            reclaim::Objective objective = [&](const reclaim::Params& params,
                                               const reclaim::TrialPrunerHook& hook) {
                reclaim::TrainConfig tc;
                tc.learning_rate = params.at("learning_rate");
                tc.batch_size = static_cast<size_t>(params.at("batch_size"));
                tc.weight_decay = params.at("weight_decay");
                tc.dropout = params.at("dropout");
                tc.max_epochs = cfg.max_epochs;
                reclaim::CvEpochHook eh = [&](size_t step, double f1) { return hook(step, f1); };
                return reclaim::cross_validate(augmented, emb, tc, cfg.loss, cfg.k, cv_seed, eh)
                    .mean_macro_f1;
            };
            const reclaim::StudyResult study =
                reclaim::optimize(objective, cfg.space, tpe, cfg.n_trials);
            const std::string dir = cfg.output_dir + "/hpo";
            std::filesystem::create_directories(dir);
            const std::string provenance = "seed=" + std::to_string(cfg.seed) +
                                           " inputs=" + reclaim::sha256_file(cfg.corpus_path);
            reclaim::save_study_jsonl(study.history, dir + "/trials.jsonl", provenance);
            reclaim::save_study_csv(study.history, cfg.space, dir + "/trials.csv", provenance);
            {
                nlohmann::json best;
                best["trial_id"] = study.best.trial_id;
                best["value"] = *study.best.final_value;
                best["params"] = study.best.params;
                best["provenance"] = provenance;
                std::ofstream out(dir + "/best_params.json", std::ios::binary);
                out << best.dump(2) << '\n';
            }
            std::printf("best trial %d value=%.6f (%zu complete, %zu pruned, %zu failed)\n",
                        study.best.trial_id, *study.best.final_value, study.n_complete,
                        study.n_pruned, study.n_failed);
            for (const auto& [name, value] : study.best.params) {
                std::printf("  %s = %s\n", name.c_str(), reclaim::format_double(value).c_str());
            }
        } else if (*run_cmd) {
            const reclaim::RunId id = reclaim::run_id_from_string(run_id_text);
            const reclaim::RunArtifact artifact = reclaim::execute_run(cfg, id);
            print_report(artifact);
        } else if (*report_cmd) {
            std::vector<reclaim::RunArtifact> artifacts;
            for (reclaim::RunId id :
                 {reclaim::RunId::run1, reclaim::RunId::run2, reclaim::RunId::run3,
                  reclaim::RunId::run4}) {
                const std::string dir =
                    cfg.output_dir + "/" + reclaim::to_string(id) + "/predictions.tsv";
                if (std::filesystem::exists(dir)) {
                    artifacts.push_back(reclaim::load_run_artifact(cfg, id));
                }
            }
            reclaim::emit_report(cfg, artifacts);
            std::printf("report bundle written to %s/report\n", cfg.output_dir.c_str());
            for (const auto& a : artifacts) print_report(a);
        }
    } catch (const reclaim::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
