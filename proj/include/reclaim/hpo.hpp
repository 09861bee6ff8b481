#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace reclaim {

enum class ParamKind { uniform, log_uniform, categorical };

struct ParamSpec {
    std::string name;
    ParamKind kind = ParamKind::uniform;
    double low = 0.0;
    double high = 0.0;
    std::vector<double> choices;  // categorical support
};

struct SearchSpace {
    std::vector<ParamSpec> params;

    void validate() const;  // throws ConfigError on empty/invalid bounds

    // learning_rate log-uniform [1e-5, 5e-4], batch_size categorical
    // {16, 32, 64}, weight_decay log-uniform [1e-5, 1e-2], dropout
    // uniform [0.1, 0.4].
    static SearchSpace classifier_default();
};

// Concrete values for every parameter; categorical parameters store the
// chosen value itself.
using Params = std::map<std::string, double>;

enum class TrialState { running, complete, pruned, failed };

const char* to_string(TrialState s);
TrialState trial_state_from_string(const std::string& s);

struct TrialRecord {
    int trial_id = 0;
    Params params;
    std::vector<std::pair<size_t, double>> intermediate;  // (epoch, value) in report order
    std::optional<double> final_value;                    // present iff complete
    TrialState state = TrialState::running;
    std::optional<size_t> pruned_epoch;
    std::string error;  // message for failed trials

    // Value a trial contributes to TPE conditioning: final value when
    // complete, last intermediate when pruned, nothing otherwise.
    std::optional<double> objective_value() const;
};

struct TpeConfig {
    size_t n_startup = 10;
    double gamma = 0.10;
    size_t n_candidates = 24;
    uint64_t seed = 0;
};

// One TPE suggestion (maximization). Below n_startup usable trials this is
// independent uniform sampling (log-space for log-uniform parameters).
// Otherwise, per parameter independently: usable trials split into good (top
// ceil(gamma*n) by value, ties by trial_id) and bad; 1-D Parzen densities l
// and g built in transformed space from Gaussian kernels at the observations
// (neighbor-gap bandwidths clipped to [1e-3, 1] of the range) plus one
// range-wide prior kernel; categorical parameters use add-one-smoothed
// counts. n_candidates draws from l, the one maximizing l/g wins.
// Deterministic given (cfg.seed, history size).
Params suggest(const std::vector<TrialRecord>& history, const SearchSpace& space,
               const TpeConfig& cfg);

// Median pruning rule: continue while epoch < patience or no completed trial
// has reported at this epoch; otherwise prune iff value is strictly below the
// median of completed trials' intermediate values at the same epoch.
bool should_prune(const TrialRecord& trial, size_t epoch, double value,
                  const std::vector<TrialRecord>& history, size_t patience = 3);

// continue -> true, prune -> false
using TrialPrunerHook = std::function<bool(size_t epoch, double value)>;
using Objective = std::function<double(const Params& params, const TrialPrunerHook& hook)>;

struct StudyResult {
    TrialRecord best;
    std::vector<TrialRecord> history;
    size_t n_complete = 0;
    size_t n_pruned = 0;
    size_t n_failed = 0;
};

// Runs n_trials sequentially-numbered trials, each with a pruner hook bound
// to should_prune over the study history. A throwing objective marks its
// trial failed and the study continues; if every trial fails the study
// itself fails. Deterministic given cfg.seed and a deterministic objective.
StudyResult optimize(const Objective& objective, const SearchSpace& space, const TpeConfig& cfg,
                     size_t n_trials = 50, size_t patience = 3);

// Study log: JSONL, one TrialRecord per line; '#' lines are comments.
void save_study_jsonl(const std::vector<TrialRecord>& history, const std::string& path,
                      const std::string& provenance_comment = "");
std::vector<TrialRecord> load_study_jsonl(const std::string& path);

// (trial_id, state, value, params...) for optimization-history plots.
void save_study_csv(const std::vector<TrialRecord>& history, const SearchSpace& space,
                    const std::string& path, const std::string& provenance_comment = "");

}  // namespace reclaim
