#include "reclaim/hpo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "reclaim/errors.hpp"
#include "reclaim/rng.hpp"
#include "reclaim/text_format.hpp"

namespace reclaim {

using nlohmann::json;

void SearchSpace::validate() const {
    if (params.empty()) throw ConfigError("search space: no parameters");
    for (const auto& p : params) {
        if (p.name.empty()) throw ConfigError("search space: unnamed parameter");
        if (p.kind == ParamKind::categorical) {
            if (p.choices.empty()) {
                throw ConfigError("search space: categorical \"" + p.name + "\" has no choices");
            }
        } else {
            if (!(p.low < p.high)) {
                throw ConfigError("search space: \"" + p.name + "\" needs low < high");
            }
            if (p.kind == ParamKind::log_uniform && p.low <= 0.0) {
                throw ConfigError("search space: log-uniform \"" + p.name +
                                  "\" needs positive bounds");
            }
        }
    }
}

SearchSpace SearchSpace::classifier_default() {
    SearchSpace s;
    s.params = {
        {"learning_rate", ParamKind::log_uniform, 1e-5, 5e-4, {}},
        {"batch_size", ParamKind::categorical, 0.0, 0.0, {16.0, 32.0, 64.0}},
        {"weight_decay", ParamKind::log_uniform, 1e-5, 1e-2, {}},
        {"dropout", ParamKind::uniform, 0.1, 0.4, {}},
    };
    return s;
}

const char* to_string(TrialState s) {
    switch (s) {
        case TrialState::running: return "running";
        case TrialState::complete: return "complete";
        case TrialState::pruned: return "pruned";
        case TrialState::failed: return "failed";
    }
    return "?";
}

TrialState trial_state_from_string(const std::string& s) {
    if (s == "running") return TrialState::running;
    if (s == "complete") return TrialState::complete;
    if (s == "pruned") return TrialState::pruned;
    if (s == "failed") return TrialState::failed;
    throw DataError("unknown trial state \"" + s + "\"");
}

std::optional<double> TrialRecord::objective_value() const {
    if (state == TrialState::complete) return final_value;
    if (state == TrialState::pruned && !intermediate.empty()) return intermediate.back().second;
    return std::nullopt;
}

namespace {

struct Observation {
    double value = 0.0;   // objective value (for the split)
    double x = 0.0;       // parameter value
    int trial_id = 0;
};

double to_z(const ParamSpec& spec, double x) {
    return spec.kind == ParamKind::log_uniform ? std::log(x) : x;
}

double from_z(const ParamSpec& spec, double z) {
    return spec.kind == ParamKind::log_uniform ? std::exp(z) : z;
}

// Equal-weight Gaussian mixture over [lo, hi] in transformed space: one
// kernel per observation plus a range-wide prior kernel at the midpoint.
// Each kernel's bandwidth is its larger gap to the neighboring observations
// (range boundaries count as neighbors), clipped to [1e-3 * range, range]:
// kernels inside dense clusters stay narrow, isolated observations spread
// their mass.
struct ParzenDensity {
    std::vector<double> centers;
    std::vector<double> bandwidths;
    double lo = 0.0;
    double hi = 0.0;

    ParzenDensity(const std::vector<double>& zs, double lo_, double hi_) : lo(lo_), hi(hi_) {
        const double range = hi - lo;
        const double floor_bw = 1e-3 * range;

        std::vector<double> sorted = zs;
        std::sort(sorted.begin(), sorted.end());
        for (size_t i = 0; i < sorted.size(); ++i) {
            const double left = (i == 0) ? lo : sorted[i - 1];
            const double right = (i + 1 == sorted.size()) ? hi : sorted[i + 1];
            const double gap = std::max(sorted[i] - left, right - sorted[i]);
            centers.push_back(sorted[i]);
            bandwidths.push_back(std::clamp(gap, floor_bw, range));
        }
        centers.push_back((lo + hi) / 2.0);  // prior kernel
        bandwidths.push_back(range);
    }

    double sample(Rng& rng) const {
        const size_t k = static_cast<size_t>(rng.uniform_int(centers.size()));
        const double z = centers[k] + bandwidths[k] * rng.gaussian();
        return std::clamp(z, lo, hi);
    }

    double log_pdf(double z) const {
        double sum = 0.0;
        for (size_t k = 0; k < centers.size(); ++k) {
            const double u = (z - centers[k]) / bandwidths[k];
            sum += std::exp(-0.5 * u * u) / bandwidths[k];
        }
        sum *= 0.3989422804014327 / static_cast<double>(centers.size());
        return std::log(sum);
    }
};

double sample_uniform_param(const ParamSpec& spec, Rng& rng) {
    switch (spec.kind) {
        case ParamKind::uniform:
            return rng.uniform_in(spec.low, spec.high);
        case ParamKind::log_uniform:
            return std::exp(rng.uniform_in(std::log(spec.low), std::log(spec.high)));
        case ParamKind::categorical:
            return spec.choices[static_cast<size_t>(rng.uniform_int(spec.choices.size()))];
    }
    throw ConfigError("sample_uniform_param: unknown kind");
}

size_t choice_index(const ParamSpec& spec, double value) {
    for (size_t i = 0; i < spec.choices.size(); ++i) {
        if (spec.choices[i] == value) return i;
    }
    // nearest match for values read back from logs
    size_t best = 0;
    double best_d = std::abs(spec.choices[0] - value);
    for (size_t i = 1; i < spec.choices.size(); ++i) {
        const double d = std::abs(spec.choices[i] - value);
        if (d < best_d) {
            best = i;
            best_d = d;
        }
    }
    return best;
}

// Add-one-smoothed categorical weights.
std::vector<double> categorical_weights(const ParamSpec& spec,
                                        const std::vector<Observation>& group) {
    std::vector<double> w(spec.choices.size(), 1.0);
    for (const auto& obs : group) w[choice_index(spec, obs.x)] += 1.0;
    const double total = static_cast<double>(group.size()) + static_cast<double>(spec.choices.size());
    for (double& v : w) v /= total;
    return w;
}

size_t sample_categorical(const std::vector<double>& weights, Rng& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
        cum += weights[i];
        if (u < cum) return i;
    }
    return weights.size() - 1;
}

double suggest_numeric(const ParamSpec& spec, const std::vector<Observation>& good,
                       const std::vector<Observation>& bad, size_t n_candidates, Rng& rng) {
    const double zlo = to_z(spec, spec.low);
    const double zhi = to_z(spec, spec.high);

    std::vector<double> good_z, bad_z;
    for (const auto& o : good) good_z.push_back(to_z(spec, o.x));
    for (const auto& o : bad) bad_z.push_back(to_z(spec, o.x));

    const ParzenDensity l(good_z, zlo, zhi);
    const ParzenDensity g(bad_z, zlo, zhi);

    double best_z = l.sample(rng);
    double best_score = l.log_pdf(best_z) - g.log_pdf(best_z);
    for (size_t c = 1; c < n_candidates; ++c) {
        const double z = l.sample(rng);
        const double score = l.log_pdf(z) - g.log_pdf(z);
        if (score > best_score) {
            best_score = score;
            best_z = z;
        }
    }
    return std::clamp(from_z(spec, best_z), spec.low, spec.high);
}

double suggest_categorical(const ParamSpec& spec, const std::vector<Observation>& good,
                           const std::vector<Observation>& bad, size_t n_candidates, Rng& rng) {
    const std::vector<double> l = categorical_weights(spec, good);
    const std::vector<double> g = categorical_weights(spec, bad);

    size_t best_idx = sample_categorical(l, rng);
    double best_score = l[best_idx] / g[best_idx];
    for (size_t c = 1; c < n_candidates; ++c) {
        const size_t idx = sample_categorical(l, rng);
        const double score = l[idx] / g[idx];
        if (score > best_score) {
            best_score = score;
            best_idx = idx;
        }
    }
    return spec.choices[best_idx];
}

}  // namespace

Params suggest(const std::vector<TrialRecord>& history, const SearchSpace& space,
               const TpeConfig& cfg) {
    space.validate();
    if (cfg.n_startup < 1 || cfg.n_candidates < 1) {
        throw ConfigError("tpe: n_startup and n_candidates must be >= 1");
    }
    if (cfg.gamma <= 0.0 || cfg.gamma >= 1.0) throw ConfigError("tpe: gamma must lie in (0, 1)");

    Rng rng(derive_seed(cfg.seed, "tpe.suggest", history.size()));

    std::vector<Observation> usable;
    for (const auto& t : history) {
        if (auto v = t.objective_value()) {
            usable.push_back({*v, 0.0, t.trial_id});
        }
    }

    Params out;
    if (usable.size() < cfg.n_startup) {
        for (const auto& spec : space.params) {
            out[spec.name] = sample_uniform_param(spec, rng);
        }
        return out;
    }

    const size_t n_good = static_cast<size_t>(
        std::ceil(cfg.gamma * static_cast<double>(usable.size())));

    for (const auto& spec : space.params) {
        std::vector<Observation> obs;
        for (const auto& t : history) {
            auto v = t.objective_value();
            if (!v) continue;
            auto it = t.params.find(spec.name);
            if (it == t.params.end()) continue;
            obs.push_back({*v, it->second, t.trial_id});
        }
        // top ceil(gamma*n) by value; equal values fall back to trial order
        std::sort(obs.begin(), obs.end(), [](const Observation& a, const Observation& b) {
            if (a.value != b.value) return a.value > b.value;
            return a.trial_id < b.trial_id;
        });
        const size_t split = std::min(n_good, obs.size());
        std::vector<Observation> good(obs.begin(), obs.begin() + split);
        std::vector<Observation> bad(obs.begin() + split, obs.end());

        if (spec.kind == ParamKind::categorical) {
            out[spec.name] = suggest_categorical(spec, good, bad, cfg.n_candidates, rng);
        } else {
            out[spec.name] = suggest_numeric(spec, good, bad, cfg.n_candidates, rng);
        }
    }
    return out;
}

bool should_prune(const TrialRecord& /*trial*/, size_t epoch, double value,
                  const std::vector<TrialRecord>& history, size_t patience) {
    if (!std::isfinite(value)) throw DataError("should_prune: non-finite value");
    if (epoch < patience) return false;

    std::vector<double> at_epoch;
    for (const auto& t : history) {
        if (t.state != TrialState::complete) continue;
        for (const auto& [e, v] : t.intermediate) {
            if (e == epoch) at_epoch.push_back(v);
        }
    }
    if (at_epoch.empty()) return false;

    std::sort(at_epoch.begin(), at_epoch.end());
    const size_t n = at_epoch.size();
    const double median =
        (n % 2 == 1) ? at_epoch[n / 2] : (at_epoch[n / 2 - 1] + at_epoch[n / 2]) / 2.0;
    return value < median;
}

StudyResult optimize(const Objective& objective, const SearchSpace& space, const TpeConfig& cfg,
                     size_t n_trials, size_t patience) {
    space.validate();
    if (n_trials == 0) throw ConfigError("optimize: n_trials must be >= 1");
    if (!objective) throw ConfigError("optimize: missing objective");

    StudyResult result;
    result.history.reserve(n_trials);

    for (size_t t = 0; t < n_trials; ++t) {
        TrialRecord next;
        next.trial_id = static_cast<int>(t);
        next.params = suggest(result.history, space, cfg);
        result.history.push_back(std::move(next));
        TrialRecord& rec = result.history.back();

        bool pruned = false;
        TrialPrunerHook hook = [&](size_t epoch, double value) {
            rec.intermediate.emplace_back(epoch, value);
            if (should_prune(rec, epoch, value, result.history, patience)) {
                rec.state = TrialState::pruned;
                rec.pruned_epoch = epoch;
                pruned = true;
                return false;
            }
            return true;
        };

        try {
            const double value = objective(rec.params, hook);
            if (!pruned) {
                rec.final_value = value;
                rec.state = TrialState::complete;
            }
        } catch (const std::exception& e) {
            if (!pruned) {
                rec.state = TrialState::failed;
                rec.error = e.what();
            }
        }

        switch (rec.state) {
            case TrialState::complete: ++result.n_complete; break;
            case TrialState::pruned: ++result.n_pruned; break;
            case TrialState::failed: ++result.n_failed; break;
            default: break;
        }
    }

    const TrialRecord* best = nullptr;
    for (const auto& t : result.history) {
        if (t.state != TrialState::complete) continue;
        if (!best || t.final_value > best->final_value) best = &t;
    }
    if (!best) throw Error("optimize: study failed, no trial completed");
    result.best = *best;
    return result;
}

namespace {

json trial_to_json(const TrialRecord& t) {
    json obj;
    obj["trial_id"] = t.trial_id;
    obj["params"] = t.params;
    json inter = json::array();
    for (const auto& [e, v] : t.intermediate) inter.push_back(json::array({e, v}));
    obj["intermediate"] = inter;
    if (t.final_value) obj["final_value"] = *t.final_value;
    obj["state"] = to_string(t.state);
    if (t.pruned_epoch) obj["pruned_epoch"] = *t.pruned_epoch;
    if (!t.error.empty()) obj["error"] = t.error;
    return obj;
}

TrialRecord trial_from_json(const json& obj) {
    TrialRecord t;
    t.trial_id = obj.at("trial_id").get<int>();
    t.params = obj.at("params").get<Params>();
    for (const auto& pair : obj.at("intermediate")) {
        t.intermediate.emplace_back(pair.at(0).get<size_t>(), pair.at(1).get<double>());
    }
    if (obj.contains("final_value")) t.final_value = obj.at("final_value").get<double>();
    t.state = trial_state_from_string(obj.at("state").get<std::string>());
    if (obj.contains("pruned_epoch")) t.pruned_epoch = obj.at("pruned_epoch").get<size_t>();
    t.error = obj.value("error", "");
    return t;
}

}  // namespace

void save_study_jsonl(const std::vector<TrialRecord>& history, const std::string& path,
                      const std::string& provenance_comment) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write study log: " + path);
    for (const auto& t : history) out << trial_to_json(t).dump() << '\n';
    if (!provenance_comment.empty()) out << "# " << provenance_comment << '\n';
    if (!out) throw DataError("write failed: " + path);
}

void save_study_csv(const std::vector<TrialRecord>& history, const SearchSpace& space,
                    const std::string& path, const std::string& provenance_comment) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write study csv: " + path);
    out << "trial_id,state,value";
    for (const auto& spec : space.params) out << ',' << spec.name;
    out << '\n';
    for (const auto& t : history) {
        out << t.trial_id << ',' << to_string(t.state) << ',';
        if (auto v = t.objective_value()) out << format_double(*v);
        for (const auto& spec : space.params) {
            out << ',';
            auto it = t.params.find(spec.name);
            if (it != t.params.end()) out << format_double(it->second);
        }
        out << '\n';
    }
    if (!provenance_comment.empty()) out << "# " << provenance_comment << '\n';
    if (!out) throw DataError("write failed: " + path);
}

std::vector<TrialRecord> load_study_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open study log: " + path);
    std::vector<TrialRecord> history;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        try {
            history.push_back(trial_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return history;
}

}  // namespace reclaim
