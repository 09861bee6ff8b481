#include "reclaim/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "reclaim/errors.hpp"
#include "reclaim/evaluation.hpp"

namespace reclaim {

using nlohmann::json;

BatchPlan plan_epoch(std::span<const int> labels, size_t batch_size, uint64_t rng_seed,
                     size_t epoch) {
    if (batch_size == 0 || batch_size % 4 != 0) {
        throw ConfigError("plan_epoch: batch_size must be a positive multiple of 4, got " +
                          std::to_string(batch_size));
    }
    const size_t pos_per_batch = batch_size / 4;
    const size_t neg_per_batch = 3 * pos_per_batch;

    std::vector<size_t> pos, neg;
    for (size_t i = 0; i < labels.size(); ++i) {
        (labels[i] == 1 ? pos : neg).push_back(i);
    }
    if (pos.size() < pos_per_batch || neg.size() < neg_per_batch) {
        throw DataError("plan_epoch: insufficient pool, need >= " + std::to_string(pos_per_batch) +
                        " positives and >= " + std::to_string(neg_per_batch) +
                        " negatives, have " + std::to_string(pos.size()) + " and " +
                        std::to_string(neg.size()));
    }

    Rng pos_rng(derive_seed(rng_seed, "plan_epoch.pos", epoch));
    Rng neg_rng(derive_seed(rng_seed, "plan_epoch.neg", epoch));
    pos_rng.shuffle(pos);
    neg_rng.shuffle(neg);

    const size_t n_batches = std::min(pos.size() / pos_per_batch, neg.size() / neg_per_batch);

    BatchPlan plan;
    plan.pos_per_batch = pos_per_batch;
    plan.neg_per_batch = neg_per_batch;
    plan.batches.reserve(n_batches);
    for (size_t b = 0; b < n_batches; ++b) {
        std::vector<size_t> batch;
        batch.reserve(batch_size);
        for (size_t i = 0; i < pos_per_batch; ++i) batch.push_back(pos[b * pos_per_batch + i]);
        for (size_t i = 0; i < neg_per_batch; ++i) batch.push_back(neg[b * neg_per_batch + i]);
        plan.batches.push_back(std::move(batch));
    }
    return plan;
}

std::vector<double> apply_dropout(std::span<const double> x, double dropout, Rng& rng) {
    std::vector<double> out(x.begin(), x.end());
    if (dropout <= 0.0) return out;
    const double keep_scale = 1.0 / (1.0 - dropout);
    for (double& v : out) {
        v = rng.uniform() < dropout ? 0.0 : v * keep_scale;
    }
    return out;
}

std::array<double, 2> forward(const LinearModel& model, std::span<const double> x) {
    if (x.size() != model.dim) {
        throw DataError("forward: input has " + std::to_string(x.size()) +
                        " dims, model expects " + std::to_string(model.dim));
    }
    std::array<double, 2> logits = model.bias;
    for (size_t c = 0; c < 2; ++c) {
        const double* w = model.weights.data() + c * model.dim;
        double acc = 0.0;
        for (size_t j = 0; j < model.dim; ++j) acc += w[j] * x[j];
        logits[c] += acc;
    }
    return logits;
}

std::array<double, 2> forward(const LinearModel& model, std::span<const double> x,
                              double dropout, bool training, Rng* rng) {
    if (training && dropout > 0.0) {
        if (!rng) throw ConfigError("forward: dropout in training mode requires an rng");
        const std::vector<double> masked = apply_dropout(x, dropout, *rng);
        return forward(model, masked);
    }
    return forward(model, x);
}

double softmax_confidence(const std::array<double, 2>& logits) {
    if (!std::isfinite(logits[0]) || !std::isfinite(logits[1])) {
        throw DataError("softmax_confidence: non-finite logit");
    }
    const double m = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - m);
    const double e1 = std::exp(logits[1] - m);
    return e1 / (e0 + e1);
}

namespace {

void check_loss_config(const LossConfig& cfg) {
    if (cfg.w0 <= 0.0 || cfg.w1 <= 0.0) throw ConfigError("loss: class weights must be positive");
    if (cfg.hinge_c <= 0.0) throw ConfigError("loss: hinge_c must be positive");
}

}  // namespace

LossResult loss_and_grad(const LinearModel& model,
                         const std::vector<std::vector<double>>& batch_x,
                         std::span<const int> batch_y, const LossConfig& cfg) {
    check_loss_config(cfg);
    if (batch_x.empty()) throw DataError("loss_and_grad: empty batch");
    if (batch_x.size() != batch_y.size()) throw DataError("loss_and_grad: x/y length mismatch");

    const size_t n = batch_x.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    LossResult res;
    res.grads.weights.assign(2 * model.dim, 0.0);
    res.grads.bias = {0.0, 0.0};

    if (cfg.kind == LossKind::weighted_ce) {
        for (size_t i = 0; i < n; ++i) {
            const auto logits = forward(model, batch_x[i]);
            const int y = batch_y[i];
            const double w = (y == 1) ? cfg.w1 : cfg.w0;

            const double m = std::max(logits[0], logits[1]);
            const double e0 = std::exp(logits[0] - m);
            const double e1 = std::exp(logits[1] - m);
            const double z = e0 + e1;
            const double log_py = logits[static_cast<size_t>(y)] - m - std::log(z);
            res.loss += -w * log_py * inv_n;

            const std::array<double, 2> p = {e0 / z, e1 / z};
            for (size_t c = 0; c < 2; ++c) {
                const double g = w * (p[c] - (static_cast<int>(c) == y ? 1.0 : 0.0)) * inv_n;
                res.grads.bias[c] += g;
                double* gw = res.grads.weights.data() + c * model.dim;
                const auto& x = batch_x[i];
                for (size_t j = 0; j < model.dim; ++j) gw[j] += g * x[j];
            }
        }
    } else {
        const double lambda = 1.0 / (cfg.hinge_c * static_cast<double>(n));
        for (size_t i = 0; i < n; ++i) {
            const auto logits = forward(model, batch_x[i]);
            const double s = (batch_y[i] == 1) ? 1.0 : -1.0;
            const double margin = logits[1] - logits[0];
            const double h = 1.0 - s * margin;
            if (h > 0.0) {
                res.loss += h * inv_n;
                // d/dlogit1 = -s, d/dlogit0 = +s for each active example
                const double g1 = -s * inv_n;
                res.grads.bias[0] += -g1;
                res.grads.bias[1] += g1;
                const auto& x = batch_x[i];
                for (size_t j = 0; j < model.dim; ++j) {
                    res.grads.weights[j] += -g1 * x[j];
                    res.grads.weights[model.dim + j] += g1 * x[j];
                }
            }
        }
        double w_norm_sq = 0.0;
        for (double w : model.weights) w_norm_sq += w * w;
        res.loss += lambda * w_norm_sq / 2.0;
        for (size_t j = 0; j < model.weights.size(); ++j) {
            res.grads.weights[j] += lambda * model.weights[j];
        }
    }
    return res;
}

double lr_at_step(double base_lr, size_t step, size_t total_steps, double warmup_fraction) {
    if (total_steps == 0) throw ConfigError("lr_at_step: degenerate schedule, total_steps = 0");
    if (step > total_steps) throw ConfigError("lr_at_step: step beyond total_steps");
    if (warmup_fraction <= 0.0 || warmup_fraction >= 1.0) {
        throw ConfigError("lr_at_step: warmup_fraction must lie in (0, 1)");
    }
    const size_t warmup = static_cast<size_t>(
        std::llround(warmup_fraction * static_cast<double>(total_steps)));
    if (step <= warmup) {
        if (warmup == 0) return base_lr;
        return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
    }
    return base_lr * static_cast<double>(total_steps - step) /
           static_cast<double>(total_steps - warmup);
}

void optimizer_step(LinearModel& model, const ModelGrads& grads, AdamState& state, double lr,
                    const TrainConfig& cfg) {
    if (grads.weights.size() != model.weights.size() || state.m_w.size() != model.weights.size()) {
        throw DataError("optimizer_step: shape mismatch");
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);

    for (size_t j = 0; j < model.weights.size(); ++j) {
        state.m_w[j] = cfg.beta1 * state.m_w[j] + (1.0 - cfg.beta1) * grads.weights[j];
        state.v_w[j] = cfg.beta2 * state.v_w[j] + (1.0 - cfg.beta2) * grads.weights[j] * grads.weights[j];
        const double m_hat = state.m_w[j] / bc1;
        const double v_hat = state.v_w[j] / bc2;
        model.weights[j] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.epsilon) +
                                  cfg.weight_decay * model.weights[j]);
    }
    for (size_t c = 0; c < 2; ++c) {
        state.m_b[c] = cfg.beta1 * state.m_b[c] + (1.0 - cfg.beta1) * grads.bias[c];
        state.v_b[c] = cfg.beta2 * state.v_b[c] + (1.0 - cfg.beta2) * grads.bias[c] * grads.bias[c];
        const double m_hat = state.m_b[c] / bc1;
        const double v_hat = state.v_b[c] / bc2;
        // no decay on bias
        model.bias[c] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
}

namespace {

void check_train_config(const TrainConfig& cfg) {
    if (cfg.learning_rate <= 0.0) throw ConfigError("train: learning_rate must be positive");
    if (cfg.batch_size == 0 || cfg.batch_size % 4 != 0) {
        throw ConfigError("train: batch_size must be a positive multiple of 4");
    }
    if (cfg.weight_decay < 0.0) throw ConfigError("train: weight_decay must be non-negative");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("train: dropout must lie in [0, 1)");
    if (cfg.max_epochs == 0) throw ConfigError("train: max_epochs must be >= 1");
    if (cfg.epsilon <= 0.0) throw ConfigError("train: epsilon must be positive");
}

double validation_macro_f1(const LinearModel& model, const DatasetView& val) {
    std::vector<int> preds(val.size());
    for (size_t i = 0; i < val.size(); ++i) {
        const auto logits = forward(model, val.row_as_double(i));
        preds[i] = softmax_confidence(logits) >= 0.5 ? 1 : 0;
    }
    return metrics(val.labels, preds).macro_f1;
}

}  // namespace

Checkpoint train(const DatasetView& train_set, const DatasetView& val_set,
                 const TrainConfig& cfg, const LossConfig& loss_cfg,
                 const PrunerHook& pruner_hook, const StepObserver& observer) {
    check_train_config(cfg);
    if (!train_set.features || !val_set.features) throw DataError("train: missing features");
    if (train_set.indices.size() != train_set.labels.size() ||
        val_set.indices.size() != val_set.labels.size()) {
        throw DataError("train: indices/labels length mismatch");
    }
    if (val_set.size() == 0) throw DataError("train: empty validation set");

    const size_t dim = train_set.features->dim;
    LinearModel model = LinearModel::zeros(dim);
    AdamState state = AdamState::zeros(dim);

    // Batch count is a pure function of pool sizes, so it is constant across
    // epochs and the schedule length is known up front.
    const BatchPlan probe = plan_epoch(train_set.labels, cfg.batch_size, cfg.seed, 1);
    const size_t batches_per_epoch = probe.batches.size();
    const size_t total_steps = cfg.max_epochs * batches_per_epoch;

    std::optional<Checkpoint> best;
    size_t global_step = 0;

    std::vector<std::vector<double>> batch_x;
    std::vector<int> batch_y;

    for (size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const BatchPlan plan = plan_epoch(train_set.labels, cfg.batch_size, cfg.seed, epoch);
        Rng dropout_rng(derive_seed(cfg.seed, "dropout", epoch));

        for (const auto& batch : plan.batches) {
            batch_x.clear();
            batch_y.clear();
            for (size_t local : batch) {
                std::vector<double> x = train_set.row_as_double(local);
                if (cfg.dropout > 0.0) x = apply_dropout(x, cfg.dropout, dropout_rng);
                batch_x.push_back(std::move(x));
                batch_y.push_back(train_set.labels[local]);
            }
            const LossResult res = loss_and_grad(model, batch_x, batch_y, loss_cfg);
            ++global_step;
            const double lr = lr_at_step(cfg.learning_rate, global_step, total_steps,
                                         cfg.warmup_fraction);
            optimizer_step(model, res.grads, state, lr, cfg);
            if (observer) observer(epoch, global_step, model, res.loss);
        }

        const double val_f1 = validation_macro_f1(model, val_set);
        if (!best || val_f1 > best->val_macro_f1) {
            best = Checkpoint{model, epoch, val_f1, train_set.features->source_tag};
        }
        if (pruner_hook && !pruner_hook(epoch, val_f1)) break;
    }
    return *best;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path,
                     const std::string& provenance_comment) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    json header;
    header["dim"] = ckpt.model.dim;
    header["epoch"] = ckpt.epoch;
    header["val_macro_f1"] = ckpt.val_macro_f1;
    header["source_tag"] = ckpt.source_tag;
    if (!provenance_comment.empty()) header["provenance"] = provenance_comment;
    out << header.dump() << '\n';
    std::vector<float> payload;
    payload.reserve(ckpt.model.weights.size() + 2);
    for (double w : ckpt.model.weights) payload.push_back(static_cast<float>(w));
    payload.push_back(static_cast<float>(ckpt.model.bias[0]));
    payload.push_back(static_cast<float>(ckpt.model.bias[1]));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out) throw DataError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw DataError(path + ": missing checkpoint header");
    json header;
    try {
        header = json::parse(header_line);
    } catch (const json::parse_error& e) {
        throw DataError(path + ": malformed checkpoint header: " + e.what());
    }
    Checkpoint ckpt;
    ckpt.model.dim = header.at("dim").get<size_t>();
    ckpt.epoch = header.at("epoch").get<size_t>();
    ckpt.val_macro_f1 = header.at("val_macro_f1").get<double>();
    ckpt.source_tag = header.value("source_tag", "");

    std::vector<float> payload(2 * ckpt.model.dim + 2);
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (static_cast<size_t>(in.gcount()) != payload.size() * sizeof(float)) {
        throw DataError(path + ": truncated checkpoint payload");
    }
    ckpt.model.weights.assign(payload.begin(), payload.begin() + 2 * ckpt.model.dim);
    ckpt.model.bias = {payload[2 * ckpt.model.dim], payload[2 * ckpt.model.dim + 1]};
    return ckpt;
}

}  // namespace reclaim
