#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reclaim/features.hpp"
#include "reclaim/rng.hpp"

namespace reclaim {

// Per-epoch output of the dynamic undersampler. Every batch holds exactly
// pos_per_batch positives followed by neg_per_batch = 3 * pos_per_batch
// negatives; no index repeats within an epoch.
struct BatchPlan {
    std::vector<std::vector<size_t>> batches;
    size_t pos_per_batch = 0;
    size_t neg_per_batch = 0;
};

// 2-logit linear head. weights are row-major 2 x dim (one row per class logit).
struct LinearModel {
    size_t dim = 0;
    std::vector<double> weights;  // 2 * dim
    std::array<double, 2> bias = {0.0, 0.0};

    static LinearModel zeros(size_t dim) {
        LinearModel m;
        m.dim = dim;
        m.weights.assign(2 * dim, 0.0);
        return m;
    }
};

struct ModelGrads {
    std::vector<double> weights;
    std::array<double, 2> bias = {0.0, 0.0};
};

enum class LossKind { weighted_ce, hinge };

struct LossConfig {
    LossKind kind = LossKind::weighted_ce;
    // Class weights for weighted CE; defaults follow the post-sampling 1:3
    // stream (negatives three times as frequent as positives).
    double w0 = 1.0 / 3.0;
    double w1 = 1.0;
    double hinge_c = 1.0;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    size_t batch_size = 32;  // must be divisible by 4 so the 1:3 ratio fits
    double weight_decay = 0.0;
    double dropout = 0.0;  // applied to input features, inverted scaling
    size_t max_epochs = 10;
    double warmup_fraction = 0.10;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    uint64_t seed = 0;
};

struct Checkpoint {
    LinearModel model;
    size_t epoch = 0;  // 1-based epoch the checkpoint was taken at
    double val_macro_f1 = 0.0;
    std::string source_tag;
};

// Epoch-level 1:3 undersampling plan. Positives and negatives are shuffled
// independently by (rng_seed, epoch); batches are cut until either pool can
// no longer fill one, so batch count = floor(min(P/(B/4), N/(3B/4))).
// Partial batches are dropped. Throws DataError when a pool cannot fill even
// one batch.
BatchPlan plan_epoch(std::span<const int> labels, size_t batch_size, uint64_t rng_seed,
                     size_t epoch);

// Inverted dropout: each coordinate zeroed with probability `dropout`,
// survivors scaled by 1/(1-dropout).
std::vector<double> apply_dropout(std::span<const double> x, double dropout, Rng& rng);

std::array<double, 2> forward(const LinearModel& model, std::span<const double> x);
std::array<double, 2> forward(const LinearModel& model, std::span<const double> x,
                              double dropout, bool training, Rng* rng);

// P(class 1) via numerically stable 2-way softmax.
double softmax_confidence(const std::array<double, 2>& logits);

struct LossResult {
    double loss = 0.0;
    ModelGrads grads;
};

// weighted_ce: per-example -w_y * log softmax_y, batch mean, analytic grads.
// hinge: per-example max(0, 1 - s * (logit1 - logit0)) with s = +/-1, plus
// L2 term lambda * ||weights||^2 / 2, lambda = 1/(hinge_c * batch_size);
// subgradient returned.
LossResult loss_and_grad(const LinearModel& model,
                         const std::vector<std::vector<double>>& batch_x,
                         std::span<const int> batch_y, const LossConfig& cfg);

// Linear warmup to base_lr over W = round(warmup_fraction * total_steps)
// steps, then linear decay to exactly 0 at total_steps.
double lr_at_step(double base_lr, size_t step, size_t total_steps, double warmup_fraction);

struct AdamState {
    std::vector<double> m_w;
    std::vector<double> v_w;
    std::array<double, 2> m_b = {0.0, 0.0};
    std::array<double, 2> v_b = {0.0, 0.0};
    size_t step = 0;

    static AdamState zeros(size_t dim) {
        AdamState s;
        s.m_w.assign(2 * dim, 0.0);
        s.v_w.assign(2 * dim, 0.0);
        return s;
    }
};

// Adaptive moment estimation with bias correction and decoupled weight decay;
// decay applies to weights only, never bias.
void optimizer_step(LinearModel& model, const ModelGrads& grads, AdamState& state, double lr,
                    const TrainConfig& cfg);

// Row view into an embedding matrix plus aligned labels.
struct DatasetView {
    const EmbeddingMatrix* features = nullptr;
    std::vector<size_t> indices;
    std::vector<int> labels;

    size_t size() const { return indices.size(); }
    std::vector<double> row_as_double(size_t i) const {
        auto r = features->row(indices[i]);
        return std::vector<double>(r.begin(), r.end());
    }
};

// continue -> true, stop -> false
using PrunerHook = std::function<bool(size_t epoch, double val_macro_f1)>;
// Diagnostics tap, called after every optimizer step.
using StepObserver = std::function<void(size_t epoch, size_t step, const LinearModel& model,
                                        double batch_loss)>;

// Full epoch loop: fresh BatchPlan per epoch, scheduled AdamW steps, epoch-end
// validation macro-F1 at threshold 0.5, best-checkpoint selection (strictly
// better replaces, ties keep the earlier epoch), optional pruning hook.
// Fully deterministic given cfg.seed.
Checkpoint train(const DatasetView& train_set, const DatasetView& val_set,
                 const TrainConfig& cfg, const LossConfig& loss_cfg,
                 const PrunerHook& pruner_hook = nullptr,
                 const StepObserver& observer = nullptr);

// Checkpoint file: one JSON header line {dim, epoch, val_macro_f1, source_tag}
// followed by 2*dim+2 little-endian f32 (weights row-major, then bias).
void save_checkpoint(const Checkpoint& ckpt, const std::string& path,
                     const std::string& provenance_comment = "");
Checkpoint load_checkpoint(const std::string& path);

}  // namespace reclaim
