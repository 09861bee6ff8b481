#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "reclaim/errors.hpp"
#include "reclaim/training.hpp"

using namespace reclaim;

namespace {

std::vector<int> make_labels(size_t positives, size_t negatives) {
    std::vector<int> labels(positives, 1);
    labels.insert(labels.end(), negatives, 0);
    return labels;
}

// Central finite differences over every parameter.
ModelGrads numeric_grads(const LinearModel& model, const std::vector<std::vector<double>>& xs,
                         const std::vector<int>& ys, const LossConfig& cfg, double h = 1e-5) {
    ModelGrads out;
    out.weights.assign(model.weights.size(), 0.0);
    LinearModel probe = model;
    for (size_t j = 0; j < model.weights.size(); ++j) {
        probe.weights[j] = model.weights[j] + h;
        const double up = loss_and_grad(probe, xs, ys, cfg).loss;
        probe.weights[j] = model.weights[j] - h;
        const double down = loss_and_grad(probe, xs, ys, cfg).loss;
        probe.weights[j] = model.weights[j];
        out.weights[j] = (up - down) / (2.0 * h);
    }
    for (size_t c = 0; c < 2; ++c) {
        probe.bias[c] = model.bias[c] + h;
        const double up = loss_and_grad(probe, xs, ys, cfg).loss;
        probe.bias[c] = model.bias[c] - h;
        const double down = loss_and_grad(probe, xs, ys, cfg).loss;
        probe.bias[c] = model.bias[c];
        out.bias[c] = (up - down) / (2.0 * h);
    }
    return out;
}

double max_rel_error(const ModelGrads& a, const ModelGrads& b) {
    double worst = 0.0;
    auto upd = [&](double x, double y) {
        const double denom = std::max({1.0, std::abs(x), std::abs(y)});
        worst = std::max(worst, std::abs(x - y) / denom);
    };
    for (size_t j = 0; j < a.weights.size(); ++j) upd(a.weights[j], b.weights[j]);
    for (size_t c = 0; c < 2; ++c) upd(a.bias[c], b.bias[c]);
    return worst;
}

// Two separable Gaussian blobs as an embedding matrix.
void separable_data(size_t n, double pos_rate, uint64_t seed, EmbeddingMatrix* emb,
                    std::vector<int>* labels) {
    Rng rng(seed);
    emb->count = n;
    emb->dim = 2;
    emb->source_tag = "blobs";
    emb->data.clear();
    labels->clear();
    for (size_t i = 0; i < n; ++i) {
        const int y = rng.uniform() < pos_rate ? 1 : 0;
        const double c = y ? 2.0 : -2.0;
        labels->push_back(y);
        emb->data.push_back(static_cast<float>(c + 0.3 * rng.gaussian()));
        emb->data.push_back(static_cast<float>(c + 0.3 * rng.gaussian()));
    }
}

DatasetView full_view(const EmbeddingMatrix& emb, const std::vector<int>& labels) {
    DatasetView v;
    v.features = &emb;
    for (size_t i = 0; i < emb.count; ++i) v.indices.push_back(i);
    v.labels = labels;
    return v;
}

}  // namespace

TEST_CASE("plan_epoch exact fit uses every index once") {
    const std::vector<int> labels = make_labels(4, 12);
    const BatchPlan plan = plan_epoch(labels, 4, 1, 1);
    REQUIRE(plan.batches.size() == 4);
    CHECK(plan.pos_per_batch == 1);
    CHECK(plan.neg_per_batch == 3);
    std::set<size_t> used;
    for (const auto& batch : plan.batches) {
        REQUIRE(batch.size() == 4);
        for (size_t idx : batch) CHECK(used.insert(idx).second);
    }
    CHECK(used.size() == 16);
}

TEST_CASE("plan_epoch batch-count capacity formula") {
    // positives exhaust first: floor(min(10/1, 100/3)) = 10
    const BatchPlan a = plan_epoch(make_labels(10, 100), 4, 1, 1);
    CHECK(a.batches.size() == 10);
    size_t negs_used = 0;
    for (const auto& batch : a.batches) {
        for (size_t idx : batch) negs_used += (idx >= 10);
    }
    CHECK(negs_used == 30);

    // floor(min(9/4, 91/12)) = 2
    const BatchPlan b = plan_epoch(make_labels(9, 91), 16, 1, 1);
    CHECK(b.batches.size() == 2);

    CHECK_THROWS_AS(plan_epoch(make_labels(0, 100), 4, 1, 1), DataError);
    CHECK_THROWS_AS(plan_epoch(make_labels(3, 2), 4, 1, 1), DataError);
    CHECK_THROWS_AS(plan_epoch(make_labels(10, 100), 6, 1, 1), ConfigError);
}

TEST_CASE("plan_epoch holds the 1:3 ratio with no repeats on random pools") {
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        const size_t batch_size = std::array<size_t, 3>{16, 32, 64}[rng.uniform_int(3)];
        const size_t pos = batch_size / 4 + rng.uniform_int(100);
        const size_t neg = 3 * batch_size / 4 + rng.uniform_int(400);
        std::vector<int> labels = make_labels(pos, neg);
        rng.shuffle(labels);

        const BatchPlan plan = plan_epoch(labels, batch_size, rng.next_u64(), 1 + trial);
        CHECK(plan.batches.size() ==
              std::min(pos / (batch_size / 4), neg / (3 * batch_size / 4)));
        std::set<size_t> used;
        for (const auto& batch : plan.batches) {
            size_t batch_pos = 0;
            for (size_t idx : batch) {
                CHECK(used.insert(idx).second);
                batch_pos += (labels[idx] == 1);
            }
            CHECK(batch_pos == plan.pos_per_batch);
            CHECK(batch.size() - batch_pos == plan.neg_per_batch);
        }
    }
}

TEST_CASE("negative selections are re-drawn across epochs") {
    const std::vector<int> labels = make_labels(10, 100);  // 30 of 100 consumed per epoch
    for (uint64_t seed = 0; seed < 20; ++seed) {
        auto negatives_of = [&](size_t epoch) {
            std::set<size_t> negs;
            for (const auto& batch : plan_epoch(labels, 4, seed, epoch).batches) {
                for (size_t idx : batch) {
                    if (labels[idx] == 0) negs.insert(idx);
                }
            }
            return negs;
        };
        CHECK(negatives_of(1) != negatives_of(2));
    }
}

TEST_CASE("forward basics") {
    LinearModel zero = LinearModel::zeros(3);
    zero.bias = {0.3, -0.2};
    const std::vector<double> x = {1.0, 2.0, 3.0};
    const auto logits = forward(zero, x);
    CHECK(logits[0] == doctest::Approx(0.3));
    CHECK(logits[1] == doctest::Approx(-0.2));

    LinearModel ident = LinearModel::zeros(2);
    ident.weights = {1.0, 0.0, 0.0, 1.0};
    const auto id_logits = forward(ident, std::vector<double>{2.0, 5.0});
    CHECK(id_logits[0] == doctest::Approx(2.0));
    CHECK(id_logits[1] == doctest::Approx(5.0));

    // dropout = 0 in training mode matches eval exactly
    Rng rng(3);
    const auto trained = forward(ident, std::vector<double>{2.0, 5.0}, 0.0, true, &rng);
    CHECK(trained == id_logits);

    CHECK_THROWS_AS(forward(ident, std::vector<double>{1.0}), DataError);
}

TEST_CASE("inverted dropout scales survivors") {
    Rng rng(11);
    const std::vector<double> x(1000, 1.0);
    const auto masked = apply_dropout(x, 0.25, rng);
    size_t kept = 0;
    for (double v : masked) {
        CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
        kept += (v != 0.0);
    }
    // keep rate concentrates near 0.75
    CHECK(kept > 650);
    CHECK(kept < 850);
}

TEST_CASE("softmax_confidence worked values and stability") {
    CHECK(softmax_confidence({0.0, 0.0}) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(softmax_confidence({2.0, 0.0}) ==
          doctest::Approx(1.0 / (1.0 + std::exp(2.0))).epsilon(1e-12));
    CHECK(softmax_confidence({2.0, 0.0}) == doctest::Approx(0.11920).epsilon(1e-4));
    // no overflow on large logits
    CHECK(softmax_confidence({1000.0, 1004.0}) ==
          doctest::Approx(1.0 / (1.0 + std::exp(-4.0))).epsilon(1e-12));
    CHECK(softmax_confidence({1000.0, 1004.0}) == doctest::Approx(0.98201).epsilon(1e-4));

    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(softmax_confidence({inf, 0.0}), DataError);
}

TEST_CASE("softmax_confidence complement identity") {
    Rng rng(21);
    for (int i = 0; i < 200; ++i) {
        const double a = rng.uniform_in(-30, 30);
        const double b = rng.uniform_in(-30, 30);
        CHECK(softmax_confidence({a, b}) + softmax_confidence({b, a}) ==
              doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("weighted CE worked losses") {
    const LinearModel model = LinearModel::zeros(2);  // equal logits everywhere
    const std::vector<std::vector<double>> x = {{0.5, -0.5}};
    LossConfig cfg;
    cfg.w0 = 0.35;
    cfg.w1 = 1.0;

    const std::vector<int> pos = {1};
    CHECK(loss_and_grad(model, x, pos, cfg).loss ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));  // -ln(0.5) = 0.69315

    const std::vector<int> neg = {0};
    CHECK(loss_and_grad(model, x, neg, cfg).loss ==
          doctest::Approx(0.35 * std::log(2.0)).epsilon(1e-12));  // 0.24260

    CHECK_THROWS_AS(loss_and_grad(model, {}, std::vector<int>{}, cfg), DataError);
}

TEST_CASE("hinge loss is zero beyond the margin") {
    LinearModel model = LinearModel::zeros(1);
    model.weights = {0.0, 2.0};  // logit1 = 2x, logit0 = 0
    LossConfig cfg;
    cfg.kind = LossKind::hinge;
    // x = 1, label 1: margin = 2, correctly classified beyond margin
    const std::vector<std::vector<double>> x = {{1.0}};
    const std::vector<int> y = {1};
    const LossResult res = loss_and_grad(model, x, y, cfg);
    const double l2 = (1.0 / (1.0 * 1.0)) * (0.0 + 4.0) / 2.0;  // lambda ||w||^2 / 2
    CHECK(res.loss == doctest::Approx(l2).epsilon(1e-12));
}

TEST_CASE("analytic CE gradients match central differences") {
    Rng rng(31);
    for (int trial = 0; trial < 25; ++trial) {
        const size_t dim = 1 + rng.uniform_int(8);
        const size_t n = 1 + rng.uniform_int(8);
        LinearModel model = LinearModel::zeros(dim);
        for (auto& w : model.weights) w = rng.gaussian();
        model.bias = {rng.gaussian(), rng.gaussian()};

        std::vector<std::vector<double>> xs(n, std::vector<double>(dim));
        std::vector<int> ys(n);
        for (size_t i = 0; i < n; ++i) {
            for (auto& v : xs[i]) v = rng.gaussian();
            ys[i] = rng.uniform() < 0.5 ? 1 : 0;
        }
        LossConfig cfg;
        cfg.w0 = 0.2 + rng.uniform();  // several weight settings
        cfg.w1 = 0.2 + rng.uniform();

        const ModelGrads analytic = loss_and_grad(model, xs, ys, cfg).grads;
        const ModelGrads numeric = numeric_grads(model, xs, ys, cfg);
        CHECK(max_rel_error(analytic, numeric) <= 1e-5);
    }
}

TEST_CASE("hinge subgradients match central differences away from the kink") {
    Rng rng(37);
    LossConfig cfg;
    cfg.kind = LossKind::hinge;
    cfg.hinge_c = 1.0;
    for (int trial = 0; trial < 10; ++trial) {
        const size_t dim = 2 + rng.uniform_int(4);
        LinearModel model = LinearModel::zeros(dim);
        for (auto& w : model.weights) w = rng.gaussian();
        std::vector<std::vector<double>> xs(4, std::vector<double>(dim));
        std::vector<int> ys(4);
        for (size_t i = 0; i < 4; ++i) {
            for (auto& v : xs[i]) v = rng.gaussian();
            ys[i] = rng.uniform() < 0.5 ? 1 : 0;
        }
        // skip instances too close to the hinge kink for finite differences
        bool near_kink = false;
        for (size_t i = 0; i < 4; ++i) {
            const auto logits = forward(model, xs[i]);
            const double s = ys[i] == 1 ? 1.0 : -1.0;
            if (std::abs(1.0 - s * (logits[1] - logits[0])) < 1e-3) near_kink = true;
        }
        if (near_kink) continue;
        const ModelGrads analytic = loss_and_grad(model, xs, ys, cfg).grads;
        const ModelGrads numeric = numeric_grads(model, xs, ys, cfg);
        CHECK(max_rel_error(analytic, numeric) <= 1e-5);
    }
}

TEST_CASE("lr schedule: warmup ramp, peak, decay to zero") {
    CHECK(lr_at_step(1e-4, 5, 100, 0.1) == doctest::Approx(5e-5).epsilon(1e-12));
    CHECK(lr_at_step(1e-4, 10, 100, 0.1) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(lr_at_step(1e-4, 55, 100, 0.1) == doctest::Approx(5e-5).epsilon(1e-12));
    CHECK(lr_at_step(1e-4, 100, 100, 0.1) == 0.0);
    // continuity at the peak: decay formula at step W equals base
    CHECK(lr_at_step(1e-4, 10, 100, 0.1) ==
          doctest::Approx(1e-4 * (100.0 - 10.0) / (100.0 - 10.0)).epsilon(1e-12));
    CHECK_THROWS_AS(lr_at_step(1e-4, 0, 0, 0.1), ConfigError);
}

TEST_CASE("optimizer_step worked cases") {
    TrainConfig cfg;

    // zero gradients, no decay: parameters unchanged
    LinearModel m1 = LinearModel::zeros(2);
    m1.weights = {1.0, -2.0, 0.5, 0.25};
    m1.bias = {0.1, -0.1};
    const LinearModel before = m1;
    AdamState s1 = AdamState::zeros(2);
    ModelGrads zero;
    zero.weights.assign(4, 0.0);
    optimizer_step(m1, zero, s1, 0.1, cfg);
    CHECK(m1.weights == before.weights);
    CHECK(m1.bias == before.bias);

    // first step with unit gradient moves by ~lr (bias corrections cancel)
    LinearModel m2 = LinearModel::zeros(1);
    AdamState s2 = AdamState::zeros(1);
    ModelGrads g;
    g.weights = {1.0, 0.0};
    optimizer_step(m2, g, s2, 0.1, cfg);
    CHECK(m2.weights[0] == doctest::Approx(-0.1).epsilon(1e-6));

    // decoupled decay: zero grad, wd 0.1, lr 0.1, theta 1 -> 0.99; bias untouched
    TrainConfig decay_cfg;
    decay_cfg.weight_decay = 0.1;
    LinearModel m3 = LinearModel::zeros(1);
    m3.weights = {1.0, 0.0};
    m3.bias = {1.0, 0.0};
    AdamState s3 = AdamState::zeros(1);
    ModelGrads zero1;
    zero1.weights.assign(2, 0.0);
    optimizer_step(m3, zero1, s3, 0.1, decay_cfg);
    CHECK(m3.weights[0] == doctest::Approx(0.99).epsilon(1e-12));
    CHECK(m3.bias[0] == doctest::Approx(1.0).epsilon(1e-12));

    // shape mismatch
    ModelGrads bad;
    bad.weights.assign(6, 0.0);
    CHECK_THROWS_AS(optimizer_step(m3, bad, s3, 0.1, cfg), DataError);
}

TEST_CASE("train separates the synthetic blobs within 10 epochs") {
    EmbeddingMatrix emb;
    std::vector<int> labels;
    separable_data(200, 0.25, 501, &emb, &labels);
    const DatasetView view = full_view(emb, labels);

    TrainConfig cfg;
    cfg.learning_rate = 5e-2;
    cfg.batch_size = 16;
    cfg.max_epochs = 10;
    cfg.seed = 7;

    const Checkpoint best = train(view, view, cfg, LossConfig{});
    CHECK(best.val_macro_f1 >= 0.95);
    CHECK(best.epoch >= 1);
    CHECK(best.epoch <= 10);
}

TEST_CASE("pruner hook stopping at epoch 1 bounds the checkpoint epoch") {
    EmbeddingMatrix emb;
    std::vector<int> labels;
    separable_data(100, 0.25, 502, &emb, &labels);
    const DatasetView view = full_view(emb, labels);

    TrainConfig cfg;
    cfg.batch_size = 16;
    cfg.seed = 1;
    const Checkpoint best =
        train(view, view, cfg, LossConfig{}, [](size_t, double) { return false; });
    CHECK(best.epoch <= 1);
}

TEST_CASE("train is bit-deterministic given the seed") {
    EmbeddingMatrix emb;
    std::vector<int> labels;
    separable_data(120, 0.3, 503, &emb, &labels);
    const DatasetView view = full_view(emb, labels);

    TrainConfig cfg;
    cfg.batch_size = 16;
    cfg.dropout = 0.2;
    cfg.seed = 99;

    const Checkpoint a = train(view, view, cfg, LossConfig{});
    const Checkpoint b = train(view, view, cfg, LossConfig{});
    REQUIRE(a.model.weights.size() == b.model.weights.size());
    CHECK(std::memcmp(a.model.weights.data(), b.model.weights.data(),
                      a.model.weights.size() * sizeof(double)) == 0);
    CHECK(a.model.bias == b.model.bias);
    CHECK(a.epoch == b.epoch);
    CHECK(a.val_macro_f1 == b.val_macro_f1);
}

TEST_CASE("full-train loss is non-increasing across epoch-1 steps on the CI seed") {
    EmbeddingMatrix emb;
    std::vector<int> labels;
    separable_data(200, 0.25, 504, &emb, &labels);
    const DatasetView view = full_view(emb, labels);

    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 16;
    cfg.dropout = 0.0;
    cfg.seed = 17;

    std::vector<double> full_losses;
    LossConfig loss_cfg;
    StepObserver observer = [&](size_t epoch, size_t, const LinearModel& model, double) {
        if (epoch != 1) return;
        std::vector<std::vector<double>> xs;
        std::vector<int> ys;
        for (size_t i = 0; i < view.size(); ++i) {
            xs.push_back(view.row_as_double(i));
            ys.push_back(view.labels[i]);
        }
        full_losses.push_back(loss_and_grad(model, xs, ys, loss_cfg).loss);
    };
    train(view, view, cfg, loss_cfg, nullptr, observer);

    REQUIRE(full_losses.size() >= 2);
    for (size_t i = 1; i < full_losses.size(); ++i) {
        CHECK(full_losses[i] <= full_losses[i - 1] + 1e-9);
    }
}

TEST_CASE("checkpoint save/load round trip") {
    Checkpoint ckpt;
    ckpt.model = LinearModel::zeros(3);
    ckpt.model.weights = {0.5f, -1.25f, 2.0f, 0.125f, -0.375f, 1.5f};
    ckpt.model.bias = {0.25, -0.75};
    ckpt.epoch = 4;
    ckpt.val_macro_f1 = 0.875;
    ckpt.source_tag = "blobs";

    const auto path = std::filesystem::temp_directory_path() / "ckpt_rt.bin";
    save_checkpoint(ckpt, path.string());
    const Checkpoint back = load_checkpoint(path.string());
    CHECK(back.epoch == 4);
    CHECK(back.val_macro_f1 == doctest::Approx(0.875));
    CHECK(back.source_tag == "blobs");
    REQUIRE(back.model.dim == 3);
    // values chosen exactly representable in f32
    CHECK(back.model.weights == ckpt.model.weights);
    CHECK(back.model.bias[0] == doctest::Approx(0.25));
}
