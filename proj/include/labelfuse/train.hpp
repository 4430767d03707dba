#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "labelfuse/annotators.hpp"
#include "labelfuse/data.hpp"
#include "labelfuse/fusion.hpp"
#include "labelfuse/network.hpp"

// One training loop serves every method: a per-batch objective maps head
// logits to a loss and upstream logit gradients, and the loop owns batching,
// the optimizer, and validation-based checkpoint selection. Methods differ
// only in their objective (and possibly objective-owned global parameters).

namespace labelfuse {

struct TrainOptions {
    int epochs = 30;
    int batch_size = 64;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::uint64_t model_seed = 0;
    bool identity_coeff_bias = true;
    FusionMode mode = FusionMode::full;  // frozen-head assertions for ours

    void validate() const {
        if (epochs < 1) throw ConfigError("TrainOptions: epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("TrainOptions: batch_size must be >= 1");
        if (learning_rate <= 0.0) throw ConfigError("TrainOptions: learning_rate must be > 0");
        if (momentum < 0.0 || momentum >= 1.0) {
            throw ConfigError("TrainOptions: momentum must lie in [0, 1)");
        }
    }
};

struct EpochStats {
    double train_loss = 0.0;
    double val_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
    ModelParams params;        // validation-argmax checkpoint (last epoch if no val)
    int selected_epoch = 0;    // 0-based
    double selected_val_accuracy = std::numeric_limits<double>::quiet_NaN();
    std::vector<EpochStats> history;
};

/// Fraction of predictions matching golden labels.
inline double accuracy(const std::vector<int>& predictions, const std::vector<int>& golden) {
    if (predictions.size() != golden.size()) {
        throw DimensionError("accuracy: prediction/golden length mismatch");
    }
    if (predictions.empty()) throw ValueError("accuracy: empty inputs");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == golden[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

/// Argmax with earliest-epoch tie break; NaN entries never win.
inline int select_epoch(const std::vector<double>& val_accuracy) {
    int best = 0;
    for (int e = 1; e < static_cast<int>(val_accuracy.size()); ++e) {
        const double v = val_accuracy[static_cast<std::size_t>(e)];
        const double b = val_accuracy[static_cast<std::size_t>(best)];
        if (std::isnan(b) || (!std::isnan(v) && v > b)) best = e;
    }
    return best;
}

/// Per-batch loss/gradient provider. Fills per-sample gradient rows (the
/// loop applies the 1/B scaling) and returns the summed batch loss.
class Objective {
public:
    virtual ~Objective() = default;
    virtual double batch(const std::vector<int>& sample_indices, const BatchCache& cache,
                         Mat& d_f, Mat& d_w, Mat& d_c) = 0;
    /// SGD step for objective-owned globals, mirroring the model update.
    virtual void step_globals(double learning_rate, double momentum, int batch_size) {}
};

inline TrainResult train_model(const Mat& features, Objective& objective, const ModelDims& dims,
                               const Dataset* val, const TrainOptions& opts) {
    opts.validate();
    const int n = static_cast<int>(features.rows());
    if (n == 0) throw ValueError("train_model: empty training set");
    const bool has_val = val != nullptr && val->n() > 0;
    if (has_val && !val->has_golden()) {
        throw ConfigError("train_model: validation split has no golden labels");
    }

    ModelParams params = init_params(dims, opts.model_seed, opts.identity_coeff_bias);
    OptimizerState optimizer = make_optimizer(params, opts.learning_rate, opts.momentum);
    rng::Engine shuffler(rng::derive_seed(opts.model_seed, 0x62617463ULL));

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    TrainResult result;
    double best_val = -1.0;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        shuffler.shuffle(order);
        double epoch_loss = 0.0;
        for (int start = 0, batch_id = 0; start < n; start += opts.batch_size, ++batch_id) {
            const int b = std::min(opts.batch_size, n - start);
            std::vector<int> idx(order.begin() + start, order.begin() + start + b);
            Mat x_batch(b, features.cols());
            for (int i = 0; i < b; ++i) x_batch.row(i) = features.row(idx[static_cast<std::size_t>(i)]);

            Mat d_f = Mat::Zero(b, dims.K);
            Mat d_w = Mat::Zero(b, dims.R);
            Mat d_c = Mat::Zero(b, dims.coeff_outputs());
            double batch_loss = 0.0;
            BatchCache cache;
            try {
                cache = forward_batch(params, x_batch);
                batch_loss = objective.batch(idx, cache, d_f, d_w, d_c);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " (diverged at epoch " +
                                   std::to_string(epoch) + ", batch " + std::to_string(batch_id) +
                                   ")");
            }
            if (!std::isfinite(batch_loss)) {
                throw NumericError("train_model: non-finite loss at epoch " +
                                   std::to_string(epoch) + ", batch " + std::to_string(batch_id));
            }
            epoch_loss += batch_loss;

            if (opts.mode == FusionMode::weights_only && d_c.cwiseAbs().maxCoeff() != 0.0) {
                throw NumericError("train_model: frozen coefficient head received gradient");
            }
            if (opts.mode == FusionMode::confusion_only && d_w.cwiseAbs().maxCoeff() != 0.0) {
                throw NumericError("train_model: frozen weight head received gradient");
            }

            const double scale = 1.0 / b;
            ModelGrads grads = backward_batch(params, cache, d_f, d_w, d_c);
            grads.zip(grads, [&](auto& t, auto&) { t *= scale; });
            sgd_momentum_step(params, grads, optimizer);
            objective.step_globals(opts.learning_rate, opts.momentum, b);
        }

        EpochStats stats;
        stats.train_loss = epoch_loss / n;
        if (has_val) {
            stats.val_accuracy = accuracy(predict_batch(params, val->features), val->golden);
            if (stats.val_accuracy > best_val) {
                best_val = stats.val_accuracy;
                result.params = params;
                result.selected_epoch = epoch;
                result.selected_val_accuracy = stats.val_accuracy;
            }
        }
        result.history.push_back(stats);
    }

    if (!has_val) {
        result.params = std::move(params);
        result.selected_epoch = opts.epochs - 1;
    }
    return result;
}

// --- objectives shared by several methods -----------------------------------

/// Fixed per-sample soft targets; KL(target || softmax(f)) through the class
/// head only. Used by golden/single/majority-vote training and MBEM rounds.
class SoftTargetObjective final : public Objective {
public:
    explicit SoftTargetObjective(Mat targets) : targets_(std::move(targets)) {}

    double batch(const std::vector<int>& idx, const BatchCache& cache, Mat& d_f, Mat& /*d_w*/,
                 Mat& /*d_c*/) override {
        double loss = 0.0;
        for (int i = 0; i < cache.batch_size(); ++i) {
            const Vec target = targets_.row(idx[static_cast<std::size_t>(i)]).transpose();
            const Vec probs = softmax(cache.f_logits.row(i).transpose());
            loss += detail::kl_unchecked(target, probs);
            d_f.row(i) = (probs - target).transpose();
        }
        return loss;
    }

private:
    Mat targets_;  // N x K
};

/// The sample-wise fusion method: per-sample loss and gradients flow through
/// all three heads.
class FusionObjective final : public Objective {
public:
    FusionObjective(const PermutationBasis& basis, const AnnotatorLabels& labels, double lambda,
                    FusionMode mode, KlDirection direction = kDefaultKlDirection)
        : basis_(basis), labels_(labels), lambda_(lambda), mode_(mode), direction_(direction) {}

    double batch(const std::vector<int>& idx, const BatchCache& cache, Mat& d_f, Mat& d_w,
                 Mat& d_c) override {
        const int R = labels_.num_annotators();
        const int M = basis_.M;
        double loss = 0.0;
        FusionInputs in;
        for (int i = 0; i < cache.batch_size(); ++i) {
            const int n = idx[static_cast<std::size_t>(i)];
            in.f_logits = cache.f_logits.row(i).transpose();
            in.w_logits = cache.w_logits.row(i).transpose();
            in.c_logits.resize(static_cast<std::size_t>(R));
            for (int r = 0; r < R; ++r) {
                in.c_logits[static_cast<std::size_t>(r)] =
                    cache.c_logits.row(i).segment(r * M, M).transpose();
            }
            in.annotator_labels = labels_.sample_labels(n);

            auto [sample_loss, grads] = fusion_loss_grad(in, basis_, lambda_, mode_, direction_);
            loss += sample_loss;
            d_f.row(i) = grads.d_f_logits.transpose();
            d_w.row(i) = grads.d_w_logits.transpose();
            for (int r = 0; r < R; ++r) {
                d_c.row(i).segment(r * M, M) = grads.d_c_logits[static_cast<std::size_t>(r)].transpose();
            }
        }
        return loss;
    }

private:
    const PermutationBasis& basis_;
    const AnnotatorLabels& labels_;
    double lambda_;
    FusionMode mode_;
    KlDirection direction_;
};

/// Trains the fusion method against a fixed permutation basis.
inline TrainResult train_fusion(const Dataset& train, const Dataset* val, const ModelDims& dims,
                                const PermutationBasis& basis, double lambda,
                                const TrainOptions& opts,
                                KlDirection direction = kDefaultKlDirection) {
    if (!train.annotators) throw ConfigError("train_fusion: training split has no annotators");
    if (lambda < 0.0) throw ConfigError("train_fusion: lambda must be >= 0");
    FusionObjective objective(basis, *train.annotators, lambda, opts.mode, direction);
    return train_model(train.features, objective, dims, val, opts);
}

}  // namespace labelfuse
