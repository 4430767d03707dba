#pragma once

#include <utility>
#include <vector>

#include "labelfuse/train.hpp"

// Reference methods the fusion approach is compared against. All of them run
// through the same train_model loop, backbone, optimizer, and selection rule;
// only the target construction differs.

namespace labelfuse {

/// Soft majority vote: mean of the one-hot annotator labels for one sample.
inline Vec majority_vote_target(const std::vector<int>& annotator_labels, int num_classes) {
    if (annotator_labels.empty()) throw ValueError("majority_vote_target: no labels");
    Vec target = Vec::Zero(num_classes);
    for (int y : annotator_labels) {
        if (y < 0 || y >= num_classes) {
            throw InvalidLabelError("majority_vote_target: label out of range");
        }
        target[y] += 1.0;
    }
    return target / static_cast<double>(annotator_labels.size());
}

namespace detail {

inline Mat one_hot_targets(const std::vector<int>& labels, int num_classes) {
    Mat targets = Mat::Zero(static_cast<Eigen::Index>(labels.size()), num_classes);
    for (std::size_t n = 0; n < labels.size(); ++n) {
        targets(static_cast<Eigen::Index>(n), labels[n]) = 1.0;
    }
    return targets;
}

inline Mat majority_targets(const AnnotatorLabels& annotators) {
    Mat targets(annotators.num_samples(), annotators.K);
    for (int n = 0; n < annotators.num_samples(); ++n) {
        targets.row(n) = majority_vote_target(annotators.sample_labels(n), annotators.K).transpose();
    }
    return targets;
}

}  // namespace detail

/// Supervised upper bound: trains the class head on golden one-hot labels.
inline TrainResult train_golden(const Dataset& train, const Dataset* val, const ModelDims& dims,
                                const TrainOptions& opts) {
    if (!train.has_golden()) throw ConfigError("train_golden: no golden labels in train split");
    SoftTargetObjective objective(detail::one_hot_targets(train.golden, dims.K));
    return train_model(train.features, objective, dims, val, opts);
}

/// Trains on a single annotator's labels (0-based index).
inline TrainResult train_single_annotator(const Dataset& train, const Dataset* val,
                                          const ModelDims& dims, const TrainOptions& opts,
                                          int annotator) {
    if (!train.annotators) throw ConfigError("train_single_annotator: no annotators");
    if (annotator < 0 || annotator >= train.annotators->num_annotators()) {
        throw ConfigError("train_single_annotator: annotator index out of range");
    }
    std::vector<int> labels(static_cast<std::size_t>(train.n()));
    for (int n = 0; n < train.n(); ++n) {
        labels[static_cast<std::size_t>(n)] = train.annotators->labels(annotator, n);
    }
    SoftTargetObjective objective(detail::one_hot_targets(labels, dims.K));
    return train_model(train.features, objective, dims, val, opts);
}

/// Majority voting baseline ("Mjv").
inline TrainResult train_majority_vote(const Dataset& train, const Dataset* val,
                                       const ModelDims& dims, const TrainOptions& opts) {
    if (!train.annotators) throw ConfigError("train_majority_vote: no annotators");
    SoftTargetObjective objective(detail::majority_targets(*train.annotators));
    return train_model(train.features, objective, dims, val, opts);
}

// --- WDN-lite: one learned global weight vector -------------------------------

/// Targets are weighted sums of raw one-hot labels under a single softmaxed
/// logit vector shared by all samples; the logits train jointly with the
/// classifier. Weight gradients flow through the target side of the KL.
class GlobalWeightsObjective final : public Objective {
public:
    explicit GlobalWeightsObjective(const AnnotatorLabels& labels)
        : labels_(labels),
          theta_(Vec::Zero(labels.num_annotators())),
          velocity_(Vec::Zero(labels.num_annotators())),
          pending_(Vec::Zero(labels.num_annotators())) {}

    double batch(const std::vector<int>& idx, const BatchCache& cache, Mat& d_f, Mat& /*d_w*/,
                 Mat& /*d_c*/) override {
        const int R = labels_.num_annotators();
        const Vec w = softmax(theta_);
        Vec d_weights = Vec::Zero(R);
        double loss = 0.0;
        for (int i = 0; i < cache.batch_size(); ++i) {
            const int n = idx[static_cast<std::size_t>(i)];
            Vec target = Vec::Zero(labels_.K);
            for (int r = 0; r < R; ++r) target[labels_.labels(r, n)] += w[r];
            const Vec probs = softmax(cache.f_logits.row(i).transpose());
            loss += detail::kl_unchecked(target, probs);
            d_f.row(i) = (probs - target).transpose();
            const Vec g_target = detail::kl_grad_first(target, probs);
            for (int r = 0; r < R; ++r) d_weights[r] += g_target[labels_.labels(r, n)];
        }
        pending_ = softmax_backward(w, d_weights);
        return loss;
    }

    void step_globals(double learning_rate, double momentum, int batch_size) override {
        velocity_ = momentum * velocity_ + pending_ / batch_size;
        theta_ -= learning_rate * velocity_;
    }

    Vec weights() const { return softmax(theta_); }

private:
    const AnnotatorLabels& labels_;
    Vec theta_;
    Vec velocity_;
    Vec pending_;
};

struct GlobalWeightsRun {
    TrainResult result;
    Vec weights;  // learned global annotator weights (simplex)
};

inline GlobalWeightsRun train_global_weights(const Dataset& train, const Dataset* val,
                                             const ModelDims& dims, const TrainOptions& opts) {
    if (!train.annotators) throw ConfigError("train_global_weights: no annotators");
    GlobalWeightsObjective objective(*train.annotators);
    auto result = train_model(train.features, objective, dims, val, opts);
    return {std::move(result), objective.weights()};
}

// --- TraceReg-lite: global confusion matrices with trace penalty ---------------

/// Annotator r's label distribution is modeled as P^(r) * f(x) with a global
/// column-softmax-parameterized P^(r); cross-entropy against the observed
/// labels plus lambda_trace * sum_r tr(P^(r)).
inline Vec annotator_label_distribution(const Mat& confusion, const Vec& class_probs) {
    if (confusion.cols() != class_probs.size()) {
        throw DimensionError("annotator_label_distribution: dimension mismatch");
    }
    return confusion * class_probs;
}

class TraceRegObjective final : public Objective {
public:
    TraceRegObjective(const AnnotatorLabels& labels, double trace_lambda)
        : labels_(labels), trace_lambda_(trace_lambda) {
        const int K = labels.K;
        const int R = labels.num_annotators();
        // Start near the identity; a symmetric (uniform) start leaves the
        // class labeling unidentifiable up to permutation.
        theta_.assign(static_cast<std::size_t>(R), 2.0 * Mat::Identity(K, K));
        velocity_.assign(static_cast<std::size_t>(R), Mat::Zero(K, K));
        pending_ = velocity_;
    }

    double batch(const std::vector<int>& idx, const BatchCache& cache, Mat& d_f, Mat& /*d_w*/,
                 Mat& /*d_c*/) override {
        const int K = labels_.K;
        const int R = labels_.num_annotators();
        std::vector<Mat> confusions(static_cast<std::size_t>(R));
        for (int r = 0; r < R; ++r) confusions[static_cast<std::size_t>(r)] = confusion(r);
        for (auto& p : pending_) p.setZero();

        double loss = 0.0;
        for (int i = 0; i < cache.batch_size(); ++i) {
            const int n = idx[static_cast<std::size_t>(i)];
            const Vec probs = softmax(cache.f_logits.row(i).transpose());
            Vec d_probs = Vec::Zero(K);
            for (int r = 0; r < R; ++r) {
                const Mat& p = confusions[static_cast<std::size_t>(r)];
                const int y = labels_.labels(r, n);
                const Vec q = p * probs;
                const double q_y = std::max(q[y], kProbFloor);
                loss -= std::log(q_y);
                // d(-ln q_y)/dq = -e_y / q_y
                const double dq_y = -1.0 / q_y;
                d_probs += dq_y * p.row(y).transpose();
                pending_[static_cast<std::size_t>(r)].row(y) += dq_y * probs.transpose();
            }
            d_f.row(i) = softmax_backward(probs, d_probs).transpose();
        }

        // Trace penalty counts once per step, like any weight regularizer.
        const double b = cache.batch_size();
        for (int r = 0; r < R; ++r) {
            auto& pend = pending_[static_cast<std::size_t>(r)];
            pend /= b;
            pend += trace_lambda_ * Mat::Identity(K, K);
            loss += trace_lambda_ * confusions[static_cast<std::size_t>(r)].trace() * b;
            // Chain through the per-column softmax parameterization.
            Mat d_theta(K, K);
            for (int j = 0; j < K; ++j) {
                d_theta.col(j) =
                    softmax_backward(confusions[static_cast<std::size_t>(r)].col(j), pend.col(j));
            }
            pend = d_theta;
        }
        return loss;
    }

    void step_globals(double learning_rate, double momentum, int /*batch_size*/) override {
        for (std::size_t r = 0; r < theta_.size(); ++r) {
            velocity_[r] = momentum * velocity_[r] + pending_[r];
            theta_[r] -= learning_rate * velocity_[r];
        }
    }

    /// Column-stochastic confusion matrix of annotator r.
    Mat confusion(int r) const {
        const Mat& t = theta_[static_cast<std::size_t>(r)];
        Mat p(t.rows(), t.cols());
        for (Eigen::Index j = 0; j < t.cols(); ++j) p.col(j) = softmax(t.col(j));
        return p;
    }

    std::vector<Mat> confusions() const {
        std::vector<Mat> out;
        for (std::size_t r = 0; r < theta_.size(); ++r) out.push_back(confusion(static_cast<int>(r)));
        return out;
    }

private:
    const AnnotatorLabels& labels_;
    double trace_lambda_;
    std::vector<Mat> theta_;     // per annotator, K x K column logits
    std::vector<Mat> velocity_;
    std::vector<Mat> pending_;
};

struct GlobalConfusionRun {
    TrainResult result;
    std::vector<Mat> confusions;  // per annotator, column-stochastic
};

inline GlobalConfusionRun train_global_confusion_tracereg(const Dataset& train,
                                                          const Dataset* val,
                                                          const ModelDims& dims,
                                                          const TrainOptions& opts,
                                                          double trace_lambda = 0.01) {
    if (!train.annotators) throw ConfigError("train_global_confusion_tracereg: no annotators");
    TraceRegObjective objective(*train.annotators, trace_lambda);
    auto result = train_model(train.features, objective, dims, val, opts);
    return {std::move(result), objective.confusions()};
}

// --- MBEM-lite: EM alternation -------------------------------------------------

/// Posterior over the true label of one sample, from the classifier output
/// and per-annotator confusion matrices (Pr[annotator label i | true j] at
/// entry (i, j)), assuming annotator independence. Computed in log space.
inline Vec mbem_posterior(const Vec& class_probs, const std::vector<Mat>& confusions,
                          const std::vector<int>& annotator_labels) {
    const int K = static_cast<int>(class_probs.size());
    Vec log_post(K);
    for (int k = 0; k < K; ++k) {
        log_post[k] = std::log(std::max(class_probs[k], kProbFloor));
    }
    for (std::size_t r = 0; r < confusions.size(); ++r) {
        const int y = annotator_labels[r];
        for (int k = 0; k < K; ++k) {
            log_post[k] += std::log(std::max(confusions[r](y, k), kProbFloor));
        }
    }
    return softmax(log_post);
}

/// Column-normalized posterior-weighted counts with additive smoothing.
inline std::vector<Mat> mbem_estimate_confusions(const Mat& posteriors,
                                                 const AnnotatorLabels& labels,
                                                 double smoothing = 1e-2) {
    const int K = labels.K;
    const int R = labels.num_annotators();
    if (posteriors.rows() != labels.num_samples() || posteriors.cols() != K) {
        throw DimensionError("mbem_estimate_confusions: posterior shape mismatch");
    }
    std::vector<Mat> confusions(static_cast<std::size_t>(R));
    for (int r = 0; r < R; ++r) {
        Mat counts = Mat::Constant(K, K, smoothing);
        for (int n = 0; n < labels.num_samples(); ++n) {
            counts.row(labels.labels(r, n)) += posteriors.row(n);
        }
        for (int j = 0; j < K; ++j) counts.col(j) /= counts.col(j).sum();
        confusions[static_cast<std::size_t>(r)] = std::move(counts);
    }
    return confusions;
}

struct MbemOptions {
    int em_rounds = 3;
    double smoothing = 1e-2;
};

/// Alternation: posterior soft labels (initialized from majority vote)
/// train the classifier; confusion matrices are re-estimated from
/// posterior-weighted counts; the posterior is refreshed via Bayes rule.
inline GlobalConfusionRun train_mbem(const Dataset& train, const Dataset* val,
                                     const ModelDims& dims, const TrainOptions& opts,
                                     const MbemOptions& mbem = {}) {
    if (!train.annotators) throw ConfigError("train_mbem: no annotators");
    if (mbem.em_rounds < 1) throw ConfigError("train_mbem: em_rounds must be >= 1");
    const AnnotatorLabels& labels = *train.annotators;

    Mat posteriors = detail::majority_targets(labels);
    std::vector<Mat> confusions;
    TrainResult result;
    for (int round = 0; round < mbem.em_rounds; ++round) {
        confusions = mbem_estimate_confusions(posteriors, labels, mbem.smoothing);
        SoftTargetObjective objective(posteriors);
        result = train_model(train.features, objective, dims, val, opts);
        if (round + 1 < mbem.em_rounds) {
            const BatchCache cache = forward_batch(result.params, train.features);
            for (int n = 0; n < train.n(); ++n) {
                const Vec probs = softmax(cache.f_logits.row(n).transpose());
                posteriors.row(n) =
                    mbem_posterior(probs, confusions, labels.sample_labels(n)).transpose();
            }
        }
    }
    return {std::move(result), std::move(confusions)};
}

}  // namespace labelfuse
