#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "labelfuse/linalg.hpp"

// Sample-wise label fusion: annotator one-hot labels are pushed through
// per-sample doubly stochastic confusion matrices (convex combinations of a
// fixed permutation basis), blended by a per-sample weight vector, and the
// result trains the classifier through a KL term plus a diagonal penalty
// that charges confusion matrices for drifting away from the identity.

namespace labelfuse {

/// Which blocks of the model are trainable. weights_only freezes every
/// confusion matrix at the identity; confusion_only freezes the weight
/// vector at uniform.
enum class FusionMode { full, weights_only, confusion_only };

/// Argument order of the KL term, kept as a switch so the two readings of
/// the loss can be A/B tested. target_first trains with KL(y_targ || f),
/// which reduces to cross-entropy for one-hot targets; prediction_first
/// trains with KL(f || y_targ).
enum class KlDirection { target_first, prediction_first };

inline constexpr KlDirection kDefaultKlDirection = KlDirection::target_first;

/// Per-sample head logits plus that sample's annotator labels.
struct FusionInputs {
    Vec f_logits;                 // K class logits
    Vec w_logits;                 // R annotator-weight logits
    std::vector<Vec> c_logits;    // R vectors of M basis-coefficient logits
    std::vector<int> annotator_labels;  // R labels in {0,...,K-1}

    int num_classes() const { return static_cast<int>(f_logits.size()); }
    int num_annotators() const { return static_cast<int>(w_logits.size()); }

    void validate(const PermutationBasis& basis) const {
        const int K = num_classes();
        const int R = num_annotators();
        if (K != basis.K) throw DimensionError("FusionInputs: f_logits length != basis K");
        if (R < 1) throw DimensionError("FusionInputs: need at least one annotator");
        if (static_cast<int>(c_logits.size()) != R ||
            static_cast<int>(annotator_labels.size()) != R) {
            throw DimensionError("FusionInputs: per-annotator fields disagree on R");
        }
        for (const Vec& c : c_logits) {
            if (c.size() != basis.M) throw DimensionError("FusionInputs: c_logits length != M");
        }
        for (int y : annotator_labels) {
            if (y < 0 || y >= K) {
                throw InvalidLabelError("FusionInputs: annotator label " + std::to_string(y) +
                                        " out of range for K=" + std::to_string(K));
            }
        }
    }
};

/// Gradients of the per-sample loss with respect to each logit block.
struct FusionGradients {
    Vec d_f_logits;
    Vec d_w_logits;
    std::vector<Vec> d_c_logits;
};

/// Clean soft label: pushes a one-hot annotator label through the confusion
/// matrix, i.e. selects column y of P.
inline Vec clean_label(const Mat& confusion, int label) {
    if (confusion.rows() != confusion.cols()) {
        throw DimensionError("clean_label: confusion matrix must be square");
    }
    if (label < 0 || label >= confusion.cols()) {
        throw InvalidLabelError("clean_label: label " + std::to_string(label) +
                                " out of range for K=" + std::to_string(confusion.cols()));
    }
    return confusion.col(label);
}

/// Convex combination of the R clean labels under the weight vector.
inline Vec fuse_target(const std::vector<Vec>& cleans, const Vec& weights) {
    if (cleans.empty() || weights.size() != static_cast<Eigen::Index>(cleans.size())) {
        throw DimensionError("fuse_target: weights length != number of clean labels");
    }
    Vec target = Vec::Zero(cleans.front().size());
    for (std::size_t r = 0; r < cleans.size(); ++r) {
        if (cleans[r].size() != target.size()) {
            throw DimensionError("fuse_target: clean label dimension mismatch");
        }
        target += weights[static_cast<Eigen::Index>(r)] * cleans[r];
    }
    return target;
}

/// sum_k (1 - P_kk)^2, the quadratic term pulling diagonals toward 1.
inline double diag_penalty(const Mat& confusion) {
    if (confusion.rows() != confusion.cols()) {
        throw DimensionError("diag_penalty: matrix must be square");
    }
    return (1.0 - confusion.diagonal().array()).square().sum();
}

namespace detail {

// KL(a || b) with the 0*ln(0) = 0 convention; both arguments floored at
// kProbFloor inside the logs.
inline double kl_unchecked(const Vec& a, const Vec& b) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < a.size(); ++k) {
        const double t = a[k];
        if (t <= 0.0) continue;
        acc += t * (std::log(std::max(t, kProbFloor)) - std::log(std::max(b[k], kProbFloor)));
    }
    return acc;
}

// Derivative of kl_unchecked(a, b) in a.
inline Vec kl_grad_first(const Vec& a, const Vec& b) {
    Vec g(a.size());
    for (Eigen::Index k = 0; k < a.size(); ++k) {
        g[k] = std::log(std::max(a[k], kProbFloor)) - std::log(std::max(b[k], kProbFloor)) +
               (a[k] > kProbFloor ? 1.0 : 0.0);
    }
    return g;
}

// Derivative of kl_unchecked(a, b) in b.
inline Vec kl_grad_second(const Vec& a, const Vec& b) {
    Vec g = Vec::Zero(a.size());
    for (Eigen::Index k = 0; k < a.size(); ++k) {
        if (a[k] > 0.0 && b[k] > kProbFloor) g[k] = -a[k] / b[k];
    }
    return g;
}

// Everything the loss and its gradient share.
struct FusionForward {
    Vec pred;                  // softmax(f_logits)
    Vec weights;               // softmax(w_logits), or uniform in confusion_only
    std::vector<Vec> coeffs;   // softmax(c_logits[r]); empty in weights_only
    std::vector<Vec> cleans;   // column y_r of P^(r)
    std::vector<Vec> diags;    // diagonal of P^(r); empty in weights_only
    Vec target;
    double kl = 0.0;
    double penalty_sum = 0.0;  // sum_r diag_penalty(P^(r))
};

inline FusionForward fusion_forward(const FusionInputs& in, const PermutationBasis& basis,
                                    FusionMode mode, KlDirection direction) {
    in.validate(basis);
    const int K = basis.K;
    const int R = in.num_annotators();

    FusionForward fwd;
    fwd.pred = softmax(in.f_logits);
    fwd.weights = (mode == FusionMode::confusion_only)
                      ? Vec::Constant(R, 1.0 / R)
                      : softmax(in.w_logits);

    fwd.cleans.resize(R);
    if (mode != FusionMode::weights_only) {
        fwd.coeffs.resize(R);
        fwd.diags.resize(R);
    }
    for (int r = 0; r < R; ++r) {
        const int y = in.annotator_labels[r];
        if (mode == FusionMode::weights_only) {
            fwd.cleans[r] = one_hot(y, K);
            continue;
        }
        const Vec c = softmax(in.c_logits[r]);
        Vec clean = Vec::Zero(K);
        Vec diag = Vec::Zero(K);
        for (int m = 0; m < basis.M; ++m) {
            clean[basis.perms[m][y]] += c[m];
            diag += c[m] * basis.diag_mask(m);
        }
        fwd.penalty_sum += (1.0 - diag.array()).square().sum();
        fwd.coeffs[r] = c;
        fwd.cleans[r] = std::move(clean);
        fwd.diags[r] = std::move(diag);
    }

    fwd.target = fuse_target(fwd.cleans, fwd.weights);
    fwd.kl = direction == KlDirection::target_first ? kl_unchecked(fwd.target, fwd.pred)
                                                    : kl_unchecked(fwd.pred, fwd.target);
    return fwd;
}

}  // namespace detail

/// KL(target || pred) with the 0*ln(0) = 0 convention and probability floor.
inline double kl_divergence(const Vec& target, const Vec& pred) {
    if (target.size() != pred.size()) throw DimensionError("kl_divergence: size mismatch");
    if (!is_prob_vector(target, 1e-6) || !is_prob_vector(pred, 1e-6)) {
        throw ValueError("kl_divergence: arguments must lie on the simplex");
    }
    const double v = detail::kl_unchecked(target, pred);
    if (!std::isfinite(v)) throw NumericError("kl_divergence: non-finite result");
    return v;
}

/// Per-sample loss: the KL term plus (lambda/R) * sum_r diag_penalty(P^(r)).
inline double fusion_loss(const FusionInputs& inputs, const PermutationBasis& basis,
                          double lambda, FusionMode mode = FusionMode::full,
                          KlDirection direction = kDefaultKlDirection) {
    if (lambda < 0.0) throw ValueError("fusion_loss: lambda must be >= 0");
    const auto fwd = detail::fusion_forward(inputs, basis, mode, direction);
    const double loss =
        fwd.kl + lambda / inputs.num_annotators() * fwd.penalty_sum;
    if (!std::isfinite(loss)) throw NumericError("fusion_loss: non-finite loss");
    return loss;
}

/// Loss plus exact gradients with respect to all three logit blocks. The
/// target is trainable: gradients reach it through both the weight vector
/// and the basis coefficients.
inline std::pair<double, FusionGradients> fusion_loss_grad(const FusionInputs& inputs,
                                                           const PermutationBasis& basis,
                                                           double lambda,
                                                           FusionMode mode = FusionMode::full,
                                                           KlDirection direction = kDefaultKlDirection) {
    if (lambda < 0.0) throw ValueError("fusion_loss_grad: lambda must be >= 0");
    const int R = inputs.num_annotators();
    const auto fwd = detail::fusion_forward(inputs, basis, mode, direction);
    const double loss = fwd.kl + lambda / R * fwd.penalty_sum;
    if (!std::isfinite(loss)) throw NumericError("fusion_loss_grad: non-finite loss");

    FusionGradients grads;
    Vec g_pred, g_target;
    if (direction == KlDirection::target_first) {
        g_pred = detail::kl_grad_second(fwd.target, fwd.pred);
        g_target = detail::kl_grad_first(fwd.target, fwd.pred);
    } else {
        g_pred = detail::kl_grad_first(fwd.pred, fwd.target);
        g_target = detail::kl_grad_second(fwd.pred, fwd.target);
    }
    grads.d_f_logits = softmax_backward(fwd.pred, g_pred);

    if (mode == FusionMode::confusion_only) {
        grads.d_w_logits = Vec::Zero(R);
    } else {
        Vec d_weights(R);
        for (int r = 0; r < R; ++r) d_weights[r] = g_target.dot(fwd.cleans[r]);
        grads.d_w_logits = softmax_backward(fwd.weights, d_weights);
    }

    grads.d_c_logits.resize(R);
    for (int r = 0; r < R; ++r) {
        if (mode == FusionMode::weights_only) {
            grads.d_c_logits[r] = Vec::Zero(basis.M);
            continue;
        }
        const int y = inputs.annotator_labels[r];
        const Vec pen_residual = -2.0 * lambda / R * (1.0 - fwd.diags[r].array());
        Vec d_c(basis.M);
        for (int m = 0; m < basis.M; ++m) {
            d_c[m] = fwd.weights[r] * g_target[basis.perms[m][y]] +
                     pen_residual.dot(basis.diag_mask(m));
        }
        grads.d_c_logits[r] = softmax_backward(fwd.coeffs[r], d_c);
    }
    return {loss, std::move(grads)};
}

}  // namespace labelfuse
