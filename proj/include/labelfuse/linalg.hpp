#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "labelfuse/errors.hpp"
#include "labelfuse/rng.hpp"

namespace labelfuse {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kSimplexTol = 1e-9;
inline constexpr double kProbFloor = 1e-12;

inline bool is_prob_vector(const Vec& v, double tol = kSimplexTol) {
    if (v.size() == 0) return false;
    if (!v.allFinite()) return false;
    if (v.minCoeff() < -tol || v.maxCoeff() > 1.0 + tol) return false;
    return std::abs(v.sum() - 1.0) <= tol;
}

/// One-hot encoding of class_index as a length-K probability vector.
inline Vec one_hot(int class_index, int num_classes) {
    if (num_classes < 2) throw ValueError("one_hot: K must be >= 2");
    if (class_index < 0 || class_index >= num_classes) {
        throw InvalidLabelError("one_hot: label " + std::to_string(class_index) +
                                " out of range for K=" + std::to_string(num_classes));
    }
    Vec v = Vec::Zero(num_classes);
    v[class_index] = 1.0;
    return v;
}

/// Numerically stable softmax (max-shifted).
inline Vec softmax(const Vec& logits) {
    if (logits.size() == 0) throw DimensionError("softmax: empty input");
    if (!logits.allFinite()) throw NumericError("softmax: non-finite logits");
    Vec shifted = logits.array() - logits.maxCoeff();
    Vec e = shifted.array().exp();
    return e / e.sum();
}

/// Backprop through softmax: given s = softmax(z) and g = dL/ds,
/// returns dL/dz = s .* (g - <g, s>).
inline Vec softmax_backward(const Vec& probs, const Vec& upstream) {
    if (probs.size() != upstream.size()) {
        throw DimensionError("softmax_backward: size mismatch");
    }
    const double dot = probs.dot(upstream);
    return probs.array() * (upstream.array() - dot);
}

enum class Stochasticity { not_stochastic, singly, doubly };

/// Classifies a square matrix by its column sums, row sums, and entry range.
inline Stochasticity stochasticity_class(const Mat& m, double tol = kSimplexTol) {
    if (m.rows() != m.cols() || m.rows() == 0) {
        throw DimensionError("stochasticity_class: matrix must be square");
    }
    if (!m.allFinite()) return Stochasticity::not_stochastic;
    if (m.minCoeff() < -tol || m.maxCoeff() > 1.0 + tol) return Stochasticity::not_stochastic;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (std::abs(m.col(j).sum() - 1.0) > tol) return Stochasticity::not_stochastic;
    }
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (std::abs(m.row(i).sum() - 1.0) > tol) return Stochasticity::singly;
    }
    return Stochasticity::doubly;
}

/// Fixed set of K x K permutation matrices spanning the confusion-matrix
/// search space. Each permutation is stored as sigma with
/// B[sigma[j], j] = 1, i.e. sigma maps a column index to its hot row.
struct PermutationBasis {
    int K = 0;
    int M = 0;
    std::uint64_t seed = 0;
    bool include_identity = true;
    std::vector<std::vector<int>> perms;  // M entries, each of length K

    /// Materializes basis matrix m.
    Mat matrix(int m) const {
        if (m < 0 || m >= M) throw ValueError("PermutationBasis: index out of range");
        Mat b = Mat::Zero(K, K);
        for (int j = 0; j < K; ++j) b(perms[m][j], j) = 1.0;
        return b;
    }

    /// mask(m)[k] = 1 when basis matrix m has a 1 on diagonal position k.
    const Vec& diag_mask(int m) const { return diag_masks_[m]; }

    void build_masks() {
        diag_masks_.resize(perms.size());
        for (std::size_t m = 0; m < perms.size(); ++m) {
            Vec mask = Vec::Zero(K);
            for (int j = 0; j < K; ++j) {
                if (perms[m][j] == j) mask[j] = 1.0;
            }
            diag_masks_[m] = std::move(mask);
        }
    }

private:
    std::vector<Vec> diag_masks_;
};

namespace detail {

/// K! saturated at 2^63 (enough to answer feasibility for any practical M).
inline std::uint64_t saturated_factorial(int k) {
    std::uint64_t f = 1;
    for (int i = 2; i <= k; ++i) {
        if (f > std::numeric_limits<std::uint64_t>::max() / static_cast<std::uint64_t>(i)) {
            return std::numeric_limits<std::uint64_t>::max();
        }
        f *= static_cast<std::uint64_t>(i);
    }
    return f;
}

}  // namespace detail

/// Draws M pairwise-distinct uniform random permutations of {0,...,K-1}.
/// Deterministic in (K, M, seed, include_identity); duplicates are resampled.
inline PermutationBasis random_permutation_basis(int K, int M, std::uint64_t seed,
                                                 bool include_identity = true) {
    if (K < 2) throw ValueError("random_permutation_basis: K must be >= 2");
    if (M < 1) throw ValueError("random_permutation_basis: M must be >= 1");
    const std::uint64_t capacity = detail::saturated_factorial(K);
    if (static_cast<std::uint64_t>(M) > capacity) {
        throw InfeasibleBasisError("random_permutation_basis: M=" + std::to_string(M) +
                                   " exceeds K!=" + std::to_string(capacity) +
                                   " for K=" + std::to_string(K));
    }

    PermutationBasis basis;
    basis.K = K;
    basis.M = M;
    basis.seed = seed;
    basis.include_identity = include_identity;

    std::set<std::vector<int>> seen;
    std::vector<int> identity(K);
    for (int j = 0; j < K; ++j) identity[j] = j;

    if (include_identity) {
        basis.perms.push_back(identity);
        seen.insert(identity);
    }

    rng::Engine engine(seed);
    std::vector<int> perm = identity;
    while (basis.perms.size() < static_cast<std::size_t>(M)) {
        perm = identity;
        engine.shuffle(perm);
        if (seen.insert(perm).second) basis.perms.push_back(perm);
    }
    basis.build_masks();
    return basis;
}

/// Convex combination sum_m coeffs[m] * B_m; doubly stochastic whenever
/// coeffs lies on the M-simplex.
inline Mat reconstruct_confusion(const Vec& coeffs, const PermutationBasis& basis) {
    if (coeffs.size() != basis.M) {
        throw DimensionError("reconstruct_confusion: expected " + std::to_string(basis.M) +
                             " coefficients, got " + std::to_string(coeffs.size()));
    }
    Mat p = Mat::Zero(basis.K, basis.K);
    for (int m = 0; m < basis.M; ++m) {
        for (int j = 0; j < basis.K; ++j) p(basis.perms[m][j], j) += coeffs[m];
    }
    return p;
}

}  // namespace labelfuse
