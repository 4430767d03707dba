#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "labelfuse/linalg.hpp"
#include "labelfuse/rng.hpp"

// Synthetic annotators. Both synthesis rules draw corrupted labels from a
// per-(annotator, sample) derived RNG stream, so the matrices are identical
// whether samples are generated serially or in parallel.

namespace labelfuse {

enum class AnnotatorProvenance { euclidean, hammer_spammer, external, native };

/// R x N matrix of labels; column n holds all annotators' labels for sample n.
struct AnnotatorLabels {
    Eigen::MatrixXi labels;  // R x N
    int K = 0;
    AnnotatorProvenance provenance = AnnotatorProvenance::external;

    int num_annotators() const { return static_cast<int>(labels.rows()); }
    int num_samples() const { return static_cast<int>(labels.cols()); }

    void validate() const {
        if (labels.rows() < 1 || K < 2) {
            throw ValueError("AnnotatorLabels: need R >= 1 and K >= 2");
        }
        if (labels.size() > 0 && (labels.minCoeff() < 0 || labels.maxCoeff() >= K)) {
            throw InvalidLabelError("AnnotatorLabels: label out of range");
        }
    }

    /// Column n as a plain vector, for per-sample fusion inputs.
    std::vector<int> sample_labels(int n) const {
        std::vector<int> out(static_cast<std::size_t>(labels.rows()));
        for (int r = 0; r < labels.rows(); ++r) out[static_cast<std::size_t>(r)] = labels(r, n);
        return out;
    }
};

namespace detail {

// Stream tags keep the independent draws of one synthesis decorrelated.
inline constexpr std::uint64_t kWeaknessStream = 0x77656b6eULL;
inline constexpr std::uint64_t kHammerStream = 0x68616d72ULL;
inline constexpr std::uint64_t kLabelStream = 0x6c61626cULL;

/// Uniform draw from the K-1 classes different from golden.
inline int wrong_label(rng::Engine& engine, int golden, int K) {
    const int j = static_cast<int>(engine.index(static_cast<std::size_t>(K - 1)));
    return j >= golden ? j + 1 : j;
}

}  // namespace detail

/// Weakness-image synthesis: each annotator has one reference sample; every
/// sample closer to it than epsilon gets a uniformly drawn wrong label, all
/// others keep the golden label.
inline AnnotatorLabels synthesize_euclidean(const Mat& features, const std::vector<int>& golden,
                                            int R, double epsilon, int K, std::uint64_t seed) {
    const int N = static_cast<int>(features.rows());
    if (N == 0) throw ValueError("synthesize_euclidean: empty dataset");
    if (static_cast<int>(golden.size()) != N) {
        throw DimensionError("synthesize_euclidean: golden length != feature rows");
    }
    if (R < 1 || R > N) {
        throw ValueError("synthesize_euclidean: need 1 <= R <= N (one weakness sample each)");
    }
    if (epsilon < 0.0) throw ValueError("synthesize_euclidean: epsilon must be >= 0");
    if (K < 2) throw ValueError("synthesize_euclidean: K must be >= 2");

    rng::Engine weakness_engine(rng::derive_seed(seed, detail::kWeaknessStream));
    const auto weakness = weakness_engine.distinct_indices(static_cast<std::size_t>(N),
                                                           static_cast<std::size_t>(R));

    AnnotatorLabels out;
    out.K = K;
    out.provenance = AnnotatorProvenance::euclidean;
    out.labels.resize(R, N);
    const bool corrupt_all = std::isinf(epsilon);
    const double eps_sq = corrupt_all ? 0.0 : epsilon * epsilon;
    for (int r = 0; r < R; ++r) {
        const auto wrow = features.row(static_cast<Eigen::Index>(weakness[r]));
        for (int n = 0; n < N; ++n) {
            const double d_sq = (features.row(n) - wrow).squaredNorm();
            if (corrupt_all || d_sq < eps_sq) {
                rng::Engine engine(rng::derive_seed(seed ^ detail::kLabelStream,
                                                    static_cast<std::uint64_t>(r),
                                                    static_cast<std::uint64_t>(n)));
                out.labels(r, n) = detail::wrong_label(engine, golden[n], K);
            } else {
                out.labels(r, n) = golden[n];
            }
        }
    }
    return out;
}

/// Class-wise hammer-spammer: each annotator is exactly correct on
/// n_correct randomly chosen classes and uniformly wrong on the rest,
/// with a fresh wrong draw per sample.
inline AnnotatorLabels synthesize_hammer_spammer(const std::vector<int>& golden, int R,
                                                 int n_correct, int K, std::uint64_t seed) {
    const int N = static_cast<int>(golden.size());
    if (N == 0) throw ValueError("synthesize_hammer_spammer: empty dataset");
    if (R < 1) throw ValueError("synthesize_hammer_spammer: R must be >= 1");
    if (K < 2) throw ValueError("synthesize_hammer_spammer: K must be >= 2");
    if (n_correct < 0 || n_correct > K) {
        throw ValueError("synthesize_hammer_spammer: N_correct must lie in [0, K]");
    }

    AnnotatorLabels out;
    out.K = K;
    out.provenance = AnnotatorProvenance::hammer_spammer;
    out.labels.resize(R, N);
    for (int r = 0; r < R; ++r) {
        rng::Engine class_engine(
            rng::derive_seed(seed ^ detail::kHammerStream, static_cast<std::uint64_t>(r)));
        std::vector<bool> is_hammer(static_cast<std::size_t>(K), false);
        for (std::size_t c : class_engine.distinct_indices(static_cast<std::size_t>(K),
                                                           static_cast<std::size_t>(n_correct))) {
            is_hammer[c] = true;
        }
        for (int n = 0; n < N; ++n) {
            const int g = golden[static_cast<std::size_t>(n)];
            if (g < 0 || g >= K) {
                throw InvalidLabelError("synthesize_hammer_spammer: golden label out of range");
            }
            if (is_hammer[static_cast<std::size_t>(g)]) {
                out.labels(r, n) = g;
            } else {
                rng::Engine engine(rng::derive_seed(seed ^ detail::kLabelStream,
                                                    static_cast<std::uint64_t>(r),
                                                    static_cast<std::uint64_t>(n)));
                out.labels(r, n) = detail::wrong_label(engine, g, K);
            }
        }
    }
    return out;
}

/// Fraction of labels differing from golden, per annotator.
inline std::vector<double> corruption_rate(const AnnotatorLabels& annotators,
                                           const std::vector<int>& golden) {
    const int N = annotators.num_samples();
    if (static_cast<int>(golden.size()) != N) {
        throw DimensionError("corruption_rate: golden length != number of samples");
    }
    std::vector<double> rates(static_cast<std::size_t>(annotators.num_annotators()), 0.0);
    for (int r = 0; r < annotators.num_annotators(); ++r) {
        int wrong = 0;
        for (int n = 0; n < N; ++n) {
            if (annotators.labels(r, n) != golden[static_cast<std::size_t>(n)]) ++wrong;
        }
        rates[static_cast<std::size_t>(r)] = N > 0 ? static_cast<double>(wrong) / N : 0.0;
    }
    return rates;
}

// --- CSV interchange ---------------------------------------------------------
//
// Format: header "sample_index,annotator_id,label", then one row per
// (sample, annotator) pair, all 0-based. Duplicates and gaps are rejected.

inline void save_labels_csv(const AnnotatorLabels& annotators, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ParseError("save_labels_csv: cannot open " + path);
    os << "sample_index,annotator_id,label\n";
    for (int n = 0; n < annotators.num_samples(); ++n) {
        for (int r = 0; r < annotators.num_annotators(); ++r) {
            os << n << ',' << r << ',' << annotators.labels(r, n) << '\n';
        }
    }
    if (!os) throw ParseError("save_labels_csv: write failed for " + path);
}

inline AnnotatorLabels load_external_labels(const std::string& path, int N, int R, int K) {
    std::ifstream is(path);
    if (!is) throw ParseError("load_external_labels: cannot open " + path);

    auto fail = [&](int line, const std::string& what) {
        throw ParseError("load_external_labels: " + what + " at " + path + " line " +
                         std::to_string(line));
    };

    std::string line;
    int line_no = 1;
    if (!std::getline(is, line)) fail(1, "missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "sample_index,annotator_id,label") fail(1, "unexpected header '" + line + "'");

    AnnotatorLabels out;
    out.K = K;
    out.provenance = AnnotatorProvenance::external;
    out.labels = Eigen::MatrixXi::Constant(R, N, -1);

    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream row(line);
        long long n = -1, r = -1, y = -1;
        char c1 = 0, c2 = 0;
        if (!(row >> n >> c1 >> r >> c2 >> y) || c1 != ',' || c2 != ',' || !(row >> std::ws).eof()) {
            fail(line_no, "malformed row '" + line + "'");
        }
        if (n < 0 || n >= N) fail(line_no, "sample_index " + std::to_string(n) + " out of range");
        if (r < 0 || r >= R) fail(line_no, "annotator_id " + std::to_string(r) + " out of range");
        if (y < 0 || y >= K) fail(line_no, "label " + std::to_string(y) + " out of range");
        if (out.labels(static_cast<int>(r), static_cast<int>(n)) != -1) {
            fail(line_no, "duplicate entry for sample " + std::to_string(n) + ", annotator " +
                              std::to_string(r));
        }
        out.labels(static_cast<int>(r), static_cast<int>(n)) = static_cast<int>(y);
    }

    for (int n = 0; n < N; ++n) {
        for (int r = 0; r < R; ++r) {
            if (out.labels(r, n) == -1) {
                throw ParseError("load_external_labels: missing row for sample " +
                                 std::to_string(n) + ", annotator " + std::to_string(r) + " in " +
                                 path);
            }
        }
    }
    return out;
}

}  // namespace labelfuse
