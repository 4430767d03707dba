#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "labelfuse/annotators.hpp"
#include "labelfuse/linalg.hpp"
#include "labelfuse/rng.hpp"

namespace labelfuse {

enum class Split { train, val, test, all };

struct Dataset {
    Mat features;                               // N x D
    std::vector<int> golden;                    // empty when unknown
    std::optional<AnnotatorLabels> annotators;  // R x N when present
    int K = 0;
    Split split_tag = Split::all;

    int n() const { return static_cast<int>(features.rows()); }
    int dim() const { return static_cast<int>(features.cols()); }
    bool has_golden() const { return !golden.empty(); }

    void validate() const {
        if (K < 2) throw ValueError("Dataset: K must be >= 2");
        if (!features.allFinite()) throw NumericError("Dataset: non-finite features");
        if (has_golden()) {
            if (static_cast<int>(golden.size()) != n()) {
                throw DimensionError("Dataset: golden length != N");
            }
            for (int y : golden) {
                if (y < 0 || y >= K) throw InvalidLabelError("Dataset: golden label out of range");
            }
        }
        if (annotators) {
            if (annotators->num_samples() != n() || annotators->K != K) {
                throw DimensionError("Dataset: annotator labels do not match dataset shape");
            }
            annotators->validate();
        }
    }
};

// --- TwoMoon -----------------------------------------------------------------
//
// Upper branch (cos t, sin t) carries golden label 1, lower branch
// (1 - cos t, 0.5 - sin t) carries golden label 0, t uniform in [0, pi],
// plus isotropic Gaussian noise. Two rule-based annotators view the plane
// from the vertical and horizontal directions:
//   AnT-1: label 1 iff x < 0
//   AnT-2: label 1 iff y > y_threshold

inline constexpr double kTwoMoonDefaultNoise = 0.1;
inline constexpr double kTwoMoonDefaultThreshold = 0.25;

/// The annotator labeling rules, evaluated at an arbitrary plane point
/// (also used to index confusion-diagonal heatmaps).
struct TwoMoonRules {
    double y_threshold = kTwoMoonDefaultThreshold;

    int label(int annotator, double x, double y) const {
        if (annotator == 0) return x < 0.0 ? 1 : 0;
        if (annotator == 1) return y > y_threshold ? 1 : 0;
        throw ValueError("TwoMoonRules: annotator index must be 0 or 1");
    }
};

inline Dataset generate_two_moon(int n, double noise_sigma, std::uint64_t seed,
                                 double y_threshold = kTwoMoonDefaultThreshold) {
    if (n < 2 || n % 2 != 0) throw ValueError("generate_two_moon: n must be even and >= 2");
    if (noise_sigma < 0.0) throw ValueError("generate_two_moon: noise_sigma must be >= 0");

    const double pi = 3.14159265358979323846;
    rng::Engine engine(rng::derive_seed(seed, 0x6d6f6f6eULL));

    Dataset ds;
    ds.K = 2;
    ds.features.resize(n, 2);
    ds.golden.resize(static_cast<std::size_t>(n));

    const int half = n / 2;
    for (int i = 0; i < n; ++i) {
        const bool upper = i < half;
        const double t = pi * engine.uniform();
        double x = upper ? std::cos(t) : 1.0 - std::cos(t);
        double y = upper ? std::sin(t) : 0.5 - std::sin(t);
        x += noise_sigma * engine.normal();
        y += noise_sigma * engine.normal();
        ds.features(i, 0) = x;
        ds.features(i, 1) = y;
        ds.golden[static_cast<std::size_t>(i)] = upper ? 1 : 0;
    }

    const TwoMoonRules rules{y_threshold};
    AnnotatorLabels ants;
    ants.K = 2;
    ants.provenance = AnnotatorProvenance::native;
    ants.labels.resize(2, n);
    for (int i = 0; i < n; ++i) {
        ants.labels(0, i) = rules.label(0, ds.features(i, 0), ds.features(i, 1));
        ants.labels(1, i) = rules.label(1, ds.features(i, 0), ds.features(i, 1));
    }
    ds.annotators = std::move(ants);
    return ds;
}

/// Plane dump for external plotting: x,y,golden,ant1,ant2.
inline void write_two_moon_csv(const Dataset& ds, const std::string& path) {
    if (ds.dim() != 2 || !ds.annotators || ds.annotators->num_annotators() != 2) {
        throw ValueError("write_two_moon_csv: expects a 2-D dataset with 2 annotators");
    }
    std::ofstream os(path);
    if (!os) throw ParseError("write_two_moon_csv: cannot open " + path);
    os << "x,y,golden,ant1,ant2\n" << std::setprecision(17);
    for (int i = 0; i < ds.n(); ++i) {
        os << ds.features(i, 0) << ',' << ds.features(i, 1) << ','
           << (ds.has_golden() ? ds.golden[static_cast<std::size_t>(i)] : -1) << ','
           << ds.annotators->labels(0, i) << ',' << ds.annotators->labels(1, i) << '\n';
    }
    if (!os) throw ParseError("write_two_moon_csv: write failed for " + path);
}

// --- IDX files ---------------------------------------------------------------

namespace detail {

inline std::uint32_t read_be32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

inline void write_be32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::string hex32(std::uint32_t v) {
    std::ostringstream ss;
    ss << "0x" << std::hex << std::setw(8) << std::setfill('0') << v;
    return ss.str();
}

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803u;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801u;

}  // namespace detail

inline void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels,
                             int n, int rows, int cols) {
    if (pixels.size() != static_cast<std::size_t>(n) * rows * cols) {
        throw DimensionError("write_idx_images: pixel count != n*rows*cols");
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ParseError("write_idx_images: cannot open " + path);
    detail::write_be32(os, detail::kIdxImagesMagic);
    detail::write_be32(os, static_cast<std::uint32_t>(n));
    detail::write_be32(os, static_cast<std::uint32_t>(rows));
    detail::write_be32(os, static_cast<std::uint32_t>(cols));
    os.write(reinterpret_cast<const char*>(pixels.data()),
             static_cast<std::streamsize>(pixels.size()));
    if (!os) throw ParseError("write_idx_images: write failed for " + path);
}

inline void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ParseError("write_idx_labels: cannot open " + path);
    detail::write_be32(os, detail::kIdxLabelsMagic);
    detail::write_be32(os, static_cast<std::uint32_t>(labels.size()));
    for (int y : labels) {
        if (y < 0 || y > 255) throw InvalidLabelError("write_idx_labels: label out of byte range");
        const unsigned char b = static_cast<unsigned char>(y);
        os.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!os) throw ParseError("write_idx_labels: write failed for " + path);
}

/// Parses an IDX image/label file pair; pixels are scaled to [0, 1].
inline Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw ParseError("load_mnist_idx: cannot open " + images_path);
    const std::uint32_t img_magic = detail::read_be32(imgs);
    if (!imgs) throw ParseError("load_mnist_idx: truncated header in " + images_path);
    if (img_magic != detail::kIdxImagesMagic) {
        throw ParseError("load_mnist_idx: bad image magic " + detail::hex32(img_magic) + " in " +
                         images_path);
    }
    const std::uint32_t n = detail::read_be32(imgs);
    const std::uint32_t rows = detail::read_be32(imgs);
    const std::uint32_t cols = detail::read_be32(imgs);
    if (!imgs) throw ParseError("load_mnist_idx: truncated header in " + images_path);
    const std::size_t dim = static_cast<std::size_t>(rows) * cols;
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(n) * dim);
    imgs.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (static_cast<std::size_t>(imgs.gcount()) != pixels.size()) {
        throw ParseError("load_mnist_idx: truncated pixel data in " + images_path);
    }

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw ParseError("load_mnist_idx: cannot open " + labels_path);
    const std::uint32_t lab_magic = detail::read_be32(labs);
    if (!labs) throw ParseError("load_mnist_idx: truncated header in " + labels_path);
    if (lab_magic != detail::kIdxLabelsMagic) {
        throw ParseError("load_mnist_idx: bad label magic " + detail::hex32(lab_magic) + " in " +
                         labels_path);
    }
    const std::uint32_t n_labels = detail::read_be32(labs);
    if (n_labels != n) {
        throw ParseError("load_mnist_idx: image count " + std::to_string(n) +
                         " != label count " + std::to_string(n_labels));
    }
    std::vector<std::uint8_t> raw_labels(n);
    labs.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(labs.gcount()) != raw_labels.size()) {
        throw ParseError("load_mnist_idx: truncated label data in " + labels_path);
    }

    Dataset ds;
    ds.K = 10;
    ds.features.resize(n, static_cast<Eigen::Index>(dim));
    ds.golden.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < dim; ++d) {
            ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) =
                pixels[i * dim + d] / 255.0;
        }
        ds.golden[i] = raw_labels[i];
    }
    ds.validate();
    return ds;
}

/// Quantizes features (assumed in [0, 1]) to bytes and writes the IDX pair.
inline void save_dataset_idx(const Dataset& ds, const std::string& images_path,
                             const std::string& labels_path, int rows = 0, int cols = 0) {
    if (rows == 0 && cols == 0) {
        const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(ds.dim()))));
        if (side * side != ds.dim()) {
            throw ValueError("save_dataset_idx: feature dim is not square; pass rows/cols");
        }
        rows = cols = side;
    }
    if (rows * cols != ds.dim()) throw DimensionError("save_dataset_idx: rows*cols != dim");
    if (!ds.has_golden()) throw ValueError("save_dataset_idx: dataset has no golden labels");
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(ds.n()) * ds.dim());
    for (int i = 0; i < ds.n(); ++i) {
        for (int d = 0; d < ds.dim(); ++d) {
            const double v = std::clamp(ds.features(i, d), 0.0, 1.0);
            pixels[static_cast<std::size_t>(i) * ds.dim() + d] =
                static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    }
    write_idx_images(images_path, pixels, ds.n(), rows, cols);
    write_idx_labels(labels_path, ds.golden);
}

// --- synthetic image-like dataset ---------------------------------------------
//
// A 2-D latent point is drawn uniformly in the unit square, labeled by the
// nearest of K seeded latent centers, and embedded into D dimensions with
// random Fourier features (cosines of random projections), so Euclidean
// distance in feature space decays smoothly with latent distance. Classes
// are balanced by per-class quotas (latent draws for full classes are
// rejected). Stands in for image data when no real corpus is on disk.

struct EmbeddedClustersOptions {
    double bandwidth = 2.0;    // random projection scale; larger = faster decay
    double pixel_noise = 0.02; // additive feature noise before clipping to [0,1]
};

inline Dataset generate_embedded_clusters(int n, int num_classes, int dim, std::uint64_t seed,
                                          const EmbeddedClustersOptions& opts = {}) {
    if (n < 1) throw ValueError("generate_embedded_clusters: n must be >= 1");
    if (num_classes < 2) throw ValueError("generate_embedded_clusters: K must be >= 2");
    if (dim < 2) throw ValueError("generate_embedded_clusters: dim must be >= 2");

    const double two_pi = 6.283185307179586476925287;
    rng::Engine center_engine(rng::derive_seed(seed, 0x63747273ULL));
    std::vector<std::pair<double, double>> centers(static_cast<std::size_t>(num_classes));
    for (auto& c : centers) {
        c = {0.05 + 0.9 * center_engine.uniform(), 0.05 + 0.9 * center_engine.uniform()};
    }

    rng::Engine embed_engine(rng::derive_seed(seed, 0x656d6264ULL));
    std::vector<double> wx(static_cast<std::size_t>(dim)), wy(wx), phase(wx);
    for (int d = 0; d < dim; ++d) {
        wx[static_cast<std::size_t>(d)] = opts.bandwidth * embed_engine.normal();
        wy[static_cast<std::size_t>(d)] = opts.bandwidth * embed_engine.normal();
        phase[static_cast<std::size_t>(d)] = two_pi * embed_engine.uniform();
    }

    std::vector<int> quota(static_cast<std::size_t>(num_classes), n / num_classes);
    for (int k = 0; k < n % num_classes; ++k) ++quota[static_cast<std::size_t>(k)];

    rng::Engine sample_engine(rng::derive_seed(seed, 0x73616d70ULL));
    Dataset ds;
    ds.K = num_classes;
    ds.features.resize(n, dim);
    ds.golden.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double zx = 0.0, zy = 0.0;
        int label = -1;
        while (label < 0) {
            zx = sample_engine.uniform();
            zy = sample_engine.uniform();
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int k = 0; k < num_classes; ++k) {
                const auto& c = centers[static_cast<std::size_t>(k)];
                const double d2 =
                    (zx - c.first) * (zx - c.first) + (zy - c.second) * (zy - c.second);
                if (d2 < best_d) {
                    best_d = d2;
                    best = k;
                }
            }
            if (quota[static_cast<std::size_t>(best)] > 0) {
                --quota[static_cast<std::size_t>(best)];
                label = best;
            }
        }
        ds.golden[static_cast<std::size_t>(i)] = label;
        for (int d = 0; d < dim; ++d) {
            const std::size_t sd = static_cast<std::size_t>(d);
            double v = 0.5 + 0.5 * std::cos(wx[sd] * zx + wy[sd] * zy + phase[sd]);
            v += opts.pixel_noise * sample_engine.normal();
            ds.features(i, d) = std::clamp(v, 0.0, 1.0);
        }
    }
    return ds;
}

// --- splits and standardization ------------------------------------------------

struct SplitResult {
    Dataset train;
    Dataset val;
    Dataset test;
};

namespace detail {

inline Dataset take_subset(const Dataset& ds, const std::vector<std::size_t>& order,
                           std::size_t begin, std::size_t count, Split tag) {
    Dataset out;
    out.K = ds.K;
    out.split_tag = tag;
    out.features.resize(static_cast<Eigen::Index>(count), ds.features.cols());
    if (ds.has_golden()) out.golden.resize(count);
    if (ds.annotators) {
        AnnotatorLabels sub;
        sub.K = ds.annotators->K;
        sub.provenance = ds.annotators->provenance;
        sub.labels.resize(ds.annotators->num_annotators(), static_cast<Eigen::Index>(count));
        out.annotators = std::move(sub);
    }
    for (std::size_t i = 0; i < count; ++i) {
        const auto src = static_cast<Eigen::Index>(order[begin + i]);
        out.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(src);
        if (ds.has_golden()) out.golden[i] = ds.golden[static_cast<std::size_t>(src)];
        if (ds.annotators) {
            out.annotators->labels.col(static_cast<Eigen::Index>(i)) =
                ds.annotators->labels.col(src);
        }
    }
    return out;
}

}  // namespace detail

/// Seeded permutation partition; annotator labels, when present, follow
/// their samples. Golden labels are kept in every split (validation-based
/// selection needs them).
inline SplitResult split(const Dataset& ds, int n_train, int n_val, int n_test,
                         std::uint64_t seed) {
    if (n_train < 0 || n_val < 0 || n_test < 0) throw ValueError("split: negative split size");
    const std::size_t total =
        static_cast<std::size_t>(n_train) + static_cast<std::size_t>(n_val) +
        static_cast<std::size_t>(n_test);
    if (total > static_cast<std::size_t>(ds.n())) {
        throw ValueError("split: requested " + std::to_string(total) + " samples from " +
                         std::to_string(ds.n()));
    }
    std::vector<std::size_t> order(static_cast<std::size_t>(ds.n()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng::Engine engine(rng::derive_seed(seed, 0x73706c74ULL));
    engine.shuffle(order);

    SplitResult out;
    out.train = detail::take_subset(ds, order, 0, static_cast<std::size_t>(n_train), Split::train);
    out.val = detail::take_subset(ds, order, static_cast<std::size_t>(n_train),
                                  static_cast<std::size_t>(n_val), Split::val);
    out.test = detail::take_subset(ds, order,
                                   static_cast<std::size_t>(n_train) + static_cast<std::size_t>(n_val),
                                   static_cast<std::size_t>(n_test), Split::test);
    return out;
}

struct FeatureStats {
    Vec mean;
    Vec stddev;  // floored at 1e-6
};

inline FeatureStats fit_standardizer(const Dataset& train) {
    if (train.n() == 0) throw ValueError("fit_standardizer: empty training split");
    FeatureStats stats;
    stats.mean = train.features.colwise().mean();
    Mat centered = train.features.rowwise() - stats.mean.transpose();
    stats.stddev = (centered.array().square().colwise().mean()).sqrt().transpose();
    stats.stddev = stats.stddev.cwiseMax(1e-6);
    return stats;
}

inline void apply_standardizer(const FeatureStats& stats, Dataset& ds) {
    if (stats.mean.size() != ds.features.cols()) {
        throw DimensionError("apply_standardizer: feature dimension mismatch");
    }
    ds.features = (ds.features.rowwise() - stats.mean.transpose()).array().rowwise() /
                  stats.stddev.transpose().array();
}

}  // namespace labelfuse
