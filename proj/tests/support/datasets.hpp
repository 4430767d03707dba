#pragma once

// Tiny deterministic datasets for fast training tests.

#include "labelfuse/data.hpp"
#include "labelfuse/rng.hpp"

namespace testsupport {

/// K Gaussian blobs on a ring in the plane, exactly class-balanced.
inline labelfuse::Dataset ring_blobs(int per_class, int num_classes, double spread,
                                     std::uint64_t seed) {
    labelfuse::Dataset ds;
    ds.K = num_classes;
    const int n = per_class * num_classes;
    ds.features.resize(n, 2);
    ds.golden.resize(static_cast<std::size_t>(n));
    labelfuse::rng::Engine engine(seed);
    const double two_pi = 6.283185307179586476925287;
    for (int i = 0; i < n; ++i) {
        const int k = i % num_classes;
        const double angle = two_pi * k / num_classes;
        ds.features(i, 0) = 2.0 * std::cos(angle) + spread * engine.normal();
        ds.features(i, 1) = 2.0 * std::sin(angle) + spread * engine.normal();
        ds.golden[static_cast<std::size_t>(i)] = k;
    }
    return ds;
}

/// Golden labels as one annotator matrix row.
inline labelfuse::AnnotatorLabels golden_annotators(const labelfuse::Dataset& ds, int copies) {
    labelfuse::AnnotatorLabels ants;
    ants.K = ds.K;
    ants.provenance = labelfuse::AnnotatorProvenance::external;
    ants.labels.resize(copies, ds.n());
    for (int r = 0; r < copies; ++r) {
        for (int n = 0; n < ds.n(); ++n) {
            ants.labels(r, n) = ds.golden[static_cast<std::size_t>(n)];
        }
    }
    return ants;
}

}  // namespace testsupport
