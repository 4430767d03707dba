#include <catch2/catch_amalgamated.hpp>

#include "labelfuse/baselines.hpp"
#include "support/datasets.hpp"

using namespace labelfuse;
using testsupport::golden_annotators;
using testsupport::ring_blobs;

TEST_CASE("majority_vote_target counts labels") {
    Vec t = majority_vote_target({0, 0, 1}, 2);
    CHECK(t[0] == Catch::Approx(2.0 / 3.0));
    CHECK(t[1] == Catch::Approx(1.0 / 3.0));

    Vec unanimous = majority_vote_target({3, 3, 3, 3}, 5);
    CHECK(unanimous[3] == 1.0);
    CHECK(unanimous.sum() == 1.0);

    Vec split2 = majority_vote_target({0, 1}, 2);
    CHECK(split2[0] == 0.5);
    CHECK(split2[1] == 0.5);

    CHECK_THROWS_AS(majority_vote_target({0, 2}, 2), InvalidLabelError);
    CHECK_THROWS_AS(majority_vote_target({}, 2), ValueError);
}

TEST_CASE("majority vote equals fuse_target with uniform weights and identity confusions") {
    rng::Engine engine(8);
    for (int it = 0; it < 200; ++it) {
        const int K = 2 + static_cast<int>(engine.index(5));
        const int R = 1 + static_cast<int>(engine.index(5));
        std::vector<int> labels;
        std::vector<Vec> cleans;
        for (int r = 0; r < R; ++r) {
            const int y = static_cast<int>(engine.index(static_cast<std::size_t>(K)));
            labels.push_back(y);
            cleans.push_back(clean_label(Mat::Identity(K, K), y));
        }
        const Vec via_fusion = fuse_target(cleans, Vec::Constant(R, 1.0 / R));
        const Vec via_vote = majority_vote_target(labels, K);
        REQUIRE((via_fusion - via_vote).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("annotator_label_distribution: one-hot prediction selects a column") {
    rng::Engine engine(4);
    Mat p(3, 3);
    for (int j = 0; j < 3; ++j) {
        Vec logits(3);
        for (int i = 0; i < 3; ++i) logits[i] = engine.uniform();
        p.col(j) = softmax(logits);
    }
    for (int j = 0; j < 3; ++j) {
        const Vec q = annotator_label_distribution(p, one_hot(j, 3));
        REQUIRE((q - p.col(j)).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("mbem_posterior: consistent evidence collapses to the golden label") {
    std::vector<Mat> confusions(3, Mat::Identity(4, 4) * 0.97 + Mat::Constant(4, 4, 0.01));
    const Vec uniform = Vec::Constant(4, 0.25);
    const Vec post = mbem_posterior(uniform, confusions, {2, 2, 2});
    CHECK(post[2] > 0.99);
    CHECK(is_prob_vector(post));
}

TEST_CASE("mbem_posterior: identity confusions with R=1 reduce to the label") {
    const std::vector<Mat> identity{Mat::Identity(3, 3)};
    Vec probs(3);
    probs << 0.2, 0.5, 0.3;
    const Vec post = mbem_posterior(probs, identity, {1});
    CHECK(post[1] > 0.999999);  // self-training target equals the annotator label
}

TEST_CASE("mbem_estimate_confusions: golden posteriors and labels give near-identity") {
    auto ds = ring_blobs(40, 3, 0.2, 1);
    auto ants = golden_annotators(ds, 2);
    Mat posteriors = Mat::Zero(ds.n(), 3);
    for (int n = 0; n < ds.n(); ++n) posteriors(n, ds.golden[static_cast<std::size_t>(n)]) = 1.0;
    auto confusions = mbem_estimate_confusions(posteriors, ants, 1e-2);
    for (const Mat& p : confusions) {
        REQUIRE(stochasticity_class(p, 1e-9) != Stochasticity::not_stochastic);
        for (int j = 0; j < 3; ++j) REQUIRE(p(j, j) > 0.99);
    }
}

namespace {

TrainOptions quick_opts(std::uint64_t seed = 0) {
    TrainOptions opts;
    opts.epochs = 25;
    opts.batch_size = 32;
    opts.learning_rate = 0.05;
    opts.momentum = 0.9;
    opts.model_seed = seed;
    return opts;
}

}  // namespace

TEST_CASE("golden training solves separable blobs") {
    auto ds = ring_blobs(60, 3, 0.25, 2);
    auto parts = split(ds, 120, 0, 60, 3);
    const ModelDims dims{2, {16}, 3, 2, 2};
    auto result = train_golden(parts.train, nullptr, dims, quick_opts());
    const double acc = accuracy(predict_batch(result.params, parts.test.features),
                                parts.test.golden);
    CHECK(acc > 0.95);
    CHECK(result.selected_epoch == 24);  // no validation: last epoch
    CHECK(std::isnan(result.selected_val_accuracy));
}

TEST_CASE("majority vote with perfect annotators matches golden training") {
    auto ds = ring_blobs(60, 3, 0.25, 4);
    ds.annotators = golden_annotators(ds, 3);
    auto parts = split(ds, 120, 0, 60, 5);
    const ModelDims dims{2, {16}, 3, 3, 2};
    auto mjv = train_majority_vote(parts.train, nullptr, dims, quick_opts());
    auto gold = train_golden(parts.train, nullptr, dims, quick_opts());
    const double acc_mjv = accuracy(predict_batch(mjv.params, parts.test.features),
                                    parts.test.golden);
    const double acc_gold = accuracy(predict_batch(gold.params, parts.test.features),
                                     parts.test.golden);
    // Targets coincide exactly, so the parameter trajectories do too.
    CHECK(acc_mjv == acc_gold);
    for (std::size_t e = 0; e < mjv.history.size(); ++e) {
        REQUIRE(mjv.history[e].train_loss == gold.history[e].train_loss);
    }
}

TEST_CASE("wdn: learned weight tilts toward the reliable annotator") {
    auto ds = ring_blobs(80, 3, 0.25, 6);
    AnnotatorLabels ants;
    ants.K = 3;
    ants.provenance = AnnotatorProvenance::external;
    ants.labels.resize(2, ds.n());
    rng::Engine noise(7);
    for (int n = 0; n < ds.n(); ++n) {
        ants.labels(0, n) = ds.golden[static_cast<std::size_t>(n)];
        ants.labels(1, n) = static_cast<int>(noise.index(3));  // uniform random annotator
    }
    ds.annotators = ants;
    auto parts = split(ds, 200, 0, 40, 8);
    const ModelDims dims{2, {16}, 3, 2, 2};
    auto run = train_global_weights(parts.train, nullptr, dims, quick_opts());
    INFO("learned weights " << run.weights.transpose());
    CHECK(run.weights[0] > 0.5);
    CHECK(is_prob_vector(run.weights));
}

TEST_CASE("wdn with R=1 reduces exactly to single-annotator training") {
    auto ds = ring_blobs(50, 2, 0.3, 9);
    ds.annotators = golden_annotators(ds, 1);
    // Corrupt a chunk so the target is not trivially golden.
    for (int n = 0; n < 20; ++n) ds.annotators->labels(0, n) = 1 - ds.annotators->labels(0, n);
    auto parts = split(ds, 80, 0, 20, 10);
    const ModelDims dims{2, {8}, 2, 1, 2};
    auto wdn = train_global_weights(parts.train, nullptr, dims, quick_opts());
    auto single = train_single_annotator(parts.train, nullptr, dims, quick_opts(), 0);
    CHECK(wdn.weights[0] == 1.0);
    for (std::size_t e = 0; e < wdn.result.history.size(); ++e) {
        REQUIRE(wdn.result.history[e].train_loss == single.history[e].train_loss);
    }
}

TEST_CASE("tracereg: golden annotators give near-identity confusions") {
    auto ds = ring_blobs(60, 3, 0.25, 11);
    ds.annotators = golden_annotators(ds, 2);
    auto parts = split(ds, 120, 0, 60, 12);
    const ModelDims dims{2, {16}, 3, 2, 2};
    auto run = train_global_confusion_tracereg(parts.train, nullptr, dims, quick_opts(), 0.0);
    const double acc = accuracy(predict_batch(run.result.params, parts.test.features),
                                parts.test.golden);
    CHECK(acc > 0.9);
    for (const Mat& p : run.confusions) {
        for (int j = 0; j < 3; ++j) REQUIRE(p(j, j) > 0.5);
        REQUIRE(stochasticity_class(p, 1e-6) != Stochasticity::not_stochastic);
    }
}

TEST_CASE("tracereg: a huge trace penalty drives the trace down") {
    auto ds = ring_blobs(40, 3, 0.25, 13);
    ds.annotators = golden_annotators(ds, 2);
    auto parts = split(ds, 90, 0, 30, 14);
    const ModelDims dims{2, {8}, 3, 2, 2};
    auto mild = train_global_confusion_tracereg(parts.train, nullptr, dims, quick_opts(), 0.0);
    auto harsh = train_global_confusion_tracereg(parts.train, nullptr, dims, quick_opts(), 5.0);
    double trace_mild = 0.0, trace_harsh = 0.0;
    for (const Mat& p : mild.confusions) trace_mild += p.trace();
    for (const Mat& p : harsh.confusions) trace_harsh += p.trace();
    INFO("trace mild " << trace_mild << ", harsh " << trace_harsh);
    CHECK(trace_harsh < trace_mild);
}

TEST_CASE("mbem: perfect annotators converge to identity confusions") {
    auto ds = ring_blobs(60, 3, 0.25, 15);
    ds.annotators = golden_annotators(ds, 2);
    auto parts = split(ds, 120, 0, 60, 16);
    const ModelDims dims{2, {16}, 3, 2, 2};
    auto run = train_mbem(parts.train, nullptr, dims, quick_opts(), MbemOptions{2, 1e-2});
    for (const Mat& p : run.confusions) {
        for (int j = 0; j < 3; ++j) REQUIRE(p(j, j) > 0.9);
    }
    const double acc = accuracy(predict_batch(run.result.params, parts.test.features),
                                parts.test.golden);
    CHECK(acc > 0.9);
}

TEST_CASE("mbem: posteriors stay on the simplex with noisy annotators") {
    auto ds = ring_blobs(50, 4, 0.3, 17);
    ds.annotators = golden_annotators(ds, 3);
    rng::Engine noise(18);
    for (int n = 0; n < ds.n(); ++n) {
        if (noise.uniform() < 0.4) ds.annotators->labels(1, n) = static_cast<int>(noise.index(4));
        if (noise.uniform() < 0.6) ds.annotators->labels(2, n) = static_cast<int>(noise.index(4));
    }
    auto parts = split(ds, 160, 0, 40, 19);
    const ModelDims dims{2, {8}, 4, 3, 2};
    auto run = train_mbem(parts.train, nullptr, dims, quick_opts(), MbemOptions{3, 1e-2});

    // Recompute one E-step and check the posterior invariant directly.
    const BatchCache cache = forward_batch(run.result.params, parts.train.features);
    for (int n = 0; n < parts.train.n(); ++n) {
        const Vec probs = softmax(cache.f_logits.row(n).transpose());
        const Vec post =
            mbem_posterior(probs, run.confusions, parts.train.annotators->sample_labels(n));
        REQUIRE(is_prob_vector(post, 1e-9));
    }
}

TEST_CASE("baseline trainers insist on annotators") {
    auto ds = ring_blobs(10, 2, 0.2, 20);
    const ModelDims dims{2, {4}, 2, 1, 2};
    CHECK_THROWS_AS(train_majority_vote(ds, nullptr, dims, quick_opts()), ConfigError);
    CHECK_THROWS_AS(train_global_weights(ds, nullptr, dims, quick_opts()), ConfigError);
    ds.annotators = golden_annotators(ds, 1);
    CHECK_THROWS_AS(train_single_annotator(ds, nullptr, dims, quick_opts(), 3), ConfigError);
}
