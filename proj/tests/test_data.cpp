#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "labelfuse/data.hpp"

using namespace labelfuse;

TEST_CASE("two moon: deterministic, balanced, correctly labeled") {
    auto a = generate_two_moon(2000, 0.1, 4);
    auto b = generate_two_moon(2000, 0.1, 4);
    REQUIRE(a.features == b.features);
    REQUIRE(a.golden == b.golden);
    REQUIRE(a.annotators->labels == b.annotators->labels);

    int upper = 0;
    for (int y : a.golden) upper += y;
    CHECK(upper == 1000);

    // Annotator rules hold pointwise by construction.
    const TwoMoonRules rules{};
    for (int i = 0; i < a.n(); ++i) {
        REQUIRE(a.annotators->labels(0, i) == rules.label(0, a.features(i, 0), a.features(i, 1)));
        REQUIRE(a.annotators->labels(1, i) == rules.label(1, a.features(i, 0), a.features(i, 1)));
    }
}

TEST_CASE("two moon: noiseless branch endpoints follow the geometry") {
    auto ds = generate_two_moon(4000, 0.0, 9);
    const TwoMoonRules rules{};
    for (int i = 0; i < ds.n(); ++i) {
        const double x = ds.features(i, 0);
        const double y = ds.features(i, 1);
        const int golden = ds.golden[static_cast<std::size_t>(i)];
        if (golden == 1) {
            // Upper branch: on the unit circle, y >= 0.
            CHECK(std::abs(x * x + y * y - 1.0) < 1e-12);
            CHECK(y >= -1e-12);
        } else {
            // Lower branch: on a unit circle shifted to (1, 0.5), y <= 0.5.
            const double cx = x - 1.0, cy = y - 0.5;
            CHECK(std::abs(cx * cx + cy * cy - 1.0) < 1e-12);
            CHECK(y <= 0.5 + 1e-12);
        }
    }
    // Sample points from the spec geometry: (-1, 0) is the upper branch end.
    CHECK(rules.label(0, -1.0, 0.0) == 1);  // AnT-1 correct there (golden 1)
    CHECK(rules.label(1, -1.0, 0.0) == 0);  // AnT-2 wrong there
    // (1, -0.5) is the lower branch midpoint, golden 0.
    CHECK(rules.label(0, 1.0, -0.5) == 0);  // AnT-1 correct
    CHECK(rules.label(1, 1.0, -0.5) == 0);  // AnT-2 correct
}

TEST_CASE("two moon: annotator agreement sits in the paper regime") {
    auto ds = generate_two_moon(20000, kTwoMoonDefaultNoise, 0);
    auto rates = corruption_rate(*ds.annotators, ds.golden);
    const double agree1 = 1.0 - rates[0];
    const double agree2 = 1.0 - rates[1];
    INFO("AnT-1 agreement " << agree1 << ", AnT-2 agreement " << agree2);
    CHECK(agree1 >= 0.60);
    CHECK(agree1 <= 0.75);
    CHECK(agree2 >= 0.78);
    CHECK(agree2 <= 0.90);
    // Frozen regression values counted at generation time for seed 0.
    CHECK(agree1 == Catch::Approx(0.71990).margin(1e-9));
    CHECK(agree2 == Catch::Approx(0.83970).margin(1e-9));
}

TEST_CASE("two moon: invalid arguments") {
    CHECK_THROWS_AS(generate_two_moon(999, 0.1, 0), ValueError);
    CHECK_THROWS_AS(generate_two_moon(100, -0.1, 0), ValueError);
}

TEST_CASE("two moon CSV export") {
    auto ds = generate_two_moon(50, 0.1, 2);
    const auto path = std::filesystem::temp_directory_path() / "labelfuse_twomoon.csv";
    write_two_moon_csv(ds, path.string());
    std::ifstream is(path);
    std::string header;
    std::getline(is, header);
    CHECK(header == "x,y,golden,ant1,ant2");
    int rows = 0;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == 50);
    std::filesystem::remove(path);
}

TEST_CASE("idx round trip is bit exact") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto img_path = (dir / "labelfuse_idx_images.bin").string();
    const auto lab_path = (dir / "labelfuse_idx_labels.bin").string();

    std::vector<std::uint8_t> pixels;
    std::vector<int> labels;
    rng::Engine engine(3);
    const int n = 7, rows = 3, cols = 5;
    for (int i = 0; i < n * rows * cols; ++i) {
        pixels.push_back(static_cast<std::uint8_t>(engine.index(256)));
    }
    for (int i = 0; i < n; ++i) labels.push_back(static_cast<int>(engine.index(10)));

    write_idx_images(img_path, pixels, n, rows, cols);
    write_idx_labels(lab_path, labels);
    auto ds = load_mnist_idx(img_path, lab_path);
    REQUIRE(ds.n() == n);
    REQUIRE(ds.dim() == rows * cols);
    for (int i = 0; i < n; ++i) {
        REQUIRE(ds.golden[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(i)]);
        for (int d = 0; d < rows * cols; ++d) {
            const auto byte = static_cast<std::uint8_t>(
                std::lround(ds.features(i, d) * 255.0));
            REQUIRE(byte == pixels[static_cast<std::size_t>(i * rows * cols + d)]);
        }
    }
    std::filesystem::remove(img_path);
    std::filesystem::remove(lab_path);
}

TEST_CASE("idx loader rejects malformed files") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto img_path = (dir / "labelfuse_idx_bad_images.bin").string();
    const auto lab_path = (dir / "labelfuse_idx_bad_labels.bin").string();

    write_idx_images(img_path, std::vector<std::uint8_t>(2 * 4, 0), 2, 2, 2);
    write_idx_labels(lab_path, {1, 2});

    SECTION("wrong magic names the observed value") {
        const auto bad = (dir / "labelfuse_idx_magic.bin").string();
        std::ofstream os(bad, std::ios::binary);
        const char bytes[4] = {0, 0, 8, 4};  // 0x00000804
        os.write(bytes, 4);
        os.close();
        try {
            load_mnist_idx(bad, lab_path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("0x00000804") != std::string::npos);
        }
        std::filesystem::remove(bad);
    }

    SECTION("count mismatch") {
        const auto extra = (dir / "labelfuse_idx_extra.bin").string();
        write_idx_labels(extra, {1, 2, 3});
        try {
            load_mnist_idx(img_path, extra);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("count") != std::string::npos);
        }
        std::filesystem::remove(extra);
    }

    SECTION("truncated pixels") {
        const auto trunc = (dir / "labelfuse_idx_trunc.bin").string();
        std::ifstream is(img_path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(is)),
                                std::istreambuf_iterator<char>());
        bytes.resize(bytes.size() - 3);
        std::ofstream os(trunc, std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        os.close();
        CHECK_THROWS_AS(load_mnist_idx(trunc, lab_path), ParseError);
        std::filesystem::remove(trunc);
    }

    std::filesystem::remove(img_path);
    std::filesystem::remove(lab_path);
}

TEST_CASE("split partitions without overlap and carries annotators") {
    auto ds = generate_two_moon(1000, 0.1, 5);
    auto parts = split(ds, 600, 150, 250, 11);
    CHECK(parts.train.n() == 600);
    CHECK(parts.val.n() == 150);
    CHECK(parts.test.n() == 250);
    CHECK(parts.train.split_tag == Split::train);
    CHECK(parts.val.split_tag == Split::val);
    CHECK(parts.test.split_tag == Split::test);

    // Feature rows must form a disjoint cover: collect (x, y) pairs.
    std::set<std::pair<double, double>> seen;
    for (const Dataset* part : {&parts.train, &parts.val, &parts.test}) {
        for (int i = 0; i < part->n(); ++i) {
            REQUIRE(seen.insert({part->features(i, 0), part->features(i, 1)}).second);
        }
    }
    CHECK(seen.size() == 1000);

    // Annotator labels still match their samples' geometry.
    const TwoMoonRules rules{};
    for (int i = 0; i < parts.val.n(); ++i) {
        REQUIRE(parts.val.annotators->labels(0, i) ==
                rules.label(0, parts.val.features(i, 0), parts.val.features(i, 1)));
    }

    auto again = split(ds, 600, 150, 250, 11);
    CHECK(again.train.features == parts.train.features);

    CHECK_THROWS_AS(split(ds, 900, 150, 250, 11), ValueError);
}

TEST_CASE("standardize: train stats, floor, idempotence") {
    auto ds = generate_two_moon(500, 0.1, 6);
    // Append a constant feature column.
    Mat features(ds.n(), 3);
    features.leftCols(2) = ds.features;
    features.col(2).setConstant(4.2);
    ds.features = features;

    auto parts = split(ds, 400, 0, 100, 1);
    auto stats = fit_standardizer(parts.train);
    CHECK(stats.stddev[2] == 1e-6);

    apply_standardizer(stats, parts.train);
    apply_standardizer(stats, parts.test);
    CHECK(std::abs(parts.train.features.col(0).mean()) < 1e-9);
    CHECK(std::abs(parts.train.features.col(1).mean()) < 1e-9);
    // Exact zero is unattainable: 4.2 is not representable, and the floored
    // 1e-6 divisor amplifies the centering dust.
    CHECK(parts.train.features.col(2).cwiseAbs().maxCoeff() < 1e-6);

    // Re-fitting on the standardized split and applying again is a no-op
    // (the floored constant column only holds to dust / 1e-6 precision).
    auto stats2 = fit_standardizer(parts.train);
    Mat before = parts.train.features;
    apply_standardizer(stats2, parts.train);
    CHECK((parts.train.features.leftCols(2) - before.leftCols(2)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((parts.train.features.col(2) - before.col(2)).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("embedded clusters: deterministic, bounded, learnable structure") {
    auto a = generate_embedded_clusters(500, 10, 64, 3);
    auto b = generate_embedded_clusters(500, 10, 64, 3);
    REQUIRE(a.features == b.features);
    REQUIRE(a.golden == b.golden);

    CHECK(a.features.minCoeff() >= 0.0);
    CHECK(a.features.maxCoeff() <= 1.0);
    std::set<int> classes(a.golden.begin(), a.golden.end());
    CHECK(classes.size() == 10);

    // Feature distance grows with label disagreement on average: same-class
    // pairs should be closer than cross-class pairs.
    double same = 0.0, cross = 0.0;
    int n_same = 0, n_cross = 0;
    for (int i = 0; i < 200; ++i) {
        for (int j = i + 1; j < 200; ++j) {
            const double d = (a.features.row(i) - a.features.row(j)).norm();
            if (a.golden[static_cast<std::size_t>(i)] == a.golden[static_cast<std::size_t>(j)]) {
                same += d;
                ++n_same;
            } else {
                cross += d;
                ++n_cross;
            }
        }
    }
    CHECK(same / n_same < cross / n_cross);
}
