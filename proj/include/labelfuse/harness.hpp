#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "labelfuse/baselines.hpp"
#include "labelfuse/train.hpp"

// Config-driven experiment orchestration: dataset construction, annotator
// synthesis, method dispatch, validation-based selection, metrics, and
// CSV/heatmap artifact export.

namespace labelfuse {

enum class Method { ours, mjv, wdn, tracereg, mbem, single_annotator, golden };

struct MethodSpec {
    Method method = Method::ours;
    int single_index = 0;  // 0-based annotator, single_annotator only
};

inline MethodSpec parse_method(const std::string& name) {
    if (name == "ours") return {Method::ours, 0};
    if (name == "mjv") return {Method::mjv, 0};
    if (name == "wdn") return {Method::wdn, 0};
    if (name == "tracereg") return {Method::tracereg, 0};
    if (name == "mbem") return {Method::mbem, 0};
    if (name == "golden") return {Method::golden, 0};
    if (name.rfind("single:", 0) == 0) {
        const std::string idx = name.substr(7);
        try {
            const int r = std::stoi(idx);
            if (r < 1) throw ConfigError("method single:<r> needs r >= 1");
            return {Method::single_annotator, r - 1};
        } catch (const std::invalid_argument&) {
            throw ConfigError("method single:<r> needs an integer index, got '" + idx + "'");
        }
    }
    throw ConfigError("unknown method '" + name + "'");
}

inline FusionMode parse_mode(const std::string& name) {
    if (name == "full") return FusionMode::full;
    if (name == "weights_only") return FusionMode::weights_only;
    if (name == "confusion_only") return FusionMode::confusion_only;
    throw ConfigError("unknown mode '" + name + "'");
}

struct ExperimentConfig {
    // dataset
    std::string dataset = "twomoon";  // twomoon | mnist
    int twomoon_n = 20000;
    double twomoon_noise = kTwoMoonDefaultNoise;
    double twomoon_y_threshold = kTwoMoonDefaultThreshold;
    std::string mnist_train_images;
    std::string mnist_train_labels;
    std::string mnist_test_images;  // optional; test carved from train file if empty
    std::string mnist_test_labels;
    int n_train = 16000;
    int n_val = 0;
    int n_test = 4000;
    bool standardize = true;

    // annotators
    std::string annotator_source = "native";  // native | euclidean | hammer_spammer | external
    int annotators = 2;
    double epsilon = 0.0;
    int n_correct = 3;
    std::string external_labels;

    // method
    std::string method = "ours";
    std::string mode = "full";

    // model + optimization
    std::vector<int> hidden = {32, 32};
    int basis_size = 2;  // M
    double lambda = 1.0;
    bool include_identity = true;
    std::string kl_direction =
        kDefaultKlDirection == KlDirection::target_first ? "target_first" : "prediction_first";
    double learning_rate = 0.01;
    double momentum = 0.9;
    int batch_size = 64;
    int epochs = 30;
    int em_rounds = 3;
    double mbem_smoothing = 1e-2;
    double trace_lambda = 0.01;

    // seeds
    std::uint64_t data_seed = 0;
    std::uint64_t model_seed = 0;
    std::uint64_t synthesis_seed = 0;

    // artifacts
    std::string output_dir;  // empty: keep everything in memory
    bool save_model = true;
    bool export_heatmaps = false;
    double heatmap_x_lo = -1.5, heatmap_x_hi = 2.5;
    double heatmap_y_lo = -1.0, heatmap_y_hi = 1.5;
    int heatmap_resolution = 60;

    int num_classes() const {
        if (dataset == "twomoon") return 2;
        if (dataset == "mnist") return 10;
        throw ConfigError("unknown dataset '" + dataset + "'");
    }

    void validate() const {
        const int K = num_classes();  // also validates the dataset name
        const MethodSpec spec = parse_method(method);
        const FusionMode fusion_mode = parse_mode(mode);
        if (fusion_mode != FusionMode::full && spec.method != Method::ours) {
            throw ConfigError("mode '" + mode + "' is only valid for method 'ours'");
        }
        if (fusion_mode == FusionMode::weights_only && !include_identity) {
            throw ConfigError("weights_only mode requires include_identity");
        }
        if (spec.method == Method::ours && basis_size < 1) {
            throw ConfigError("method 'ours' requires basis_size >= 1");
        }
        if (annotators < 1) throw ConfigError("annotators must be >= 1");
        if (spec.method == Method::single_annotator && spec.single_index >= annotators) {
            throw ConfigError("single:<r> index exceeds annotator count");
        }
        if (annotator_source == "native") {
            if (dataset != "twomoon") {
                throw ConfigError("annotator_source 'native' requires the twomoon dataset");
            }
            if (annotators != 2) throw ConfigError("twomoon has exactly 2 native annotators");
        } else if (annotator_source == "euclidean") {
            if (epsilon < 0.0) throw ConfigError("epsilon must be >= 0");
        } else if (annotator_source == "hammer_spammer") {
            if (n_correct < 0 || n_correct > K) {
                throw ConfigError("n_correct must lie in [0, K]");
            }
        } else if (annotator_source == "external") {
            if (external_labels.empty()) throw ConfigError("external_labels path is empty");
        } else {
            throw ConfigError("unknown annotator_source '" + annotator_source + "'");
        }
        if (dataset == "twomoon" && (twomoon_n < 2 || twomoon_n % 2 != 0)) {
            throw ConfigError("twomoon_n must be even and >= 2");
        }
        if (dataset == "mnist" && (mnist_train_images.empty() || mnist_train_labels.empty())) {
            throw ConfigError("mnist requires train image/label paths");
        }
        if (n_train < 1) throw ConfigError("n_train must be >= 1");
        if (n_val < 0 || n_test < 1) throw ConfigError("need n_val >= 0 and n_test >= 1");
        if (kl_direction != "target_first" && kl_direction != "prediction_first") {
            throw ConfigError("kl_direction must be target_first or prediction_first");
        }
        if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
        if (trace_lambda < 0.0) throw ConfigError("trace_lambda must be >= 0");
        if (em_rounds < 1) throw ConfigError("em_rounds must be >= 1");
        TrainOptions probe{epochs, batch_size, learning_rate, momentum, model_seed,
                           include_identity, fusion_mode};
        probe.validate();
    }
};

// --- config JSON -------------------------------------------------------------

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "dataset") c.dataset = value.get<std::string>();
            else if (key == "twomoon_n") c.twomoon_n = value.get<int>();
            else if (key == "twomoon_noise") c.twomoon_noise = value.get<double>();
            else if (key == "twomoon_y_threshold") c.twomoon_y_threshold = value.get<double>();
            else if (key == "mnist_train_images") c.mnist_train_images = value.get<std::string>();
            else if (key == "mnist_train_labels") c.mnist_train_labels = value.get<std::string>();
            else if (key == "mnist_test_images") c.mnist_test_images = value.get<std::string>();
            else if (key == "mnist_test_labels") c.mnist_test_labels = value.get<std::string>();
            else if (key == "n_train") c.n_train = value.get<int>();
            else if (key == "n_val") c.n_val = value.get<int>();
            else if (key == "n_test") c.n_test = value.get<int>();
            else if (key == "standardize") c.standardize = value.get<bool>();
            else if (key == "annotator_source") c.annotator_source = value.get<std::string>();
            else if (key == "annotators") c.annotators = value.get<int>();
            else if (key == "epsilon") c.epsilon = value.get<double>();
            else if (key == "n_correct") c.n_correct = value.get<int>();
            else if (key == "external_labels") c.external_labels = value.get<std::string>();
            else if (key == "method") c.method = value.get<std::string>();
            else if (key == "mode") c.mode = value.get<std::string>();
            else if (key == "hidden") c.hidden = value.get<std::vector<int>>();
            else if (key == "basis_size") c.basis_size = value.get<int>();
            else if (key == "lambda") c.lambda = value.get<double>();
            else if (key == "include_identity") c.include_identity = value.get<bool>();
            else if (key == "kl_direction") c.kl_direction = value.get<std::string>();
            else if (key == "learning_rate") c.learning_rate = value.get<double>();
            else if (key == "momentum") c.momentum = value.get<double>();
            else if (key == "batch_size") c.batch_size = value.get<int>();
            else if (key == "epochs") c.epochs = value.get<int>();
            else if (key == "em_rounds") c.em_rounds = value.get<int>();
            else if (key == "mbem_smoothing") c.mbem_smoothing = value.get<double>();
            else if (key == "trace_lambda") c.trace_lambda = value.get<double>();
            else if (key == "data_seed") c.data_seed = value.get<std::uint64_t>();
            else if (key == "model_seed") c.model_seed = value.get<std::uint64_t>();
            else if (key == "synthesis_seed") c.synthesis_seed = value.get<std::uint64_t>();
            else if (key == "output_dir") c.output_dir = value.get<std::string>();
            else if (key == "save_model") c.save_model = value.get<bool>();
            else if (key == "export_heatmaps") c.export_heatmaps = value.get<bool>();
            else if (key == "heatmap_x_lo") c.heatmap_x_lo = value.get<double>();
            else if (key == "heatmap_x_hi") c.heatmap_x_hi = value.get<double>();
            else if (key == "heatmap_y_lo") c.heatmap_y_lo = value.get<double>();
            else if (key == "heatmap_y_hi") c.heatmap_y_hi = value.get<double>();
            else if (key == "heatmap_resolution") c.heatmap_resolution = value.get<int>();
            else throw ConfigError("unknown config key '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config key '" + key + "': " + e.what());
        }
    }
    return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["dataset"] = c.dataset;
    j["twomoon_n"] = c.twomoon_n;
    j["twomoon_noise"] = c.twomoon_noise;
    j["twomoon_y_threshold"] = c.twomoon_y_threshold;
    j["mnist_train_images"] = c.mnist_train_images;
    j["mnist_train_labels"] = c.mnist_train_labels;
    j["mnist_test_images"] = c.mnist_test_images;
    j["mnist_test_labels"] = c.mnist_test_labels;
    j["n_train"] = c.n_train;
    j["n_val"] = c.n_val;
    j["n_test"] = c.n_test;
    j["standardize"] = c.standardize;
    j["annotator_source"] = c.annotator_source;
    j["annotators"] = c.annotators;
    j["epsilon"] = c.epsilon;
    j["n_correct"] = c.n_correct;
    j["external_labels"] = c.external_labels;
    j["method"] = c.method;
    j["mode"] = c.mode;
    j["hidden"] = c.hidden;
    j["basis_size"] = c.basis_size;
    j["lambda"] = c.lambda;
    j["include_identity"] = c.include_identity;
    j["kl_direction"] = c.kl_direction;
    j["learning_rate"] = c.learning_rate;
    j["momentum"] = c.momentum;
    j["batch_size"] = c.batch_size;
    j["epochs"] = c.epochs;
    j["em_rounds"] = c.em_rounds;
    j["mbem_smoothing"] = c.mbem_smoothing;
    j["trace_lambda"] = c.trace_lambda;
    j["data_seed"] = c.data_seed;
    j["model_seed"] = c.model_seed;
    j["synthesis_seed"] = c.synthesis_seed;
    j["output_dir"] = c.output_dir;
    j["save_model"] = c.save_model;
    j["export_heatmaps"] = c.export_heatmaps;
    j["heatmap_x_lo"] = c.heatmap_x_lo;
    j["heatmap_x_hi"] = c.heatmap_x_hi;
    j["heatmap_y_lo"] = c.heatmap_y_lo;
    j["heatmap_y_hi"] = c.heatmap_y_hi;
    j["heatmap_resolution"] = c.heatmap_resolution;
    return j;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

// --- report ------------------------------------------------------------------

struct ExperimentReport {
    int schema_version = 1;
    std::string method;
    std::string mode;
    double test_accuracy = 0.0;
    int selected_epoch = 0;
    double selected_val_accuracy = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> corruption_rates;
    std::vector<EpochStats> curves;
    double wall_clock_sec = 0.0;
    nlohmann::json config_echo;

    /// Flat key-value JSON object (arrays flattened with indexed keys).
    nlohmann::json to_flat_json() const {
        nlohmann::json j;
        j["schema_version"] = schema_version;
        j["method"] = method;
        j["mode"] = mode;
        j["test_accuracy"] = test_accuracy;
        j["selected_epoch"] = selected_epoch;
        if (std::isnan(selected_val_accuracy)) {
            j["selected_val_accuracy"] = nullptr;
        } else {
            j["selected_val_accuracy"] = selected_val_accuracy;
        }
        for (std::size_t r = 0; r < corruption_rates.size(); ++r) {
            j["corruption_rate_" + std::to_string(r + 1)] = corruption_rates[r];
        }
        j["epochs_run"] = static_cast<int>(curves.size());
        j["wall_clock_sec"] = wall_clock_sec;
        for (const auto& [key, value] : config_echo.items()) j["config." + key] = value;
        return j;
    }
};

inline void write_report_files(const ExperimentReport& report, const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(std::filesystem::path(dir) / "report.json");
        if (!os) throw ParseError("write_report_files: cannot open report.json in " + dir);
        os << report.to_flat_json().dump(2) << '\n';
    }
    {
        std::ofstream os(std::filesystem::path(dir) / "curves.csv");
        if (!os) throw ParseError("write_report_files: cannot open curves.csv in " + dir);
        os << std::setprecision(17) << "epoch,train_loss,val_accuracy\n";
        for (std::size_t e = 0; e < report.curves.size(); ++e) {
            os << e << ',' << report.curves[e].train_loss << ',';
            if (!std::isnan(report.curves[e].val_accuracy)) os << report.curves[e].val_accuracy;
            os << '\n';
        }
    }
}

/// Report equality for the determinism contract; wall clock is the one field
/// allowed to differ between reruns.
inline bool reports_match_ignoring_wallclock(const std::string& path_a,
                                             const std::string& path_b) {
    auto load = [](const std::string& p) {
        std::ifstream is(p);
        if (!is) throw ParseError("reports_match: cannot open " + p);
        nlohmann::json j;
        is >> j;
        j.erase("wall_clock_sec");
        return j;
    };
    return load(path_a) == load(path_b);
}

// --- heatmaps ------------------------------------------------------------------

struct HeatmapGrid {
    double x_lo = -1.5, x_hi = 2.5;
    double y_lo = -1.0, y_hi = 1.5;
    int resolution = 60;
};

/// Evaluates one model quantity over a plane grid. Quantities: "prediction"
/// (class-1 probability), "weight[r]", "confusion_diag[r]" (1-based r; the
/// diagonal entry indexed by annotator r's label rule at the grid point).
inline std::vector<std::array<double, 3>> heatmap_grid_values(
    const ModelParams& params, const PermutationBasis& basis, const HeatmapGrid& grid,
    const std::string& quantity, const TwoMoonRules& rules, const FeatureStats* stats) {
    if (params.dims.input_dim != 2) {
        throw ValueError("heatmap_grid_values: requires a 2-D input model");
    }
    if (grid.resolution < 2) throw ValueError("heatmap_grid_values: resolution must be >= 2");

    enum class Kind { prediction, weight, confusion_diag } kind;
    int index = 0;
    if (quantity == "prediction") {
        kind = Kind::prediction;
    } else {
        const auto open = quantity.find('[');
        const auto close = quantity.find(']');
        if (open == std::string::npos || close != quantity.size() - 1) {
            throw ValueError("heatmap_grid_values: unknown quantity '" + quantity + "'");
        }
        const std::string base = quantity.substr(0, open);
        index = std::stoi(quantity.substr(open + 1, close - open - 1)) - 1;
        if (base == "weight") kind = Kind::weight;
        else if (base == "confusion_diag") kind = Kind::confusion_diag;
        else throw ValueError("heatmap_grid_values: unknown quantity '" + quantity + "'");
        if (index < 0 || index >= params.dims.R) {
            throw ValueError("heatmap_grid_values: annotator index out of range in '" + quantity +
                             "'");
        }
    }

    const int res = grid.resolution;
    Mat raw(res * res, 2);
    for (int xi = 0; xi < res; ++xi) {
        const double x = grid.x_lo + (grid.x_hi - grid.x_lo) * xi / (res - 1);
        for (int yi = 0; yi < res; ++yi) {
            const double y = grid.y_lo + (grid.y_hi - grid.y_lo) * yi / (res - 1);
            raw(xi * res + yi, 0) = x;
            raw(xi * res + yi, 1) = y;
        }
    }
    Mat inputs = raw;
    if (stats != nullptr) {
        inputs = (inputs.rowwise() - stats->mean.transpose()).array().rowwise() /
                 stats->stddev.transpose().array();
    }
    const BatchCache cache = forward_batch(params, inputs);

    std::vector<std::array<double, 3>> rows;
    rows.reserve(static_cast<std::size_t>(res) * res);
    for (int i = 0; i < res * res; ++i) {
        const double x = raw(i, 0);
        const double y = raw(i, 1);
        double value = 0.0;
        switch (kind) {
            case Kind::prediction:
                value = softmax(cache.f_logits.row(i).transpose())[1];
                break;
            case Kind::weight:
                value = softmax(cache.w_logits.row(i).transpose())[index];
                break;
            case Kind::confusion_diag: {
                const Vec coeffs = softmax(
                    cache.c_logits.row(i).segment(index * params.dims.M, params.dims.M)
                        .transpose());
                const int label = rules.label(index, x, y);
                double diag = 0.0;
                for (int m = 0; m < basis.M; ++m) {
                    if (basis.perms[static_cast<std::size_t>(m)][static_cast<std::size_t>(label)] ==
                        label) {
                        diag += coeffs[m];
                    }
                }
                value = diag;
                break;
            }
        }
        rows.push_back({x, y, value});
    }
    return rows;
}

inline void export_heatmap_grid(const ModelParams& params, const PermutationBasis& basis,
                                const HeatmapGrid& grid, const std::string& quantity,
                                const TwoMoonRules& rules, const FeatureStats* stats,
                                std::ostream& os) {
    os << std::setprecision(17) << "x,y,value\n";
    for (const auto& row : heatmap_grid_values(params, basis, grid, quantity, rules, stats)) {
        os << row[0] << ',' << row[1] << ',' << row[2] << '\n';
    }
}

// --- experiment runner -----------------------------------------------------------

namespace detail {

struct PreparedData {
    SplitResult parts;
    FeatureStats stats;
    bool standardized = false;
};

inline PreparedData prepare_data(const ExperimentConfig& c) {
    PreparedData out;
    if (c.dataset == "twomoon") {
        Dataset ds = generate_two_moon(c.twomoon_n, c.twomoon_noise, c.data_seed,
                                       c.twomoon_y_threshold);
        out.parts = split(ds, c.n_train, c.n_val, c.n_test, c.data_seed);
    } else {
        Dataset train_file = load_mnist_idx(c.mnist_train_images, c.mnist_train_labels);
        if (!c.mnist_test_images.empty()) {
            out.parts = split(train_file, c.n_train, c.n_val, 0, c.data_seed);
            Dataset test_file = load_mnist_idx(c.mnist_test_images, c.mnist_test_labels);
            if (c.n_test > test_file.n()) {
                throw ConfigError("n_test exceeds the test file size");
            }
            out.parts.test = split(test_file, c.n_test, 0, 0, c.data_seed).train;
            out.parts.test.split_tag = Split::test;
        } else {
            out.parts = split(train_file, c.n_train, c.n_val, c.n_test, c.data_seed);
        }
    }
    if (c.standardize) {
        out.stats = fit_standardizer(out.parts.train);
        apply_standardizer(out.stats, out.parts.train);
        if (out.parts.val.n() > 0) apply_standardizer(out.stats, out.parts.val);
        apply_standardizer(out.stats, out.parts.test);
        out.standardized = true;
    }
    return out;
}

inline void attach_annotators(const ExperimentConfig& c, Dataset& train) {
    const int K = train.K;
    if (c.annotator_source == "native") {
        if (!train.annotators) throw ConfigError("native annotators missing from dataset");
        return;
    }
    if (c.annotator_source == "euclidean") {
        train.annotators = synthesize_euclidean(train.features, train.golden, c.annotators,
                                                c.epsilon, K, c.synthesis_seed);
    } else if (c.annotator_source == "hammer_spammer") {
        train.annotators = synthesize_hammer_spammer(train.golden, c.annotators, c.n_correct, K,
                                                     c.synthesis_seed);
    } else if (c.annotator_source == "external") {
        train.annotators =
            load_external_labels(c.external_labels, train.n(), c.annotators, K);
    } else {
        throw ConfigError("unknown annotator_source '" + c.annotator_source + "'");
    }
}

}  // namespace detail

inline ExperimentReport run_experiment(const ExperimentConfig& config) {
    config.validate();
    const auto t_start = std::chrono::steady_clock::now();

    detail::PreparedData data = detail::prepare_data(config);
    Dataset& train = data.parts.train;
    detail::attach_annotators(config, train);
    const Dataset* val = data.parts.val.n() > 0 ? &data.parts.val : nullptr;
    const Dataset& test = data.parts.test;

    const int K = train.K;
    const MethodSpec spec = parse_method(config.method);
    const FusionMode fusion_mode = parse_mode(config.mode);
    const ModelDims dims{train.dim(), config.hidden, K, config.annotators, config.basis_size};
    TrainOptions opts{config.epochs,   config.batch_size, config.learning_rate,
                      config.momentum, config.model_seed, config.include_identity,
                      fusion_mode};

    // The basis is experiment setup, fixed before training; it follows the
    // synthesis seed so model-seed repetitions share it.
    PermutationBasis basis;
    if (spec.method == Method::ours) {
        basis = random_permutation_basis(K, config.basis_size,
                                         rng::derive_seed(config.synthesis_seed, 0x62617369ULL),
                                         config.include_identity);
    }

    const KlDirection kl_dir = config.kl_direction == "target_first"
                                   ? KlDirection::target_first
                                   : KlDirection::prediction_first;
    TrainResult result;
    switch (spec.method) {
        case Method::ours:
            result = train_fusion(train, val, dims, basis, config.lambda, opts, kl_dir);
            break;
        case Method::mjv:
            result = train_majority_vote(train, val, dims, opts);
            break;
        case Method::wdn:
            result = train_global_weights(train, val, dims, opts).result;
            break;
        case Method::tracereg:
            result = train_global_confusion_tracereg(train, val, dims, opts, config.trace_lambda)
                         .result;
            break;
        case Method::mbem:
            result = train_mbem(train, val, dims, opts,
                                MbemOptions{config.em_rounds, config.mbem_smoothing})
                         .result;
            break;
        case Method::single_annotator:
            result = train_single_annotator(train, val, dims, opts, spec.single_index);
            break;
        case Method::golden:
            result = train_golden(train, val, dims, opts);
            break;
    }

    ExperimentReport report;
    report.method = config.method;
    report.mode = config.mode;
    report.selected_epoch = result.selected_epoch;
    report.selected_val_accuracy = result.selected_val_accuracy;
    report.curves = result.history;
    report.test_accuracy = accuracy(predict_batch(result.params, test.features), test.golden);
    if (train.annotators && train.has_golden()) {
        report.corruption_rates = corruption_rate(*train.annotators, train.golden);
    }
    report.config_echo = config_to_json(config);

    const auto t_end = std::chrono::steady_clock::now();
    report.wall_clock_sec = std::chrono::duration<double>(t_end - t_start).count();

    if (!config.output_dir.empty()) {
        write_report_files(report, config.output_dir);
        if (config.save_model) {
            save_checkpoint(result.params,
                            (std::filesystem::path(config.output_dir) / "model.ckpt").string());
        }
        if (config.export_heatmaps && spec.method == Method::ours && dims.input_dim == 2) {
            const TwoMoonRules rules{config.twomoon_y_threshold};
            const HeatmapGrid grid{config.heatmap_x_lo, config.heatmap_x_hi, config.heatmap_y_lo,
                                   config.heatmap_y_hi, config.heatmap_resolution};
            std::vector<std::string> quantities{"prediction"};
            for (int r = 1; r <= config.annotators; ++r) {
                quantities.push_back("weight[" + std::to_string(r) + "]");
                quantities.push_back("confusion_diag[" + std::to_string(r) + "]");
            }
            for (const auto& quantity : quantities) {
                std::string name = quantity;
                for (char& ch : name) {
                    if (ch == '[') ch = '_';
                    if (ch == ']') ch = '\0';
                }
                name.erase(std::remove(name.begin(), name.end(), '\0'), name.end());
                std::ofstream os(std::filesystem::path(config.output_dir) /
                                 ("heatmap_" + name + ".csv"));
                export_heatmap_grid(result.params, basis, grid, quantity, rules,
                                    data.standardized ? &data.stats : nullptr, os);
            }
        }
    }
    return report;
}

// --- sweeps ------------------------------------------------------------------

struct SweepCell {
    double value = 0.0;
    bool ok = false;
    std::string error;
    ExperimentReport report;
};

namespace detail {

inline std::string format_axis_value(double v) {
    std::ostringstream ss;
    ss << std::setprecision(10) << v;
    std::string s = ss.str();
    for (char& ch : s) {
        if (ch == '.' || ch == '-' || ch == '+') ch = '_';
    }
    return s;
}

inline int sweep_threads() {
    if (const char* env = std::getenv("LABELFUSE_THREADS")) {
        const int t = std::atoi(env);
        if (t >= 1) return t;
    }
    return 1;
}

}  // namespace detail

/// One run_experiment per value along the axis (epsilon | lambda | M), shared
/// seeds, disjoint output dirs. A failing cell is recorded and the sweep
/// continues. Cells run on LABELFUSE_THREADS workers.
inline std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const std::string& axis,
                                        const std::vector<double>& values) {
    if (axis != "epsilon" && axis != "lambda" && axis != "M") {
        throw ConfigError("run_sweep: axis must be epsilon, lambda, or M");
    }
    if (values.empty()) throw ConfigError("run_sweep: no axis values");

    std::vector<SweepCell> cells(values.size());
    auto run_cell = [&](std::size_t i) {
        SweepCell& cell = cells[i];
        cell.value = values[i];
        ExperimentConfig c = base;
        if (axis == "epsilon") {
            c.epsilon = values[i];
        } else if (axis == "lambda") {
            c.lambda = values[i];
        } else {
            c.basis_size = static_cast<int>(values[i]);
            if (static_cast<double>(c.basis_size) != values[i]) {
                cell.error = "M must be an integer";
                return;
            }
        }
        if (!base.output_dir.empty()) {
            c.output_dir = (std::filesystem::path(base.output_dir) /
                            (axis + "_" + detail::format_axis_value(values[i])))
                               .string();
        }
        try {
            cell.report = run_experiment(c);
            cell.ok = true;
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
    };

    const int threads = std::min<int>(detail::sweep_threads(), static_cast<int>(values.size()));
    if (threads <= 1) {
        for (std::size_t i = 0; i < values.size(); ++i) run_cell(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&]() {
                while (true) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= values.size()) return;
                    run_cell(i);
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    if (!base.output_dir.empty()) {
        std::filesystem::create_directories(base.output_dir);
        std::ofstream os(std::filesystem::path(base.output_dir) / "sweep.csv");
        os << std::setprecision(17) << axis << ",status,test_accuracy,selected_epoch,error\n";
        for (const auto& cell : cells) {
            os << cell.value << ',' << (cell.ok ? "ok" : "error") << ',';
            if (cell.ok) os << cell.report.test_accuracy << ',' << cell.report.selected_epoch;
            else os << ',';
            os << ',' << cell.error << '\n';
        }
    }
    return cells;
}

}  // namespace labelfuse
