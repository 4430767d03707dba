// Command-line front end: run one experiment, sweep an axis, or generate a
// synthetic image-like dataset as IDX files.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "labelfuse/harness.hpp"

namespace {

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stod(item));
    }
    return out;
}

void apply_env_overrides(labelfuse::ExperimentConfig& config) {
    if (const char* dir = std::getenv("LABELFUSE_OUTPUT_DIR")) {
        config.output_dir = dir;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sample-wise label fusion for multi-annotator noisy labels"};
    app.require_subcommand(1);

    std::string config_path, output_dir, axis, values_csv;

    auto* run = app.add_subcommand("run", "Run one experiment from a JSON config");
    run->add_option("--config", config_path, "Path to the experiment config")->required();
    run->add_option("--output-dir", output_dir, "Override the config's output directory");

    auto* sweep = app.add_subcommand("sweep", "Run one experiment per axis value");
    sweep->add_option("--config", config_path, "Path to the base experiment config")->required();
    sweep->add_option("--axis", axis, "Sweep axis: epsilon | lambda | M")->required();
    sweep->add_option("--values", values_csv, "Comma-separated axis values")->required();
    sweep->add_option("--output-dir", output_dir, "Override the config's output directory");

    std::string synth_dir;
    int synth_n = 11000, synth_classes = 10, synth_dim = 784;
    std::uint64_t synth_seed = 0;
    auto* synth = app.add_subcommand(
        "synth", "Generate a synthetic image-like dataset as an IDX file pair");
    synth->add_option("--out", synth_dir, "Output directory")->required();
    synth->add_option("--n", synth_n, "Number of samples");
    synth->add_option("--classes", synth_classes, "Number of classes");
    synth->add_option("--dim", synth_dim, "Feature dimension (must be a square)");
    synth->add_option("--seed", synth_seed, "Generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            auto ds = labelfuse::generate_embedded_clusters(synth_n, synth_classes, synth_dim,
                                                            synth_seed);
            std::filesystem::create_directories(synth_dir);
            const auto images = std::filesystem::path(synth_dir) / "images-idx3-ubyte";
            const auto labels = std::filesystem::path(synth_dir) / "labels-idx1-ubyte";
            labelfuse::save_dataset_idx(ds, images.string(), labels.string());
            std::cout << "wrote " << images.string() << " and " << labels.string() << "\n";
            return 0;
        }

        labelfuse::ExperimentConfig config = labelfuse::load_config(config_path);
        if (!output_dir.empty()) config.output_dir = output_dir;
        apply_env_overrides(config);

        if (run->parsed()) {
            auto report = labelfuse::run_experiment(config);
            std::cout << report.to_flat_json().dump(2) << "\n";
            return 0;
        }

        // sweep
        auto cells = labelfuse::run_sweep(config, axis, parse_values(values_csv));
        bool any_failed = false;
        for (const auto& cell : cells) {
            if (cell.ok) {
                std::cout << axis << "=" << cell.value
                          << " test_accuracy=" << cell.report.test_accuracy << "\n";
            } else {
                any_failed = true;
                std::cout << axis << "=" << cell.value << " error=" << cell.error << "\n";
            }
        }
        return any_failed ? 3 : 0;
    } catch (const labelfuse::ConfigError& e) {
        std::cerr << nlohmann::json{{"error", e.what()}}.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", e.what()}}.dump() << "\n";
        return 2;
    }
}
