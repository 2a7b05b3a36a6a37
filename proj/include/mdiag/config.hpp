#pragma once

#include <filesystem>
#include <string>

#include "mdiag/baselines.hpp"
#include "mdiag/dataset.hpp"
#include "mdiag/nn/model.hpp"
#include "mdiag/signal.hpp"
#include "mdiag/spectral.hpp"

namespace mdiag::config {

struct DatasetSection {
    std::size_t per_class = 300;
    double train_fraction = 250.0 / 300.0;
    std::uint64_t seed = 1234;
    std::uint64_t split_seed = 7;
    dataset::ImageDims dims;
};

struct TrainSection {
    std::string model = "cnn";  ///< cnn | nb | svm
    nn::TrainConfig cnn;
    std::uint64_t arch_seed = 42;
    baselines::SvmHyper svm;
};

struct PathsSection {
    std::string dataset_dir;
    std::string model;
    std::string history;
    std::string report;
};

struct CliConfig {
    signal::MotorSpec motor;
    signal::SynthConfig synth;
    spectral::StftParams stft;
    DatasetSection dataset;
    TrainSection train;
    PathsSection paths;

    /// Throws ConfigError describing the first invalid field.
    void validate() const;
};

/// Every field is optional; unknown sections or keys raise ConfigError. When synth.slip
/// is absent it is derived from the motor's rated speed.
CliConfig parse_config(const std::string& json_text);
CliConfig load_config(const std::filesystem::path& path);
std::string dump_config(const CliConfig& cfg);

}  // namespace mdiag::config
