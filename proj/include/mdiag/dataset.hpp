#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdiag/signal.hpp"
#include "mdiag/spectral.hpp"

namespace mdiag::dataset {

struct ImageDims {
    std::size_t height = 64;
    std::size_t width = 64;
    bool operator==(const ImageDims&) const = default;
};

struct LabeledExample {
    spectral::ImageTensor image;
    signal::FaultCondition label{signal::FaultLabel::HLT};
    std::string source_id;
};

struct ExampleEntry {
    std::size_t id = 0;
    int label = 0;
    std::string file;
    std::string source_id;
    bool operator==(const ExampleEntry&) const = default;
};

inline constexpr int kManifestFormatVersion = 1;

struct DatasetManifest {
    std::vector<std::string> class_names = signal::class_names();
    std::vector<std::size_t> counts = std::vector<std::size_t>(signal::kNumClasses, 0);
    std::size_t channels = 1;
    ImageDims image_dims;
    spectral::StftParams stft;
    std::vector<std::size_t> train_ids;
    std::vector<std::size_t> test_ids;
    std::uint64_t seed = 0;
    int format_version = kManifestFormatVersion;
    std::vector<ExampleEntry> examples;

    bool operator==(const DatasetManifest& o) const;
};

/// Examples are stored in id order: examples[i] has manifest id i.
struct Dataset {
    std::vector<LabeledExample> examples;
    DatasetManifest manifest;
};

/// STFT of the series rendered to a 1 x height x width image.
spectral::ImageTensor signal_to_image(const signal::TimeSeries& ts, const spectral::StftParams& stft,
                                      const ImageDims& dims);

/// per_class examples for each of the five classes, class-major. Example i of
/// class c is synthesized with seed + c * per_class + i. No split is assigned.
Dataset build_synthetic_dataset(std::size_t per_class, const signal::SynthConfig& synth,
                                const signal::MotorSpec& motor, const spectral::StftParams& stft,
                                const ImageDims& dims, std::uint64_t seed);

/// Stratified split: each class sends round(train_fraction * count) of its
/// examples (seeded permutation) to train, the rest to test.
DatasetManifest split(const DatasetManifest& manifest, double train_fraction, std::uint64_t seed);

/// manifest.json plus one MDT1 tensor file per example.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
/// Throws IntegrityError naming the offending file.
Dataset load_dataset(const std::filesystem::path& dir);

/// "MDT1", u32 rank, u32 dims, f32 payload, little-endian.
void write_tensor(const spectral::ImageTensor& img, const std::filesystem::path& path);
spectral::ImageTensor read_tensor(const std::filesystem::path& path);

inline constexpr const char* kManifestFile = "manifest.json";

}  // namespace mdiag::dataset
