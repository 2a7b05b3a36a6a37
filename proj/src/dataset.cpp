#include "mdiag/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "mdiag/binio.hpp"
#include "mdiag/error.hpp"

namespace mdiag::dataset {

using nlohmann::json;

bool DatasetManifest::operator==(const DatasetManifest& o) const {
    return class_names == o.class_names && counts == o.counts && channels == o.channels &&
           image_dims == o.image_dims && stft.window_len == o.stft.window_len && stft.hop == o.stft.hop &&
           stft.window == o.stft.window && train_ids == o.train_ids && test_ids == o.test_ids && seed == o.seed &&
           format_version == o.format_version && examples == o.examples;
}

spectral::ImageTensor signal_to_image(const signal::TimeSeries& ts, const spectral::StftParams& stft,
                                      const ImageDims& dims) {
    return spectral::spectrogram_image(spectral::stft(ts, stft), dims.height, dims.width);
}

namespace {

std::string example_file(std::size_t id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ex_%06zu.mdt", id);
    return buf;
}

}  // namespace

Dataset build_synthetic_dataset(std::size_t per_class, const signal::SynthConfig& synth,
                                const signal::MotorSpec& motor, const spectral::StftParams& stft,
                                const ImageDims& dims, std::uint64_t seed) {
    if (per_class < 1) throw DomainError("per_class must be >= 1");
    synth.validate(motor);

    Dataset ds;
    ds.manifest.image_dims = dims;
    ds.manifest.stft = stft;
    ds.manifest.seed = seed;
    ds.examples.reserve(per_class * signal::kNumClasses);
    for (int c = 0; c < signal::kNumClasses; ++c) {
        const auto fault = signal::FaultCondition::from_index(c);
        for (std::size_t i = 0; i < per_class; ++i) {
            signal::SynthConfig cfg = synth;
            cfg.rng_seed = seed + static_cast<std::uint64_t>(c) * per_class + i;
            const auto ts = signal::synthesize(cfg, fault, motor);
            const std::size_t id = ds.examples.size();
            LabeledExample ex{signal_to_image(ts, stft, dims), fault, "synth:seed=" + std::to_string(cfg.rng_seed)};
            ds.manifest.examples.push_back({id, c, example_file(id), ex.source_id});
            ds.examples.push_back(std::move(ex));
        }
        ds.manifest.counts[static_cast<std::size_t>(c)] = per_class;
    }
    return ds;
}

DatasetManifest split(const DatasetManifest& manifest, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw DomainError("train_fraction must lie in (0, 1)");
    std::vector<std::vector<std::size_t>> by_class(manifest.class_names.size());
    for (const auto& e : manifest.examples) {
        if (e.label < 0 || static_cast<std::size_t>(e.label) >= by_class.size())
            throw DomainError("example " + std::to_string(e.id) + " has invalid label");
        by_class[static_cast<std::size_t>(e.label)].push_back(e.id);
    }

    DatasetManifest out = manifest;
    out.train_ids.clear();
    out.test_ids.clear();
    std::mt19937_64 rng(seed);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& ids = by_class[c];
        if (ids.empty()) continue;
        if (ids.size() < 2)
            throw DomainError("class " + manifest.class_names[c] + " has fewer than 2 examples; cannot stratify");
        std::shuffle(ids.begin(), ids.end(), rng);
        const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
        out.train_ids.insert(out.train_ids.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
        out.test_ids.insert(out.test_ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
    }
    std::sort(out.train_ids.begin(), out.train_ids.end());
    std::sort(out.test_ids.begin(), out.test_ids.end());
    out.seed = manifest.seed;
    return out;
}

void write_tensor(const spectral::ImageTensor& img, const std::filesystem::path& path) {
    binio::Writer w;
    w.magic("MDT1");
    w.u32(3);
    w.u32(static_cast<std::uint32_t>(img.channels));
    w.u32(static_cast<std::uint32_t>(img.height));
    w.u32(static_cast<std::uint32_t>(img.width));
    w.f32s(img.values);
    w.flush(path);
}

spectral::ImageTensor read_tensor(const std::filesystem::path& path) {
    auto r = binio::Reader::open(path);
    if (r.magic() != "MDT1") throw FormatError(path.string() + ": bad tensor magic, expected MDT1");
    const std::uint32_t rank = r.u32();
    if (rank != 3) throw FormatError(path.string() + ": expected a rank-3 tensor, got rank " + std::to_string(rank));
    spectral::ImageTensor img;
    img.channels = r.u32();
    img.height = r.u32();
    img.width = r.u32();
    if (img.channels == 0 || img.height == 0 || img.width == 0 || img.size() > (1u << 28))
        throw FormatError(path.string() + ": implausible tensor dims");
    img.values.resize(img.size());
    r.f32s(img.values);
    r.expect_end();
    return img;
}

namespace {

json manifest_to_json(const DatasetManifest& m) {
    json j;
    j["format_version"] = m.format_version;
    j["class_names"] = m.class_names;
    j["counts"] = m.counts;
    j["image_dims"] = {m.channels, m.image_dims.height, m.image_dims.width};
    j["stft_params"] = {{"window_len", m.stft.window_len},
                        {"hop", m.stft.hop},
                        {"window", std::string(spectral::to_string(m.stft.window))}};
    j["split"] = {{"train", m.train_ids}, {"test", m.test_ids}};
    j["seed"] = m.seed;
    json examples = json::array();
    for (const auto& e : m.examples)
        examples.push_back({{"id", e.id}, {"label", e.label}, {"file", e.file}, {"source", e.source_id}});
    j["examples"] = std::move(examples);
    return j;
}

DatasetManifest manifest_from_json(const json& j) {
    DatasetManifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kManifestFormatVersion)
        throw IntegrityError("unsupported manifest format_version " + std::to_string(m.format_version));
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.counts = j.at("counts").get<std::vector<std::size_t>>();
    const auto dims = j.at("image_dims").get<std::vector<std::size_t>>();
    if (dims.size() != 3) throw IntegrityError("image_dims must have three entries");
    m.channels = dims[0];
    m.image_dims = {dims[1], dims[2]};
    const auto& st = j.at("stft_params");
    m.stft.window_len = st.at("window_len").get<std::size_t>();
    m.stft.hop = st.at("hop").get<std::size_t>();
    m.stft.window = spectral::window_from_string(st.at("window").get<std::string>());
    m.train_ids = j.at("split").at("train").get<std::vector<std::size_t>>();
    m.test_ids = j.at("split").at("test").get<std::vector<std::size_t>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("examples"))
        m.examples.push_back({e.at("id").get<std::size_t>(), e.at("label").get<int>(), e.at("file").get<std::string>(),
                              e.at("source").get<std::string>()});
    return m;
}

void check_manifest(const DatasetManifest& m, const std::filesystem::path& manifest_path) {
    const std::string where = manifest_path.string() + ": ";
    if (m.counts.size() != m.class_names.size()) throw IntegrityError(where + "counts and class_names differ in length");
    std::vector<std::size_t> seen(m.class_names.size(), 0);
    for (std::size_t i = 0; i < m.examples.size(); ++i) {
        const auto& e = m.examples[i];
        if (e.id != i) throw IntegrityError(where + "example ids must be 0..N-1 in order");
        if (e.label < 0 || static_cast<std::size_t>(e.label) >= seen.size())
            throw IntegrityError(where + "example " + std::to_string(i) + " has invalid label");
        ++seen[static_cast<std::size_t>(e.label)];
    }
    if (seen != m.counts) throw IntegrityError(where + "per-class counts do not match the example list");
    std::set<std::size_t> train(m.train_ids.begin(), m.train_ids.end());
    for (auto id : m.train_ids)
        if (id >= m.examples.size()) throw IntegrityError(where + "train id out of range");
    for (auto id : m.test_ids) {
        if (id >= m.examples.size()) throw IntegrityError(where + "test id out of range");
        if (train.count(id)) throw IntegrityError(where + "train and test splits overlap at id " + std::to_string(id));
    }
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    if (ds.examples.size() != ds.manifest.examples.size())
        throw IntegrityError("dataset has " + std::to_string(ds.examples.size()) + " examples but manifest lists " +
                             std::to_string(ds.manifest.examples.size()));
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (std::size_t i = 0; i < ds.examples.size(); ++i)
        write_tensor(ds.examples[i].image, dir / ds.manifest.examples[i].file);
    std::ofstream out(dir / kManifestFile);
    if (!out) throw IoError("cannot write " + (dir / kManifestFile).string());
    out << manifest_to_json(ds.manifest).dump(2) << '\n';
    if (!out) throw IoError("write failed for " + (dir / kManifestFile).string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / kManifestFile;
    if (!std::filesystem::is_regular_file(manifest_path))
        throw IntegrityError(manifest_path.string() + ": manifest missing");
    Dataset ds;
    try {
        std::ifstream in(manifest_path);
        ds.manifest = manifest_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw IntegrityError(manifest_path.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw IntegrityError(manifest_path.string() + ": " + e.what());
    }
    check_manifest(ds.manifest, manifest_path);

    std::size_t on_disk = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".mdt") ++on_disk;
    if (on_disk != ds.manifest.examples.size())
        throw IntegrityError(dir.string() + ": manifest lists " + std::to_string(ds.manifest.examples.size()) +
                             " examples but " + std::to_string(on_disk) + " tensor files are present");

    ds.examples.reserve(ds.manifest.examples.size());
    for (const auto& e : ds.manifest.examples) {
        const auto path = dir / e.file;
        if (!std::filesystem::is_regular_file(path)) throw IntegrityError(path.string() + ": missing tensor file");
        spectral::ImageTensor img;
        try {
            img = read_tensor(path);
        } catch (const FormatError& err) {
            throw IntegrityError(err.what());
        }
        if (img.channels != ds.manifest.channels || img.height != ds.manifest.image_dims.height ||
            img.width != ds.manifest.image_dims.width)
            throw IntegrityError(path.string() + ": tensor dims disagree with manifest image_dims");
        for (float v : img.values)
            if (!(v >= 0.0f && v <= 1.0f)) throw IntegrityError(path.string() + ": value outside [0, 1]");
        ds.examples.push_back({std::move(img), signal::FaultCondition::from_index(e.label), e.source_id});
    }
    return ds;
}

}  // namespace mdiag::dataset
