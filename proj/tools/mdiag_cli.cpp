// mdiag: synthesis, spectra, dataset building, training, evaluation and prediction.
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "mdiag/baselines.hpp"
#include "mdiag/binio.hpp"
#include "mdiag/config.hpp"
#include "mdiag/dataset.hpp"
#include "mdiag/error.hpp"
#include "mdiag/eval.hpp"
#include "mdiag/nn/model.hpp"
#include "mdiag/signal.hpp"
#include "mdiag/spectral.hpp"

using namespace mdiag;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct Common {
    std::string config_path;
};

config::CliConfig load(const Common& common) {
    return common.config_path.empty() ? config::parse_config("{}") : config::load_config(common.config_path);
}

std::string format(const char* fmt, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

// ---- model polymorphism -------------------------------------------------------

struct AnyModel {
    std::string kind;  // cnn | nb | svm
    std::optional<nn::ShuffleModel> cnn;
    std::optional<baselines::NBModel> nb;
    std::optional<baselines::LinearSVMModel> svm;
};

AnyModel load_any_model(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw IoError("cannot open model " + path.string());
    const auto magic = binio::peek_magic(path);
    AnyModel m;
    if (magic == "MDNN") {
        m.kind = "cnn";
        m.cnn = nn::load_model(path);
    } else if (magic == "MDNB") {
        m.kind = "nb";
        m.nb = baselines::load_nb(path);
    } else if (magic == "MDSV") {
        m.kind = "svm";
        m.svm = baselines::load_svm(path);
    } else {
        throw FormatError(path.string() + ": unknown model magic '" + magic + "'");
    }
    return m;
}

std::size_t model_features(AnyModel& m) {
    if (m.cnn) {
        const auto& a = m.cnn->arch();
        return a.in_channels * a.in_height * a.in_width;
    }
    return m.nb ? m.nb->num_features : m.svm->num_features;
}

std::vector<double> softmax_vec(const std::vector<double>& scores) {
    nn::Matrix row(1, scores.size());
    row.data = scores;
    return nn::softmax(row).data;
}

/// Class index and probabilities for each image.
std::vector<nn::Prediction> predict_any(AnyModel& m, std::span<const spectral::ImageTensor* const> images) {
    for (const auto* img : images)
        if (img->size() != model_features(m))
            throw ShapeError("image has " + std::to_string(img->size()) + " values, model expects " +
                             std::to_string(model_features(m)));
    if (m.cnn) return nn::predict_batch(*m.cnn, images);
    std::vector<nn::Prediction> out;
    for (const auto* img : images) {
        const auto x = baselines::flatten(*img);
        const auto sp = m.nb ? baselines::nb_predict(*m.nb, x) : baselines::svm_predict(*m.svm, x);
        out.push_back({sp.class_index, softmax_vec(sp.scores)});
    }
    return out;
}

struct Split {
    std::vector<const spectral::ImageTensor*> images;
    std::vector<int> labels;
};

Split select(const dataset::Dataset& ds, const std::vector<std::size_t>& ids) {
    Split s;
    for (auto id : ids) {
        s.images.push_back(&ds.examples[id].image);
        s.labels.push_back(ds.examples[id].label.class_index());
    }
    return s;
}

const std::vector<std::size_t>& split_ids(const dataset::Dataset& ds, const std::string& name) {
    if (name == "train") return ds.manifest.train_ids;
    if (name == "test" || name == "val") return ds.manifest.test_ids;
    throw ConfigError("unknown split '" + name + "' (expected train, test or val)");
}

spectral::ImageTensor image_from_input(const std::filesystem::path& in, double sample_rate,
                                       const config::CliConfig& cfg, const dataset::ImageDims& dims) {
    if (!std::filesystem::is_regular_file(in)) throw IoError("cannot open " + in.string());
    if (binio::peek_magic(in) == "MDT1") return dataset::read_tensor(in);
    const auto ts = signal::load_csv(in, sample_rate, cfg.synth.kind);
    return dataset::signal_to_image(ts, cfg.stft, dims);
}

// ---- commands -------------------------------------------------------------------

int cmd_signal(const Common& common, const std::string& label, std::optional<std::uint64_t> seed,
               const std::string& out) {
    auto cfg = load(common);
    if (seed) cfg.synth.rng_seed = *seed;
    int bars = -1;
    for (int c = 0; c < signal::kNumClasses; ++c)
        if (signal::class_name(c) == label) bars = c;
    if (bars < 0) throw ConfigError("unknown class '" + label + "' (expected HLT, BRB1..BRB4)");
    const auto ts = signal::synthesize(cfg.synth, signal::FaultCondition::from_broken_bars(bars), cfg.motor);
    signal::save_csv(ts, out);
    std::cout << "wrote " << ts.size() << " samples at " << cfg.synth.sample_rate_hz << " Hz (" << label << ") to "
              << out << "\n";
    return kExitOk;
}

int cmd_synth(const Common& common, const std::string& out_dir, std::optional<std::size_t> per_class,
              std::optional<std::uint64_t> seed) {
    auto cfg = load(common);
    if (per_class) cfg.dataset.per_class = *per_class;
    if (seed) cfg.dataset.seed = *seed;
    cfg.validate();
    auto ds = dataset::build_synthetic_dataset(cfg.dataset.per_class, cfg.synth, cfg.motor, cfg.stft, cfg.dataset.dims,
                                               cfg.dataset.seed);
    ds.manifest = dataset::split(ds.manifest, cfg.dataset.train_fraction, cfg.dataset.split_seed);
    dataset::save_dataset(ds, out_dir);
    std::cout << "dataset " << out_dir << ": " << ds.examples.size() << " examples, counts [";
    for (std::size_t c = 0; c < ds.manifest.counts.size(); ++c)
        std::cout << (c ? " " : "") << ds.manifest.class_names[c] << "=" << ds.manifest.counts[c];
    std::cout << "], dims 1x" << cfg.dataset.dims.height << "x" << cfg.dataset.dims.width << ", train "
              << ds.manifest.train_ids.size() << ", test " << ds.manifest.test_ids.size() << "\n";
    return kExitOk;
}

int cmd_spectrum(const Common& common, const std::string& in, double sample_rate, std::optional<double> fs,
                 std::optional<double> slip, int k, const std::string& out, const std::string& window,
                 int search_bins) {
    auto cfg = load(common);
    if (k < 1) throw ConfigError("--k must be >= 1");
    if (search_bins < 0) throw ConfigError("--search-bins must be >= 0");
    const double supply = fs.value_or(cfg.motor.supply_freq_hz);
    const double s = slip.value_or(cfg.synth.slip);
    const auto ts = signal::load_csv(in, sample_rate, cfg.synth.kind);
    const auto ps = spectral::power_spectrum(ts, spectral::window_from_string(window));
    spectral::write_spectrum_csv(ps, out);
    const auto hits = spectral::detect_sidebands(ps, supply, s, k, search_bins);
    std::printf("bin width %.4f Hz, supply %.3f Hz, slip %.5f\n", ps.bin_width_hz(), supply, s);
    std::printf("%5s  %5s  %12s  %12s  %12s\n", "order", "side", "expected_hz", "found_hz", "magnitude");
    for (const auto& h : hits)
        std::printf("%5d  %5s  %12.4f  %12.4f  %12.6g\n", h.order, h.left ? "lower" : "upper", h.expected_hz,
                    h.found_hz, h.magnitude);
    return kExitOk;
}

int cmd_spectrogram(const Common& common, const std::string& in, double sample_rate, const std::string& out,
                    std::optional<std::size_t> window_len, std::optional<std::size_t> hop,
                    std::optional<std::string> window, const std::string& csv_out) {
    auto cfg = load(common);
    if (window_len) cfg.stft.window_len = *window_len;
    if (hop) cfg.stft.hop = *hop;
    if (window) cfg.stft.window = spectral::window_from_string(*window);
    const auto ts = signal::load_csv(in, sample_rate, cfg.synth.kind);
    const auto spec = spectral::stft(ts, cfg.stft);
    const auto img = spectral::spectrogram_image(spec, cfg.dataset.dims.height, cfg.dataset.dims.width);
    spectral::write_pgm(img, out);
    if (!csv_out.empty()) spectral::write_spectrogram_csv(spec, csv_out);
    std::cout << "wrote " << img.width << "x" << img.height << " image (" << spec.num_frames << " frames, "
              << spec.num_bins << " bins) to " << out << "\n";
    return kExitOk;
}

int cmd_train(const Common& common, std::string dataset_dir, std::string out, std::string history,
              std::optional<std::size_t> epochs, std::optional<double> lr, std::optional<std::uint64_t> seed,
              std::optional<std::string> model_kind) {
    auto cfg = load(common);
    if (dataset_dir.empty()) dataset_dir = cfg.paths.dataset_dir;
    if (out.empty()) out = cfg.paths.model;
    if (history.empty()) history = cfg.paths.history;
    if (dataset_dir.empty() || out.empty()) throw ConfigError("train needs --dataset and --out (or paths in config)");
    if (epochs) cfg.train.cnn.epochs = *epochs;
    if (lr) cfg.train.cnn.learning_rate = *lr;
    if (seed) cfg.train.cnn.seed = *seed;
    if (model_kind) cfg.train.model = *model_kind;
    cfg.validate();

    const auto ds = dataset::load_dataset(dataset_dir);
    const auto tr = select(ds, ds.manifest.train_ids);
    const auto te = select(ds, ds.manifest.test_ids);
    if (tr.images.empty()) throw DomainError("dataset has an empty train split");

    if (cfg.train.model == "cnn") {
        nn::ArchConfig arch;
        arch.in_channels = ds.manifest.channels;
        arch.in_height = ds.manifest.image_dims.height;
        arch.in_width = ds.manifest.image_dims.width;
        nn::ShuffleModel model(arch, cfg.train.arch_seed);
        const auto hist = nn::train(model, {tr.images, tr.labels}, {te.images, te.labels}, cfg.train.cnn,
                                    [](const nn::EpochStats& s) {
                                        std::printf("epoch %3zu  loss %.6f  train_acc %.4f  val_acc %.4f\n", s.epoch,
                                                    s.train_loss, s.train_acc, s.val_acc);
                                        std::fflush(stdout);
                                    });
        nn::save_model(model, out);
        if (!history.empty()) nn::write_history_csv(hist, history);
        if (hist.empty())
            std::cout << "no epochs run; initial model written to " << out << "\n";
        else
            std::printf("final train_acc %.4f  val_acc %.4f\n", hist.back().train_acc, hist.back().val_acc);
        return kExitOk;
    }

    const auto x = baselines::flatten_all(tr.images);
    AnyModel m;
    if (cfg.train.model == "nb") {
        m.nb = baselines::nb_fit(x, tr.labels, ds.manifest.class_names.size());
        baselines::save_nb(*m.nb, out);
    } else {
        m.svm = baselines::svm_fit(x, tr.labels, ds.manifest.class_names.size(), cfg.train.svm);
        baselines::save_svm(*m.svm, out);
    }
    auto accuracy = [&](const Split& s) {
        if (s.images.empty()) return 0.0;
        const auto preds = predict_any(m, s.images);
        std::size_t ok = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) ok += preds[i].class_index == s.labels[i];
        return static_cast<double>(ok) / static_cast<double>(preds.size());
    };
    std::printf("final train_acc %.4f  val_acc %.4f\n", accuracy(tr), accuracy(te));
    return kExitOk;
}

int cmd_eval(const std::string& dataset_dir, const std::string& model_path, const std::string& split_name,
             const std::string& report, const std::string& out) {
    if (report != "json" && report != "text") throw ConfigError("--report must be json or text");
    auto model = load_any_model(model_path);
    const auto ds = dataset::load_dataset(dataset_dir);
    const auto s = select(ds, split_ids(ds, split_name));
    if (s.images.empty()) throw DomainError("split '" + split_name + "' is empty");
    const auto preds = predict_any(model, s.images);
    std::vector<int> predicted;
    for (const auto& p : preds) predicted.push_back(p.class_index);
    const auto cm = eval::confusion(predicted, s.labels, ds.manifest.class_names.size(), ds.manifest.class_names);
    const auto rep = eval::metrics(cm);
    for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";

    std::string text;
    if (report == "json") {
        text = eval::report_json(rep);
    } else {
        text = "model " + model.kind + ", split " + split_name + " (" + std::to_string(s.images.size()) +
               " examples)\n\nconfusion (rows actual, columns predicted)\n" + eval::confusion_text(cm) + "\n" +
               eval::report_text(rep);
    }
    if (out.empty()) {
        std::cout << text;
    } else {
        std::ofstream f(out);
        if (!(f << text)) throw IoError("cannot write " + out);
        std::cout << "accuracy " << format("%.4f", rep.accuracy) << "\n";
    }
    return kExitOk;
}

int cmd_predict(const Common& common, const std::string& model_path, const std::string& in,
                std::optional<double> sample_rate, std::optional<std::size_t> window_len,
                std::optional<std::size_t> hop, bool as_json) {
    auto cfg = load(common);
    if (window_len) cfg.stft.window_len = *window_len;
    if (hop) cfg.stft.hop = *hop;
    auto model = load_any_model(model_path);
    dataset::ImageDims dims = cfg.dataset.dims;
    if (model.cnn) dims = {model.cnn->arch().in_height, model.cnn->arch().in_width};
    const auto img = image_from_input(in, sample_rate.value_or(cfg.synth.sample_rate_hz), cfg, dims);
    const spectral::ImageTensor* ptr = &img;
    const auto pred = predict_any(model, {&ptr, 1}).front();
    if (as_json) {
        nlohmann::json j;
        j["class"] = std::string(signal::class_name(pred.class_index));
        j["class_index"] = pred.class_index;
        nlohmann::json probs;
        for (std::size_t c = 0; c < pred.probabilities.size(); ++c)
            probs[std::string(signal::class_name(static_cast<int>(c)))] = pred.probabilities[c];
        j["probabilities"] = probs;
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << signal::class_name(pred.class_index) << "\n";
        for (std::size_t c = 0; c < pred.probabilities.size(); ++c)
            std::printf("  %-5s %.6f\n", std::string(signal::class_name(static_cast<int>(c))).c_str(),
                        pred.probabilities[c]);
    }
    return kExitOk;
}

int run(int argc, char** argv) {
    CLI::App app{"Broken-rotor-bar diagnosis from motor current spectra"};
    app.require_subcommand(1);
    Common common;
    app.add_option("-c,--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);

    // signal
    auto* sig = app.add_subcommand("signal", "Write one synthesized signal as CSV");
    std::string sig_class = "HLT", sig_out;
    std::optional<std::uint64_t> sig_seed;
    sig->add_option("--class", sig_class, "HLT, BRB1, BRB2, BRB3 or BRB4");
    sig->add_option("--seed", sig_seed, "Noise seed");
    sig->add_option("--out", sig_out, "Output CSV")->required();

    // synth
    auto* syn = app.add_subcommand("synth", "Build a synthetic spectrogram dataset");
    std::string syn_out;
    std::optional<std::size_t> syn_per_class;
    std::optional<std::uint64_t> syn_seed;
    syn->add_option("--out-dir", syn_out, "Dataset directory")->required();
    syn->add_option("--per-class", syn_per_class, "Examples per class");
    syn->add_option("--seed", syn_seed, "Dataset seed");

    // spectrum
    auto* spc = app.add_subcommand("spectrum", "FFT spectrum and broken-bar sideband report");
    std::string spc_in, spc_out, spc_window = "hann";
    double spc_rate = 0.0;
    std::optional<double> spc_fs, spc_slip;
    int spc_k = 2, spc_bins = 2;
    spc->add_option("--in", spc_in, "Input CSV")->required();
    spc->add_option("--sample-rate", spc_rate, "Sample rate in Hz")->required();
    spc->add_option("--fs", spc_fs, "Supply frequency in Hz");
    spc->add_option("--slip", spc_slip, "Slip");
    spc->add_option("--k", spc_k, "Sideband orders to report");
    spc->add_option("--out", spc_out, "Spectrum CSV")->required();
    spc->add_option("--window", spc_window, "rectangular, hann or hamming");
    spc->add_option("--search-bins", spc_bins, "Peak search half-width in bins");

    // spectrogram
    auto* sgm = app.add_subcommand("spectrogram", "Render an STFT spectrogram to PGM");
    std::string sgm_in, sgm_out, sgm_csv;
    double sgm_rate = 0.0;
    std::optional<std::size_t> sgm_wlen, sgm_hop;
    std::optional<std::string> sgm_window;
    sgm->add_option("--in", sgm_in, "Input CSV")->required();
    sgm->add_option("--sample-rate", sgm_rate, "Sample rate in Hz")->required();
    sgm->add_option("--out", sgm_out, "Output PGM")->required();
    sgm->add_option("--window-len", sgm_wlen, "STFT window length");
    sgm->add_option("--hop", sgm_hop, "STFT hop");
    sgm->add_option("--window", sgm_window, "rectangular, hann or hamming");
    sgm->add_option("--csv", sgm_csv, "Also write the magnitude matrix as CSV");

    // train
    auto* trn = app.add_subcommand("train", "Train a CNN or baseline model");
    std::string trn_ds, trn_out, trn_hist;
    std::optional<std::size_t> trn_epochs;
    std::optional<double> trn_lr;
    std::optional<std::uint64_t> trn_seed;
    std::optional<std::string> trn_kind;
    trn->add_option("--dataset", trn_ds, "Dataset directory");
    trn->add_option("--out", trn_out, "Model file");
    trn->add_option("--history", trn_hist, "Per-epoch history CSV");
    trn->add_option("--epochs", trn_epochs, "Epochs");
    trn->add_option("--lr", trn_lr, "Learning rate");
    trn->add_option("--seed", trn_seed, "Shuffle seed");
    trn->add_option("--model", trn_kind, "cnn, nb or svm");

    // eval
    auto* evl = app.add_subcommand("eval", "Confusion matrix and classification report");
    std::string evl_ds, evl_model, evl_split = "test", evl_report = "text", evl_out;
    evl->add_option("--dataset", evl_ds, "Dataset directory")->required();
    evl->add_option("--model", evl_model, "Model file (CNN or baseline)")->required();
    evl->add_option("--split", evl_split, "train, test or val");
    evl->add_option("--report", evl_report, "json or text");
    evl->add_option("--out", evl_out, "Write the report here instead of stdout");

    // predict
    auto* prd = app.add_subcommand("predict", "Classify one signal CSV or tensor file");
    std::string prd_model, prd_in;
    std::optional<double> prd_rate;
    std::optional<std::size_t> prd_wlen, prd_hop;
    bool prd_json = false;
    prd->add_option("--model", prd_model, "Model file")->required();
    prd->add_option("--in", prd_in, "Signal CSV or .mdt tensor")->required();
    prd->add_option("--sample-rate", prd_rate, "Sample rate of a CSV input in Hz");
    prd->add_option("--window-len", prd_wlen, "STFT window length");
    prd->add_option("--hop", prd_hop, "STFT hop");
    prd->add_flag("--json", prd_json, "Print JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (*sig) return cmd_signal(common, sig_class, sig_seed, sig_out);
    if (*syn) return cmd_synth(common, syn_out, syn_per_class, syn_seed);
    if (*spc) return cmd_spectrum(common, spc_in, spc_rate, spc_fs, spc_slip, spc_k, spc_out, spc_window, spc_bins);
    if (*sgm) return cmd_spectrogram(common, sgm_in, sgm_rate, sgm_out, sgm_wlen, sgm_hop, sgm_window, sgm_csv);
    if (*trn) return cmd_train(common, trn_ds, trn_out, trn_hist, trn_epochs, trn_lr, trn_seed, trn_kind);
    if (*evl) return cmd_eval(evl_ds, evl_model, evl_split, evl_report, evl_out);
    if (*prd) return cmd_predict(common, prd_model, prd_in, prd_rate, prd_wlen, prd_hop, prd_json);
    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const TrainingError& e) {
        std::cerr << "error: " << e.what() << " (epoch " << e.epoch() << ")\n";
        return kExitNumeric;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const IntegrityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ParseError& e) {
        std::cerr << "error: line " << e.line() << ": " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {  // ConfigError, ShapeError
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
