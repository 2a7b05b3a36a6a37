#include "mdiag/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mdiag/error.hpp"

namespace mdiag::config {

using nlohmann::json;

namespace {

using Setter = std::function<void(const json&)>;

template <typename T>
Setter set(T& field) {
    return [&field](const json& v) { field = v.get<T>(); };
}

void apply_section(const json& doc, const std::string& section, const std::map<std::string, Setter>& fields) {
    if (!doc.contains(section)) return;
    const auto& obj = doc.at(section);
    if (!obj.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        const auto it = fields.find(key);
        if (it == fields.end()) throw ConfigError("unknown config key '" + section + "." + key + "'");
        try {
            it->second(value);
        } catch (const json::exception&) {
            throw ConfigError("config key '" + section + "." + key + "' has the wrong type");
        } catch (const DomainError& e) {
            throw ConfigError("config key '" + section + "." + key + "': " + e.what());
        }
    }
}

}  // namespace

void CliConfig::validate() const {
    try {
        motor.validate();
        synth.validate(motor);
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    if (stft.window_len < 1 || stft.hop < 1) throw ConfigError("stft window_len and hop must be >= 1");
    if (dataset.per_class < 1) throw ConfigError("dataset.per_class must be >= 1");
    if (!(dataset.train_fraction > 0.0 && dataset.train_fraction < 1.0))
        throw ConfigError("dataset.train_fraction must lie in (0, 1)");
    if (dataset.dims.height < 1 || dataset.dims.width < 1) throw ConfigError("dataset image dims must be >= 1");
    if (train.model != "cnn" && train.model != "nb" && train.model != "svm")
        throw ConfigError("train.model must be cnn, nb or svm, got '" + train.model + "'");
    if (!(train.cnn.learning_rate >= 0.0)) throw ConfigError("train.learning_rate must be >= 0");
    if (!(train.cnn.momentum >= 0.0 && train.cnn.momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
    if (train.cnn.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (train.cnn.lr_schedule != "cosine" && train.cnn.lr_schedule != "constant")
        throw ConfigError("train.lr_schedule must be cosine or constant");
    if (train.cnn.weight_init != "kaiming") throw ConfigError("train.weight_init must be kaiming");
    if (!(train.svm.c > 0.0)) throw ConfigError("train.svm_c must be > 0");
    if (!(train.svm.learning_rate >= 0.0)) throw ConfigError("train.svm_learning_rate must be >= 0");
}

CliConfig parse_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, _] : doc.items()) {
        if (key != "motor" && key != "synth" && key != "stft" && key != "dataset" && key != "train" && key != "paths")
            throw ConfigError("unknown config section '" + key + "'");
    }

    CliConfig c;
    apply_section(doc, "motor",
                  {{"supply_freq_hz", set(c.motor.supply_freq_hz)},
                   {"poles", set(c.motor.poles)},
                   {"rated_speed_rpm", set(c.motor.rated_speed_rpm)},
                   {"rotor_bars", set(c.motor.rotor_bars)}});

    bool slip_given = false;
    apply_section(doc, "synth",
                  {{"fundamental_amplitude", set(c.synth.fundamental_amplitude)},
                   {"slip", [&](const json& v) { c.synth.slip = v.get<double>(); slip_given = true; }},
                   {"sideband_orders", set(c.synth.sideband_orders)},
                   {"per_bar_gain", set(c.synth.per_bar_gain)},
                   {"order_decay", set(c.synth.order_decay)},
                   {"noise_sigma", set(c.synth.noise_sigma)},
                   {"duration_s", set(c.synth.duration_s)},
                   {"sample_rate_hz", set(c.synth.sample_rate_hz)},
                   {"kind", [&](const json& v) { c.synth.kind = signal::channel_kind_from_string(v.get<std::string>()); }}});
    if (!slip_given) {
        try {
            c.synth.slip = signal::slip(c.motor, c.motor.rated_speed_rpm);
        } catch (const DomainError& e) {
            throw ConfigError(std::string("motor: ") + e.what());
        }
    }

    apply_section(doc, "stft",
                  {{"window_len", set(c.stft.window_len)},
                   {"hop", set(c.stft.hop)},
                   {"window", [&](const json& v) { c.stft.window = spectral::window_from_string(v.get<std::string>()); }}});

    apply_section(doc, "dataset",
                  {{"per_class", set(c.dataset.per_class)},
                   {"train_fraction", set(c.dataset.train_fraction)},
                   {"seed", set(c.dataset.seed)},
                   {"split_seed", set(c.dataset.split_seed)},
                   {"height", set(c.dataset.dims.height)},
                   {"width", set(c.dataset.dims.width)}});

    apply_section(doc, "train",
                  {{"model", set(c.train.model)},
                   {"learning_rate", set(c.train.cnn.learning_rate)},
                   {"momentum", set(c.train.cnn.momentum)},
                   {"batch_size", set(c.train.cnn.batch_size)},
                   {"epochs", set(c.train.cnn.epochs)},
                   {"seed", set(c.train.cnn.seed)},
                   {"arch_seed", set(c.train.arch_seed)},
                   {"lr_schedule", set(c.train.cnn.lr_schedule)},
                   {"weight_init", set(c.train.cnn.weight_init)},
                   {"svm_c", set(c.train.svm.c)},
                   {"svm_epochs", set(c.train.svm.epochs)},
                   {"svm_learning_rate", set(c.train.svm.learning_rate)},
                   {"svm_seed", set(c.train.svm.seed)}});

    apply_section(doc, "paths",
                  {{"dataset_dir", set(c.paths.dataset_dir)},
                   {"model", set(c.paths.model)},
                   {"history", set(c.paths.history)},
                   {"report", set(c.paths.report)}});

    c.validate();
    return c;
}

CliConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

std::string dump_config(const CliConfig& c) {
    json j;
    j["motor"] = {{"supply_freq_hz", c.motor.supply_freq_hz},
                  {"poles", c.motor.poles},
                  {"rated_speed_rpm", c.motor.rated_speed_rpm},
                  {"rotor_bars", c.motor.rotor_bars}};
    j["synth"] = {{"fundamental_amplitude", c.synth.fundamental_amplitude},
                  {"slip", c.synth.slip},
                  {"sideband_orders", c.synth.sideband_orders},
                  {"per_bar_gain", c.synth.per_bar_gain},
                  {"order_decay", c.synth.order_decay},
                  {"noise_sigma", c.synth.noise_sigma},
                  {"duration_s", c.synth.duration_s},
                  {"sample_rate_hz", c.synth.sample_rate_hz},
                  {"kind", std::string(signal::to_string(c.synth.kind))}};
    j["stft"] = {{"window_len", c.stft.window_len},
                 {"hop", c.stft.hop},
                 {"window", std::string(spectral::to_string(c.stft.window))}};
    j["dataset"] = {{"per_class", c.dataset.per_class},
                    {"train_fraction", c.dataset.train_fraction},
                    {"seed", c.dataset.seed},
                    {"split_seed", c.dataset.split_seed},
                    {"height", c.dataset.dims.height},
                    {"width", c.dataset.dims.width}};
    j["train"] = {{"model", c.train.model},
                  {"learning_rate", c.train.cnn.learning_rate},
                  {"momentum", c.train.cnn.momentum},
                  {"batch_size", c.train.cnn.batch_size},
                  {"epochs", c.train.cnn.epochs},
                  {"seed", c.train.cnn.seed},
                  {"arch_seed", c.train.arch_seed},
                  {"lr_schedule", c.train.cnn.lr_schedule},
                  {"weight_init", c.train.cnn.weight_init},
                  {"svm_c", c.train.svm.c},
                  {"svm_epochs", c.train.svm.epochs},
                  {"svm_learning_rate", c.train.svm.learning_rate},
                  {"svm_seed", c.train.svm.seed}};
    j["paths"] = {{"dataset_dir", c.paths.dataset_dir},
                  {"model", c.paths.model},
                  {"history", c.paths.history},
                  {"report", c.paths.report}};
    return j.dump(2) + "\n";
}

}  // namespace mdiag::config
