#include "pmfs/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "pmfs/errors.hpp"

namespace pmfs::config {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
    if (!obj.is_object()) throw ConfigError("section '" + where + "' must be an object");
    for (const auto& item : obj.items())
        if (!allowed.count(item.key()))
            throw ConfigError("unknown key '" + item.key() + "' in section '" + where + "'");
}

const json& require(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key))
        throw ConfigError("section '" + where + "' is missing '" + key + "'");
    return obj.at(key);
}

template <typename T>
T get_as(const json& obj, const std::string& key, const std::string& where, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("key '" + key + "' in section '" + where + "' has the wrong type");
    }
}

template <typename T>
T get_required(const json& obj, const std::string& key, const std::string& where) {
    require(obj, key, where);
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("key '" + key + "' in section '" + where + "' has the wrong type");
    }
}

air::AirDate parse_date(const std::string& text, const std::string& where) {
    air::AirDate d;
    char extra = 0;
    if (std::sscanf(text.c_str(), "%d-%d-%d%c", &d.year, &d.month, &d.day, &extra) != 3 ||
        d.month < 1 || d.month > 12 || d.day < 1 || d.day > 31)
        throw ConfigError("key '" + where + "' must be a YYYY-MM-DD date, got '" + text + "'");
    return d;
}

nn::NetSpec parse_layers(const json& arr, const std::string& where) {
    if (!arr.is_array() || arr.empty())
        throw ConfigError("'" + where + "' must be a non-empty array of layer objects");
    nn::NetSpec spec;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string at = where + "[" + std::to_string(i) + "]";
        check_keys(arr[i], {"type", "in", "out", "act"}, at);
        nn::LayerSpec ls;
        const auto type = get_required<std::string>(arr[i], "type", at);
        if (type == "dense") ls.kind = nn::LayerSpec::Kind::Dense;
        else if (type == "lstm") ls.kind = nn::LayerSpec::Kind::Lstm;
        else throw ConfigError("layer type '" + type + "' in '" + at + "' is not dense or lstm");
        ls.in = get_required<std::size_t>(arr[i], "in", at);
        ls.out = get_required<std::size_t>(arr[i], "out", at);
        const auto act = get_as<std::string>(arr[i], "act", at, "tanh");
        if (act == "tanh") ls.act = nn::Activation::Tanh;
        else if (act == "identity") ls.act = nn::Activation::Identity;
        else throw ConfigError("activation '" + act + "' in '" + at + "' is not tanh or identity");
        spec.layers.push_back(ls);
    }
    spec.validate();
    return spec;
}

progressive::LevelSpec parse_level(const json& obj, std::size_t index) {
    const std::string where = "levels[" + std::to_string(index) + "]";
    check_keys(obj,
               {"encoder", "d_in", "d_h", "encoder_nodes", "decoder_nodes", "input_pod_modes",
                "input_pod_energy", "encoder_layers", "decoder_layers"},
               where);
    progressive::LevelSpec spec;
    spec.index = index;
    spec.kind = progressive::encoder_kind_from_name(
        get_required<std::string>(obj, "encoder", where));
    spec.d_in = get_required<std::size_t>(obj, "d_in", where);
    spec.d_h = get_required<std::size_t>(obj, "d_h", where);
    spec.encoder_nodes = get_as<std::vector<std::size_t>>(obj, "encoder_nodes", where, {});
    spec.decoder_nodes = get_as<std::vector<std::size_t>>(obj, "decoder_nodes", where, {});
    spec.input_pod_modes = get_as<std::size_t>(obj, "input_pod_modes", where, 0);
    spec.input_pod_energy = get_as<double>(obj, "input_pod_energy", where, 0.9);
    if (obj.contains("encoder_layers")) {
        if (obj.contains("encoder_nodes"))
            throw ConfigError("'" + where + "' declares both encoder_nodes and encoder_layers");
        spec.encoder_override = parse_layers(obj.at("encoder_layers"), where + ".encoder_layers");
    }
    if (obj.contains("decoder_layers")) {
        if (obj.contains("decoder_nodes"))
            throw ConfigError("'" + where + "' declares both decoder_nodes and decoder_layers");
        spec.decoder_override = parse_layers(obj.at("decoder_layers"), where + ".decoder_layers");
    }
    return spec;
}

} // namespace

void RunConfig::validate() const {
    if (experiment != "rd" && experiment != "air" && experiment != "generic-files")
        throw ConfigError("experiment '" + experiment +
                          "' is not one of rd, air or generic-files");
    if (levels.empty()) throw ConfigError("section 'levels' is empty");
    if (ensemble == 0) throw ConfigError("ensemble size must be >= 1");
    train.validate();

    std::size_t d_h_sum = 0;
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const auto& spec = levels[l];
        const std::string where = "levels[" + std::to_string(l) + "]";
        if (spec.d_in == 0) throw ConfigError("'" + where + "' declares d_in = 0");
        if (spec.d_h == 0) throw ConfigError("'" + where + "' declares d_h = 0");
        if (spec.kind != progressive::EncoderKind::PodThenLstm && spec.input_pod_modes != 0)
            throw ConfigError("'" + where + "' sets input POD modes on a non-POD encoder");
        d_h_sum += spec.d_h;
        if (!spec.encoder_override.layers.empty()) {
            const std::size_t want_in = spec.kind == progressive::EncoderKind::PodThenLstm
                                            ? spec.input_pod_modes
                                            : spec.d_in;
            if (want_in != 0 && spec.encoder_override.in_dim() != want_in)
                throw ConfigError("'" + where + "' encoder layers start at " +
                                  std::to_string(spec.encoder_override.in_dim()) +
                                  " inputs but the level provides " + std::to_string(want_in));
            if (spec.encoder_override.out_dim() != spec.d_h)
                throw ConfigError("'" + where + "' encoder layers end at " +
                                  std::to_string(spec.encoder_override.out_dim()) +
                                  " outputs but d_h is " + std::to_string(spec.d_h));
        }
        if (!spec.decoder_override.layers.empty()) {
            if (spec.decoder_override.in_dim() != d_h_sum)
                throw ConfigError("'" + where + "' decoder layers start at " +
                                  std::to_string(spec.decoder_override.in_dim()) +
                                  " inputs but the concatenated latent width is " +
                                  std::to_string(d_h_sum));
            if (output.use_pod && output.pod_modes != 0 &&
                spec.decoder_override.out_dim() != output.pod_modes)
                throw ConfigError("'" + where + "' decoder layers end at " +
                                  std::to_string(spec.decoder_override.out_dim()) +
                                  " outputs but the output basis keeps " +
                                  std::to_string(output.pod_modes) + " modes");
        }
    }

    if (output.use_pod && output.pod_modes == 0 &&
        !(output.pod_energy > 0.0 && output.pod_energy <= 1.0))
        throw ConfigError("output POD needs a positive mode count or an energy in (0, 1]");

    if (experiment == "rd") {
        if (rd.train_mu.empty()) throw ConfigError("section 'rd' declares no train_mu values");
        for (double t : rd.test_mu)
            for (double m : rd.train_mu)
                if (std::abs(t - m) < 1e-12)
                    throw ConfigError("rd.test_mu value " + std::to_string(t) +
                                      " also appears in rd.train_mu");
        rd.hf.validate();
        if (rd.lf_n < 2) throw ConfigError("rd.n_lf must be at least 2");
        if (!(rd.noise_sigma >= 0.0)) throw ConfigError("rd.noise_sigma must be >= 0");
        if (!(rd.t_train > 0.0 && rd.t_train <= rd.hf.T))
            throw ConfigError("rd.t_train must lie in (0, T]");
    } else if (experiment == "air") {
        if (air_csv.empty()) throw ConfigError("section 'air' is missing 'csv'");
        air.validate();
    } else {
        if (files.times.empty()) throw ConfigError("section 'files' is missing 'times'");
        if (files.target.empty()) throw ConfigError("section 'files' is missing 'target'");
        if (files.level_inputs.size() != levels.size())
            throw ConfigError("section 'files' declares " +
                              std::to_string(files.level_inputs.size()) +
                              " level inputs for " + std::to_string(levels.size()) + " levels");
        if (!std::isfinite(files.t_train))
            throw ConfigError("files.t_train must be finite");
    }
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& ex) {
        throw ConfigError(origin + " is not valid JSON: " + ex.what());
    }
    check_keys(root,
               {"experiment", "seed", "ensemble", "levels", "output", "train", "rd", "air",
                "files", "paths"},
               "(top level)");

    RunConfig cfg;
    cfg.experiment = get_required<std::string>(root, "experiment", "(top level)");
    cfg.seed = get_as<std::uint64_t>(root, "seed", "(top level)", 0);
    cfg.ensemble = get_as<std::size_t>(root, "ensemble", "(top level)", 1);

    const json& levels = require(root, "levels", "(top level)");
    if (!levels.is_array() || levels.empty())
        throw ConfigError("'levels' must be a non-empty array");
    for (std::size_t i = 0; i < levels.size(); ++i)
        cfg.levels.push_back(parse_level(levels[i], i));

    if (root.contains("output")) {
        const json& o = root.at("output");
        check_keys(o, {"pod", "modes", "energy"}, "output");
        cfg.output.use_pod = get_as<bool>(o, "pod", "output", false);
        cfg.output.pod_modes = get_as<std::size_t>(o, "modes", "output", 0);
        cfg.output.pod_energy = get_as<double>(o, "energy", "output", 1.0);
    }

    if (root.contains("train")) {
        const json& t = root.at("train");
        check_keys(t, {"lr", "epochs", "batch", "lambda_reg", "lambda_phi", "lambda_psi",
                       "tbptt_window"},
                   "train");
        cfg.train.lr = get_as<double>(t, "lr", "train", cfg.train.lr);
        cfg.train.epochs = get_as<std::size_t>(t, "epochs", "train", cfg.train.epochs);
        const auto batch = get_as<std::size_t>(t, "batch", "train", 0);
        if (batch > 0) cfg.train.batch = batch;
        cfg.train.loss.lambda_reg =
            get_as<double>(t, "lambda_reg", "train", cfg.train.loss.lambda_reg);
        cfg.train.loss.lambda_phi =
            get_as<double>(t, "lambda_phi", "train", cfg.train.loss.lambda_phi);
        cfg.train.loss.lambda_psi =
            get_as<double>(t, "lambda_psi", "train", cfg.train.loss.lambda_psi);
        cfg.train.tbptt_window =
            get_as<std::size_t>(t, "tbptt_window", "train", cfg.train.tbptt_window);
    }

    if (root.contains("rd")) {
        const json& r = root.at("rd");
        check_keys(r, {"train_mu", "test_mu", "n_hf", "n_lf", "dt", "T", "L", "diffusion_hf",
                       "diffusion_lf", "stride", "noise_sigma", "t_train"},
                   "rd");
        cfg.rd.train_mu = get_as<std::vector<double>>(r, "train_mu", "rd", {});
        cfg.rd.test_mu = get_as<std::vector<double>>(r, "test_mu", "rd", {});
        cfg.rd.hf.n = get_as<std::size_t>(r, "n_hf", "rd", cfg.rd.hf.n);
        cfg.rd.lf_n = get_as<std::size_t>(r, "n_lf", "rd", cfg.rd.lf_n);
        cfg.rd.hf.dt = get_as<double>(r, "dt", "rd", cfg.rd.hf.dt);
        cfg.rd.hf.T = get_as<double>(r, "T", "rd", cfg.rd.hf.T);
        cfg.rd.hf.L = get_as<double>(r, "L", "rd", cfg.rd.hf.L);
        cfg.rd.hf.D = get_as<double>(r, "diffusion_hf", "rd", cfg.rd.hf.D);
        cfg.rd.lf_diffusion = get_as<double>(r, "diffusion_lf", "rd", cfg.rd.lf_diffusion);
        cfg.rd.hf.stride = get_as<std::size_t>(r, "stride", "rd", cfg.rd.hf.stride);
        cfg.rd.noise_sigma = get_as<double>(r, "noise_sigma", "rd", cfg.rd.noise_sigma);
        cfg.rd.t_train = get_as<double>(r, "t_train", "rd", cfg.rd.t_train);
    }

    if (root.contains("air")) {
        const json& a = root.at("air");
        check_keys(a, {"csv", "missing_marker", "window_start", "window_end", "train_end",
                       "max_gap_hours", "columns"},
                   "air");
        cfg.air_csv = get_as<std::string>(a, "csv", "air", "");
        cfg.air.missing_marker =
            get_as<double>(a, "missing_marker", "air", cfg.air.missing_marker);
        if (a.contains("window_start"))
            cfg.air.window_start =
                parse_date(get_required<std::string>(a, "window_start", "air"), "air.window_start");
        if (a.contains("window_end"))
            cfg.air.window_end =
                parse_date(get_required<std::string>(a, "window_end", "air"), "air.window_end");
        if (a.contains("train_end"))
            cfg.air.train_end =
                parse_date(get_required<std::string>(a, "train_end", "air"), "air.train_end");
        cfg.air.max_gap_hours =
            get_as<std::size_t>(a, "max_gap_hours", "air", cfg.air.max_gap_hours);
        if (a.contains("columns")) {
            const json& c = a.at("columns");
            check_keys(c, {"date", "time", "inputs", "target"}, "air.columns");
            cfg.air.columns.date = get_as<std::string>(c, "date", "air.columns",
                                                       cfg.air.columns.date);
            cfg.air.columns.time = get_as<std::string>(c, "time", "air.columns",
                                                       cfg.air.columns.time);
            cfg.air.columns.inputs = get_as<std::vector<std::string>>(
                c, "inputs", "air.columns", cfg.air.columns.inputs);
            cfg.air.columns.target = get_as<std::string>(c, "target", "air.columns",
                                                         cfg.air.columns.target);
        }
    }

    if (root.contains("files")) {
        const json& f = root.at("files");
        check_keys(f, {"times", "target", "level_inputs", "t_train"}, "files");
        cfg.files.times = get_as<std::string>(f, "times", "files", "");
        cfg.files.target = get_as<std::string>(f, "target", "files", "");
        cfg.files.level_inputs =
            get_as<std::vector<std::string>>(f, "level_inputs", "files", {});
        cfg.files.t_train = get_as<double>(f, "t_train", "files", 0.0);
    }

    if (root.contains("paths")) {
        const json& p = root.at("paths");
        check_keys(p, {"dataset", "model", "predictions", "metrics", "time_errors"}, "paths");
        cfg.paths.dataset = get_as<std::string>(p, "dataset", "paths", cfg.paths.dataset);
        cfg.paths.model = get_as<std::string>(p, "model", "paths", cfg.paths.model);
        cfg.paths.predictions =
            get_as<std::string>(p, "predictions", "paths", cfg.paths.predictions);
        cfg.paths.metrics = get_as<std::string>(p, "metrics", "paths", cfg.paths.metrics);
        cfg.paths.time_errors =
            get_as<std::string>(p, "time_errors", "paths", cfg.paths.time_errors);
    }

    cfg.validate();
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

} // namespace pmfs::config
