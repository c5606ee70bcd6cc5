#include "pmfs/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "pmfs/air.hpp"
#include "pmfs/config.hpp"
#include "pmfs/dataio.hpp"
#include "pmfs/errors.hpp"
#include "pmfs/experiment.hpp"
#include "pmfs/progressive.hpp"

namespace pmfs::cli {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Accepts both single-model and ensemble archives.
progressive::Ensemble load_any(const std::string& path) {
    data::ArchiveReader probe(path);
    if (probe.kind() == data::ArchiveKind::Model) {
        progressive::Ensemble ens;
        ens.members.push_back(progressive::load_model(path));
        ens.seeds.push_back(0);
        return ens;
    }
    return progressive::load_ensemble(path);
}

void apply_column_overrides(air::AirColumnMap& columns, const std::string& spec) {
    std::istringstream ss(spec);
    std::string pair;
    while (std::getline(ss, pair, ',')) {
        if (pair.empty()) continue;
        const auto eq = pair.find('=');
        if (eq == std::string::npos)
            throw ConfigError("column override '" + pair + "' is not key=value");
        const std::string key = pair.substr(0, eq);
        const std::string value = pair.substr(eq + 1);
        if (key == "date") columns.date = value;
        else if (key == "time") columns.time = value;
        else if (key == "target") columns.target = value;
        else if (key.rfind("input", 0) == 0) {
            const std::string idx = key.substr(5);
            char* end = nullptr;
            const unsigned long i = std::strtoul(idx.c_str(), &end, 10);
            if (idx.empty() || end != idx.c_str() + idx.size() || i >= columns.inputs.size())
                throw ConfigError("column override key '" + key + "' is not a valid input slot");
            columns.inputs[i] = value;
        } else {
            throw ConfigError("column override key '" + key +
                              "' is not date, time, target or inputN");
        }
    }
}

data::MultiFidelityDataset load_experiment_dataset(const config::RunConfig& cfg) {
    if (cfg.experiment == "generic-files") return experiment::build_dataset(cfg);
    return data::load_dataset(cfg.paths.dataset);
}

struct Options {
    std::string config_path;
    std::string out_path;
    std::string columns;
    double missing_marker = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::size_t ensemble = 0;
    std::size_t level = std::numeric_limits<std::size_t>::max();
};

int dispatch(const std::string& command, const Options& opt, std::ostream& out) {
    config::RunConfig cfg = config::parse_config(opt.config_path);
    if (opt.seed_given) cfg.seed = opt.seed;
    if (opt.ensemble > 0) cfg.ensemble = opt.ensemble;

    if (command == "gen-rd") {
        if (cfg.experiment != "rd")
            throw ConfigError("gen-rd needs an rd config, got experiment '" + cfg.experiment +
                              "'");
        const std::string path = opt.out_path.empty() ? cfg.paths.dataset : opt.out_path;
        const auto t0 = std::chrono::steady_clock::now();
        const auto ds = experiment::build_dataset(cfg);
        data::save_dataset(path, ds);
        out << "wrote " << path << ": " << ds.samples.size() << " samples, "
            << ds.samples.front().steps() << " steps each (" << seconds_since(t0) << " s)\n";
        return 0;
    }

    if (command == "ingest-air") {
        if (cfg.experiment != "air")
            throw ConfigError("ingest-air needs an air config, got experiment '" +
                              cfg.experiment + "'");
        if (!opt.columns.empty()) apply_column_overrides(cfg.air.columns, opt.columns);
        if (!std::isnan(opt.missing_marker)) cfg.air.missing_marker = opt.missing_marker;
        cfg.air.validate();
        const std::string path = opt.out_path.empty() ? cfg.paths.dataset : opt.out_path;
        const auto ds = air::ingest_air_quality(cfg.air_csv, cfg.air);
        data::save_dataset(path, ds);
        std::size_t rows = 0;
        for (const auto& s : ds.samples) rows += s.steps();
        out << "wrote " << path << ": " << ds.samples.size() << " segments, " << rows
            << " hourly rows, " << ds.meta.at("imputed_cells") << " imputed cells\n";
        return 0;
    }

    if (command == "train") {
        const std::string path = opt.out_path.empty() ? cfg.paths.model : opt.out_path;
        const auto ds = load_experiment_dataset(cfg);
        const auto t0 = std::chrono::steady_clock::now();
        const auto ens = experiment::train_all(cfg, ds);
        const double dt = seconds_since(t0);
        progressive::save_ensemble(path, ens);
        out << "trained " << ens.size() << (ens.size() == 1 ? " member" : " members") << " x "
            << cfg.levels.size() << " levels in " << dt << " s\n";
        for (std::size_t l = 0; l < cfg.levels.size(); ++l)
            out << "  level " << l << " final loss (member 0): "
                << ens.members.front().level(l).final_loss << "\n";
        out << "wrote " << path << "\n";
        return 0;
    }

    if (command == "predict") {
        const auto ens = load_any(cfg.paths.model);
        const std::size_t top = ens.members.front().n_levels() - 1;
        const std::size_t lbar =
            opt.level == std::numeric_limits<std::size_t>::max() ? top : opt.level;
        if (lbar > top)
            throw ConfigError("level " + std::to_string(lbar) +
                              " is out of range; the model has " + std::to_string(top + 1) +
                              " levels");
        const auto ds = cfg.experiment == "generic-files"
                            ? experiment::build_files_dataset(cfg, lbar + 1)
                            : data::load_dataset(cfg.paths.dataset);
        const std::string path = opt.out_path.empty() ? cfg.paths.predictions : opt.out_path;
        experiment::write_predictions_csv(path, cfg, ens, ds, lbar);
        out << "wrote " << path << " (level " << lbar << ", " << ens.size()
            << (ens.size() == 1 ? " member)" : " members)") << "\n";
        return 0;
    }

    // evaluate
    const auto ens = load_any(cfg.paths.model);
    const auto ds = load_experiment_dataset(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    auto report = experiment::evaluate(cfg, ens, ds);
    report.eval_seconds = seconds_since(t0);
    const std::string path = opt.out_path.empty() ? cfg.paths.metrics : opt.out_path;
    experiment::write_metrics_csv(path, report);
    if (!cfg.paths.time_errors.empty())
        experiment::write_time_errors_csv(cfg.paths.time_errors, report);
    out << format_report(report);
    out << "wrote " << path << "\n";
    if (!cfg.paths.time_errors.empty()) out << "wrote " << cfg.paths.time_errors << "\n";
    return 0;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"progressive multi-fidelity surrogate toolkit"};
    app.name("pmfs");
    app.require_subcommand(1);

    Options opt;
    std::string command;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", opt.config_path, "JSON run configuration")->required();
        sub->add_option("-o,--out", opt.out_path, "override the command's output path");
        sub->callback([&, sub] { command = sub->get_name(); });
    };

    CLI::App* gen = app.add_subcommand("gen-rd", "solve and store the reaction-diffusion dataset");
    add_common(gen);
    gen->add_option("--seed", opt.seed, "override the config seed")
        ->each([&](const std::string&) { opt.seed_given = true; });

    CLI::App* ingest = app.add_subcommand("ingest-air", "ingest the air-quality CSV");
    add_common(ingest);
    ingest->add_option("--columns", opt.columns,
                       "override column names, e.g. date=Date,input0=T,target=C6H6(GT)");
    ingest->add_option("--missing-marker", opt.missing_marker,
                       "override the missing-value marker");

    CLI::App* train = app.add_subcommand("train", "train the progressive model ensemble");
    add_common(train);
    train->add_option("--seed", opt.seed, "override the config seed")
        ->each([&](const std::string&) { opt.seed_given = true; });
    train->add_option("-m,--ensemble", opt.ensemble, "override the ensemble size");

    CLI::App* predict = app.add_subcommand("predict", "emit mean/std predictions as CSV");
    add_common(predict);
    predict->add_option("-l,--level", opt.level,
                        "highest level to use (default: the model's top level)");

    CLI::App* evaluate = app.add_subcommand("evaluate", "score every level and emit metrics");
    add_common(evaluate);

    try {
        app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        return dispatch(command, opt, out);
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return 1;
    }
}

} // namespace pmfs::cli
