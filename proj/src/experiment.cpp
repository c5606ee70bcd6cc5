#include "pmfs/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pmfs/air.hpp"
#include "pmfs/errors.hpp"
#include "pmfs/metrics.hpp"
#include "pmfs/rdgen.hpp"

namespace pmfs::experiment {

namespace {

std::vector<std::string> split_cells(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, delim)) out.push_back(cell);
    if (!line.empty() && line.back() == delim) out.push_back("");
    return out;
}

bool parse_cell(const std::string& cell, double& value) {
    const auto a = cell.find_first_not_of(" \t");
    if (a == std::string::npos) return false;
    const auto b = cell.find_last_not_of(" \t");
    const std::string body = cell.substr(a, b - a + 1);
    char* end = nullptr;
    value = std::strtod(body.c_str(), &end);
    return end == body.c_str() + body.size() && std::isfinite(value);
}

/// Plain numeric matrix: one row per line, ',' or ';' separated, optional
/// single header line.
Tensor read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<double> vals;
    std::size_t rows = 0, cols = 0, lineno = 0;
    bool header_skipped = false;
    char delim = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        if (delim == 0) delim = line.find(';') != std::string::npos ? ';' : ',';
        const auto cells = split_cells(line, delim);
        std::vector<double> row(cells.size());
        bool ok = true;
        std::string bad;
        for (std::size_t c = 0; c < cells.size() && ok; ++c)
            if (!parse_cell(cells[c], row[c])) {
                ok = false;
                bad = cells[c];
            }
        if (!ok) {
            if (rows == 0 && !header_skipped) {
                header_skipped = true;
                continue;
            }
            throw DataError(path + " line " + std::to_string(lineno) + ": '" + bad +
                            "' is not numeric");
        }
        if (cols == 0) cols = row.size();
        if (row.size() != cols)
            throw DataError(path + " line " + std::to_string(lineno) + ": expected " +
                            std::to_string(cols) + " cells, got " + std::to_string(row.size()));
        vals.insert(vals.end(), row.begin(), row.end());
        ++rows;
    }
    if (rows == 0) throw DataError(path + " holds no numeric rows");
    return Tensor({rows, cols}, std::move(vals));
}

Tensor tail_rows(const Tensor& t, std::size_t first) {
    const std::size_t rows = t.rows() - first;
    Tensor out = Tensor::matrix(rows, t.cols());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) out(i, j) = t(first + i, j);
    return out;
}

void atomic_write_text(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp);
        out << text;
        if (!out) throw DataError("short write to " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw DataError("cannot move " + tmp + " into place: " + ec.message());
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

bool is_test_mu(const config::RunConfig& cfg, double mu) {
    for (double t : cfg.rd.test_mu)
        if (std::abs(mu - t) < 1e-12) return true;
    return false;
}

} // namespace

data::MultiFidelityDataset build_files_dataset(const config::RunConfig& cfg,
                                               std::size_t n_levels) {
    if (n_levels > cfg.files.level_inputs.size())
        throw ConfigError("asked for " + std::to_string(n_levels) +
                          " file levels but the config lists " +
                          std::to_string(cfg.files.level_inputs.size()));
    data::MfSample s;
    s.meta.id = "files";
    Tensor times = read_matrix_csv(cfg.files.times);
    if (times.cols() != 1)
        throw DataError(cfg.files.times + " must hold a single time column, got " +
                        std::to_string(times.cols()));
    s.times = Tensor({times.rows()}, times.values());
    s.target = read_matrix_csv(cfg.files.target);
    for (std::size_t l = 0; l < n_levels; ++l)
        s.level_inputs.push_back(read_matrix_csv(cfg.files.level_inputs[l]));

    data::MultiFidelityDataset ds;
    ds.n_levels = n_levels;
    ds.t_train = cfg.files.t_train;
    ds.samples.push_back(std::move(s));
    ds.meta["experiment"] = "generic-files";
    ds.validate();
    return ds;
}

data::MultiFidelityDataset build_dataset(const config::RunConfig& cfg) {
    if (cfg.experiment == "rd") {
        rdgen::RdDatasetConfig rc;
        rc.mu_values = cfg.rd.train_mu;
        rc.mu_values.insert(rc.mu_values.end(), cfg.rd.test_mu.begin(), cfg.rd.test_mu.end());
        rc.hf = cfg.rd.hf;
        rc.lf = cfg.rd.hf;
        rc.lf.n = cfg.rd.lf_n;
        rc.lf.D = cfg.rd.lf_diffusion;
        rc.noise.sigma = cfg.rd.noise_sigma;
        rc.noise.seed = cfg.seed;
        rc.t_train = cfg.rd.t_train;
        return rdgen::build_rd_dataset(rc);
    }
    if (cfg.experiment == "air") return air::ingest_air_quality(cfg.air_csv, cfg.air);
    return build_files_dataset(cfg, cfg.levels.size());
}

data::MultiFidelityDataset training_view(const config::RunConfig& cfg,
                                         const data::MultiFidelityDataset& ds) {
    if (cfg.experiment != "rd" || cfg.rd.test_mu.empty()) return ds;
    data::MultiFidelityDataset view;
    view.n_levels = ds.n_levels;
    view.t_train = ds.t_train;
    view.meta = ds.meta;
    for (const auto& s : ds.samples)
        if (!is_test_mu(cfg, s.meta.mu)) view.samples.push_back(s);
    if (view.samples.empty())
        throw DataError("every sample is held out; nothing left to train on");
    return view;
}

std::vector<EvalPart> evaluation_scope(const config::RunConfig& cfg,
                                       const data::MultiFidelityDataset& ds) {
    std::vector<EvalPart> scope;
    if (cfg.experiment == "rd") {
        if (cfg.rd.test_mu.empty())
            throw ConfigError("rd evaluation needs held-out parameters in rd.test_mu");
        for (double t : cfg.rd.test_mu) {
            bool found = false;
            for (std::size_t i = 0; i < ds.samples.size() && !found; ++i)
                if (std::abs(ds.samples[i].meta.mu - t) < 1e-12) {
                    scope.push_back({i, 0});
                    found = true;
                }
            if (!found)
                throw DataError("held-out sample mu=" + std::to_string(t) +
                                " is not in the dataset");
        }
        return scope;
    }
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        std::size_t first = 0;
        while (first < s.steps() && ds.in_train_window(s.times[first])) ++first;
        if (first < s.steps()) scope.push_back({i, first});
    }
    if (scope.empty()) throw DataError("no rows past the training horizon to score");
    return scope;
}

std::vector<std::size_t> prediction_scope(const config::RunConfig& cfg,
                                          const data::MultiFidelityDataset& ds) {
    std::vector<std::size_t> out;
    if (cfg.experiment == "rd" && !cfg.rd.test_mu.empty()) {
        for (const auto part : evaluation_scope(cfg, ds)) out.push_back(part.sample);
        return out;
    }
    for (std::size_t i = 0; i < ds.samples.size(); ++i) out.push_back(i);
    return out;
}

progressive::ProgressiveModel train_one(const config::RunConfig& cfg,
                                        const data::MultiFidelityDataset& train_ds,
                                        std::uint64_t seed) {
    progressive::ProgressiveModel model;
    model.fit_output_space(train_ds, cfg.output.use_pod, cfg.output.pod_modes,
                           cfg.output.pod_energy);
    progressive::TrainConfig tc = cfg.train;
    tc.seed = seed;
    for (const auto& spec : cfg.levels) model.train_level(spec, train_ds, tc);
    return model;
}

progressive::Ensemble train_all(const config::RunConfig& cfg,
                                const data::MultiFidelityDataset& ds) {
    const data::MultiFidelityDataset view = training_view(cfg, ds);
    return progressive::train_ensemble(
        [&](std::uint64_t seed) { return train_one(cfg, view, seed); }, cfg.ensemble,
        cfg.seed);
}

MetricsReport evaluate(const config::RunConfig& cfg, const progressive::Ensemble& ens,
                       const data::MultiFidelityDataset& ds) {
    if (ens.members.empty()) throw OrderingError("the ensemble holds no members");
    const auto& model = ens.members.front();
    if (model.n_levels() != cfg.levels.size())
        throw ConfigError("the archive holds " + std::to_string(model.n_levels()) +
                          " levels but the config declares " +
                          std::to_string(cfg.levels.size()));
    if (ds.n_levels < model.n_levels())
        throw ShapeError("the dataset carries " + std::to_string(ds.n_levels) +
                         " levels, fewer than the model's " +
                         std::to_string(model.n_levels()));

    const auto scope = evaluation_scope(cfg, ds);
    MetricsReport report;
    report.levels.resize(model.n_levels());
    for (std::size_t l = 0; l < model.n_levels(); ++l) {
        LevelMetrics& lm = report.levels[l];
        double err_sum = 0.0, std_sum = 0.0;
        std::size_t rows = 0, cells = 0;
        for (const auto& part : scope) {
            const data::MfSample& s = ds.samples[part.sample];
            std::vector<const Tensor*> inputs;
            for (std::size_t j = 0; j <= l; ++j) inputs.push_back(&s.level_inputs[j]);
            const auto stats = progressive::ensemble_stats(ens, inputs, l);
            const Tensor mean_phys =
                model.coeffs_to_physical(tail_rows(stats.mean, part.first_row));
            const Tensor ref = tail_rows(s.target, part.first_row);
            const auto row_errs = metrics::rowwise_relative_error(mean_phys, ref, s.meta.id);
            for (std::size_t i = 0; i < row_errs.size(); ++i) {
                lm.sample_ids.push_back(s.meta.id);
                lm.times.push_back(s.times[part.first_row + i]);
                lm.row_errors.push_back(row_errs[i]);
                err_sum += row_errs[i];
            }
            rows += row_errs.size();
            for (std::size_t i = part.first_row; i < stats.std.rows(); ++i)
                for (std::size_t j = 0; j < stats.std.cols(); ++j) {
                    const double v = stats.std(i, j);
                    std_sum += v;
                    lm.max_ensemble_std = std::max(lm.max_ensemble_std, v);
                    ++cells;
                }
        }
        lm.error_percent = err_sum / double(rows);
        lm.mean_ensemble_std = cells ? std_sum / double(cells) : 0.0;
        report.scored_rows = rows;
    }
    return report;
}

void write_predictions_csv(const std::string& path, const config::RunConfig& cfg,
                           const progressive::Ensemble& ens,
                           const data::MultiFidelityDataset& ds, std::size_t lbar) {
    if (ens.members.empty()) throw OrderingError("the ensemble holds no members");
    if (lbar >= ens.members.front().n_levels())
        throw ConfigError("level " + std::to_string(lbar) + " is out of range; the model has " +
                          std::to_string(ens.members.front().n_levels()) + " levels");
    if (ds.n_levels <= lbar)
        throw ShapeError("the dataset carries " + std::to_string(ds.n_levels) +
                         " levels; level " + std::to_string(lbar) + " inputs are missing");

    std::ostringstream out;
    out << "time,sample_id,channel,mean,std\n";
    for (std::size_t idx : prediction_scope(cfg, ds)) {
        const data::MfSample& s = ds.samples[idx];
        std::vector<const Tensor*> inputs;
        for (std::size_t j = 0; j <= lbar; ++j) inputs.push_back(&s.level_inputs[j]);
        const auto stats = progressive::ensemble_stats(ens, inputs, lbar);
        for (std::size_t k = 0; k < stats.mean.rows(); ++k)
            for (std::size_t c = 0; c < stats.mean.cols(); ++c)
                out << num(s.times[k]) << ',' << s.meta.id << ',' << c << ','
                    << num(stats.mean(k, c)) << ',' << num(stats.std(k, c)) << '\n';
    }
    atomic_write_text(path, out.str());
}

void write_metrics_csv(const std::string& path, const MetricsReport& report) {
    std::ostringstream out;
    out << "level,relative_error_percent\n";
    for (std::size_t l = 0; l < report.levels.size(); ++l)
        out << l << ',' << num(report.levels[l].error_percent) << '\n';
    atomic_write_text(path, out.str());
}

void write_time_errors_csv(const std::string& path, const MetricsReport& report) {
    std::ostringstream out;
    out << "level,sample_id,time,relative_error_percent\n";
    for (std::size_t l = 0; l < report.levels.size(); ++l) {
        const LevelMetrics& lm = report.levels[l];
        for (std::size_t i = 0; i < lm.times.size(); ++i)
            out << l << ',' << lm.sample_ids[i] << ',' << num(lm.times[i]) << ','
                << num(lm.row_errors[i]) << '\n';
    }
    atomic_write_text(path, out.str());
}

std::string format_report(const MetricsReport& report) {
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%5s  %16s  %12s  %12s\n", "level", "rel_error_%",
                  "mean_std", "max_std");
    out << buf;
    for (std::size_t l = 0; l < report.levels.size(); ++l) {
        const LevelMetrics& lm = report.levels[l];
        std::snprintf(buf, sizeof(buf), "%5zu  %16.3f  %12.4g  %12.4g\n", l,
                      lm.error_percent, lm.mean_ensemble_std, lm.max_ensemble_std);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "scored rows per level: %zu\n", report.scored_rows);
    out << buf;
    if (report.train_seconds > 0.0) {
        std::snprintf(buf, sizeof(buf), "training time: %.1f s\n", report.train_seconds);
        out << buf;
    }
    if (report.eval_seconds > 0.0) {
        std::snprintf(buf, sizeof(buf), "evaluation time: %.1f s\n", report.eval_seconds);
        out << buf;
    }
    return out.str();
}

} // namespace pmfs::experiment
