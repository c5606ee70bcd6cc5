#ifndef PMFS_EXPERIMENT_HPP
#define PMFS_EXPERIMENT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "pmfs/config.hpp"
#include "pmfs/dataio.hpp"
#include "pmfs/progressive.hpp"

namespace pmfs::experiment {

/// Materializes the configured dataset: solver runs for rd, CSV ingestion for
/// air, plain matrix files for generic-files.
data::MultiFidelityDataset build_dataset(const config::RunConfig& cfg);

/// generic-files dataset reading only the first n_levels input files.
data::MultiFidelityDataset build_files_dataset(const config::RunConfig& cfg,
                                               std::size_t n_levels);

/// The samples the model trains on. For rd this drops the held-out test
/// parameters; air and generic-files train on the time split only, so every
/// sample passes through.
data::MultiFidelityDataset training_view(const config::RunConfig& cfg,
                                         const data::MultiFidelityDataset& ds);

/// One scored slice: rows [first_row, steps) of one sample.
struct EvalPart {
    std::size_t sample = 0;
    std::size_t first_row = 0;
};

/// Where the experiment is scored: held-out parameters over the full time
/// range for rd, rows past the training horizon elsewhere.
std::vector<EvalPart> evaluation_scope(const config::RunConfig& cfg,
                                       const data::MultiFidelityDataset& ds);

/// Samples the predict command reports: held-out parameters for rd when any
/// are declared, otherwise every sample. All rows are emitted.
std::vector<std::size_t> prediction_scope(const config::RunConfig& cfg,
                                          const data::MultiFidelityDataset& ds);

/// Trains one full model (output space plus every configured level) on the
/// training view, with the given initialization seed.
progressive::ProgressiveModel train_one(const config::RunConfig& cfg,
                                        const data::MultiFidelityDataset& train_ds,
                                        std::uint64_t seed);

/// Trains the configured ensemble (seeds cfg.seed + 0..m-1).
progressive::Ensemble train_all(const config::RunConfig& cfg,
                                const data::MultiFidelityDataset& ds);

struct LevelMetrics {
    double error_percent = 0.0;
    double mean_ensemble_std = 0.0; // average predicted std over scored cells
    double max_ensemble_std = 0.0;
    std::vector<std::string> sample_ids; // one entry per scored row
    std::vector<double> times;
    std::vector<double> row_errors; // percent, aligned with times
};

struct MetricsReport {
    std::vector<LevelMetrics> levels;
    std::size_t scored_rows = 0;
    double train_seconds = 0.0; // filled by the caller when known
    double eval_seconds = 0.0;
};

/// Scores every level of the ensemble on the evaluation scope.
MetricsReport evaluate(const config::RunConfig& cfg, const progressive::Ensemble& ens,
                       const data::MultiFidelityDataset& ds);

/// CSV emission. All writes are atomic (temp file + rename) and deterministic
/// for a fixed (archive, dataset) pair.
void write_predictions_csv(const std::string& path, const config::RunConfig& cfg,
                           const progressive::Ensemble& ens,
                           const data::MultiFidelityDataset& ds, std::size_t lbar);
void write_metrics_csv(const std::string& path, const MetricsReport& report);
void write_time_errors_csv(const std::string& path, const MetricsReport& report);

/// Aligned text summary of a metrics report.
std::string format_report(const MetricsReport& report);

} // namespace pmfs::experiment

#endif
