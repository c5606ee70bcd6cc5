#ifndef PMFS_CONFIG_HPP
#define PMFS_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "pmfs/air.hpp"
#include "pmfs/progressive.hpp"
#include "pmfs/rdgen.hpp"

namespace pmfs::config {

struct OutputSpace {
    bool use_pod = false;
    std::size_t pod_modes = 0;
    double pod_energy = 1.0;
};

struct RdExperiment {
    std::vector<double> train_mu;
    std::vector<double> test_mu;
    rdgen::RdConfig hf;
    std::size_t lf_n = 32;
    double lf_diffusion = 0.1;
    double noise_sigma = 0.8;
    double t_train = 40.0;
};

/// One trajectory assembled from plain numeric CSV matrices, one file per
/// level. Level files are opened lazily, so predicting up to some level never
/// touches the files above it.
struct FilesExperiment {
    std::string times;
    std::string target;
    std::vector<std::string> level_inputs;
    double t_train = 0.0;
};

struct Paths {
    std::string dataset = "dataset.pmfs";
    std::string model = "model.pmfs";
    std::string predictions = "predictions.csv";
    std::string metrics = "metrics.csv";
    std::string time_errors; // empty disables the per-snapshot error table
};

struct RunConfig {
    std::string experiment; // rd | air | generic-files
    std::uint64_t seed = 0;
    std::size_t ensemble = 1;
    std::vector<progressive::LevelSpec> levels;
    OutputSpace output;
    progressive::TrainConfig train;
    RdExperiment rd;
    air::AirIngestConfig air;
    std::string air_csv;
    FilesExperiment files;
    Paths paths;

    void validate() const;
};

RunConfig parse_config(const std::string& path);
/// Parses config text directly; origin names the source in diagnostics.
RunConfig parse_config_text(const std::string& text, const std::string& origin);

} // namespace pmfs::config

#endif
