#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pmfs/errors.hpp"
#include "pmfs/experiment.hpp"
#include "pmfs/rng.hpp"

using namespace pmfs;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
    static fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "pmfs_experiment_tests";
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

data::MultiFidelityDataset smooth_dataset(const std::vector<std::size_t>& dims, std::size_t d_out,
                                          std::size_t n_samples, std::size_t K, double t_train,
                                          std::uint64_t seed) {
    data::MultiFidelityDataset ds;
    ds.n_levels = dims.size();
    ds.t_train = t_train;
    Rng rng(seed);
    for (std::size_t s = 0; s < n_samples; ++s) {
        data::MfSample smp;
        smp.meta.id = "s" + std::to_string(s);
        smp.meta.mu = 0.5 + 0.1 * double(s);
        smp.times = Tensor({K});
        for (std::size_t k = 0; k < K; ++k) smp.times[k] = double(k);
        for (std::size_t l = 0; l < dims.size(); ++l) {
            Tensor x = Tensor::matrix(K, dims[l]);
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t c = 0; c < dims[l]; ++c)
                    x(k, c) = std::sin(0.2 * double(k) + 0.7 * double(c) + smp.meta.mu) +
                              0.05 * rng.normal();
            smp.level_inputs.push_back(std::move(x));
        }
        smp.target = Tensor::matrix(K, d_out);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t c = 0; c < d_out; ++c)
                smp.target(k, c) = 1.0 + std::cos(0.15 * double(k) + 0.3 * double(c)) *
                                             smp.meta.mu;
        ds.samples.push_back(std::move(smp));
    }
    return ds;
}

config::RunConfig files_config(const fs::path& dir, std::size_t levels) {
    config::RunConfig cfg;
    cfg.experiment = "generic-files";
    cfg.files.times = (dir / "times.csv").string();
    cfg.files.target = (dir / "target.csv").string();
    for (std::size_t l = 0; l < levels; ++l)
        cfg.files.level_inputs.push_back((dir / ("level" + std::to_string(l) + ".csv")).string());
    cfg.files.t_train = 2.5;
    return cfg;
}

config::RunConfig training_config(std::size_t levels) {
    config::RunConfig cfg;
    cfg.experiment = "generic-files";
    cfg.files.t_train = 5.5;
    for (std::size_t l = 0; l < levels; ++l) {
        progressive::LevelSpec spec;
        spec.index = l;
        spec.kind = progressive::EncoderKind::Lstm;
        spec.d_in = 2;
        spec.d_h = 2;
        spec.encoder_nodes = {5};
        spec.decoder_nodes = {6};
        cfg.levels.push_back(spec);
        cfg.files.level_inputs.push_back("unused" + std::to_string(l) + ".csv");
    }
    cfg.files.times = "unused_times.csv";
    cfg.files.target = "unused_target.csv";
    cfg.train.lr = 1e-2;
    cfg.train.epochs = 60;
    cfg.train.loss.lambda_reg = 1e-6;
    cfg.seed = 5;
    cfg.ensemble = 2;
    cfg.validate();
    return cfg;
}

} // namespace

TEST_CASE("generic-files datasets come straight from CSV matrices") {
    const fs::path dir = test_dir() / "files_ds";
    fs::create_directories(dir);
    write_text(dir / "times.csv", "t\n0\n1\n2\n3\n4\n5\n");
    write_text(dir / "target.csv",
               "y0,y1\n0.0,1.0\n0.5,1.5\n1.0,2.0\n1.5,2.5\n2.0,3.0\n2.5,3.5\n");
    write_text(dir / "level0.csv", "0,0\n1,1\n2,2\n3,3\n4,4\n5,5\n");
    write_text(dir / "level1.csv", "0;1;2\n1;2;3\n2;3;4\n3;4;5\n4;5;6\n5;6;7\n");

    config::RunConfig cfg = files_config(dir, 2);
    const auto ds = experiment::build_files_dataset(cfg, 2);
    CHECK(ds.n_levels == 2);
    REQUIRE(ds.samples.size() == 1);
    CHECK(ds.samples[0].steps() == 6);
    CHECK(ds.samples[0].level_inputs[0].cols() == 2);
    CHECK(ds.samples[0].level_inputs[1].cols() == 3);
    CHECK(ds.samples[0].target(2, 1) == 2.0);
    CHECK(ds.samples[0].times[5] == 5.0);
    CHECK(ds.t_train == 2.5);

    const auto scope = experiment::evaluation_scope(cfg, ds);
    REQUIRE(scope.size() == 1);
    CHECK(scope[0].first_row == 3);

    SUBCASE("level files above the requested depth are never opened") {
        fs::remove(dir / "level1.csv");
        const auto shallow = experiment::build_files_dataset(cfg, 1);
        CHECK(shallow.n_levels == 1);
        CHECK(shallow.samples[0].level_inputs.size() == 1);
        CHECK_THROWS_AS(experiment::build_files_dataset(cfg, 2), DataError);
        write_text(dir / "level1.csv", "0;1;2\n1;2;3\n2;3;4\n3;4;5\n4;5;6\n5;6;7\n");
    }

    SUBCASE("malformed matrices are rejected with their location") {
        write_text(dir / "bad.csv", "1,2\n3\n");
        cfg.files.target = (dir / "bad.csv").string();
        CHECK_THROWS_WITH_AS(experiment::build_files_dataset(cfg, 2),
                             doctest::Contains("line 2"), DataError);
        write_text(dir / "worse.csv", "h1,h2\n1,2\n3,oops\n");
        cfg.files.target = (dir / "worse.csv").string();
        CHECK_THROWS_WITH_AS(experiment::build_files_dataset(cfg, 2),
                             doctest::Contains("oops"), DataError);
        cfg.files.times = (dir / "target.csv").string();
        cfg.files.target = (dir / "target.csv").string();
        CHECK_THROWS_WITH_AS(experiment::build_files_dataset(cfg, 2),
                             doctest::Contains("single time column"), DataError);
    }
}

TEST_CASE("held-out parameters are excluded from training and drive evaluation") {
    auto ds = smooth_dataset({2, 2}, 3, 4, 6, 3.5, 9);
    ds.samples[1].meta.mu = 1.05;
    ds.samples[1].meta.id = "mu=1.05";

    config::RunConfig cfg;
    cfg.experiment = "rd";
    cfg.rd.train_mu = {0.5, 0.7, 0.8};
    cfg.rd.test_mu = {1.05};

    const auto view = experiment::training_view(cfg, ds);
    CHECK(view.samples.size() == 3);
    for (const auto& s : view.samples) CHECK(s.meta.mu != 1.05);

    const auto scope = experiment::evaluation_scope(cfg, ds);
    REQUIRE(scope.size() == 1);
    CHECK(scope[0].sample == 1);
    CHECK(scope[0].first_row == 0);

    const auto preds = experiment::prediction_scope(cfg, ds);
    CHECK(preds == std::vector<std::size_t>{1});

    cfg.rd.test_mu = {0.42};
    CHECK_THROWS_WITH_AS(experiment::evaluation_scope(cfg, ds), doctest::Contains("0.42"),
                         DataError);

    cfg.rd.test_mu = {};
    CHECK_THROWS_AS(experiment::evaluation_scope(cfg, ds), ConfigError);
    CHECK(experiment::prediction_scope(cfg, ds).size() == 4);
    CHECK(experiment::training_view(cfg, ds).samples.size() == 4);
}

TEST_CASE("trained ensembles are scored and reported deterministically") {
    const auto ds = smooth_dataset({2, 2}, 3, 3, 10, 5.5, 31);
    const auto cfg = training_config(2);

    const auto ens = experiment::train_all(cfg, ds);
    REQUIRE(ens.size() == 2);
    CHECK(ens.members[0].n_levels() == 2);

    auto report = experiment::evaluate(cfg, ens, ds);
    REQUIRE(report.levels.size() == 2);
    CHECK(report.scored_rows == 3 * 4);
    for (const auto& lm : report.levels) {
        CHECK(lm.error_percent >= 0.0);
        CHECK(std::isfinite(lm.error_percent));
        CHECK(lm.times.size() == report.scored_rows);
        CHECK(lm.row_errors.size() == report.scored_rows);
        CHECK(lm.sample_ids.size() == report.scored_rows);
        CHECK(lm.mean_ensemble_std >= 0.0);
        CHECK(lm.max_ensemble_std >= lm.mean_ensemble_std);
    }
    CHECK(report.levels[0].times.front() == 6.0);

    const fs::path dir = test_dir() / "reports";
    fs::create_directories(dir);
    const std::string metrics_path = (dir / "metrics.csv").string();
    const std::string preds_path = (dir / "predictions.csv").string();
    const std::string times_path = (dir / "time_errors.csv").string();

    experiment::write_metrics_csv(metrics_path, report);
    const std::string metrics_text = read_text(metrics_path);
    CHECK(metrics_text.rfind("level,relative_error_percent\n", 0) == 0);
    CHECK(std::count(metrics_text.begin(), metrics_text.end(), '\n') == 3);

    experiment::write_predictions_csv(preds_path, cfg, ens, ds, 1);
    const std::string preds_text = read_text(preds_path);
    CHECK(preds_text.rfind("time,sample_id,channel,mean,std\n", 0) == 0);
    CHECK(std::count(preds_text.begin(), preds_text.end(), '\n') == 1 + 3 * 10 * 3);

    experiment::write_time_errors_csv(times_path, report);
    const std::string times_text = read_text(times_path);
    CHECK(times_text.rfind("level,sample_id,time,relative_error_percent\n", 0) == 0);
    CHECK(std::count(times_text.begin(), times_text.end(), '\n') == 1 + 2 * 12);

    SUBCASE("re-running the pipeline reproduces every byte") {
        const auto ens2 = experiment::train_all(cfg, ds);
        auto report2 = experiment::evaluate(cfg, ens2, ds);
        experiment::write_metrics_csv(metrics_path, report2);
        experiment::write_predictions_csv(preds_path, cfg, ens2, ds, 1);
        experiment::write_time_errors_csv(times_path, report2);
        CHECK(read_text(metrics_path) == metrics_text);
        CHECK(read_text(preds_path) == preds_text);
        CHECK(read_text(times_path) == times_text);
    }

    SUBCASE("the text report carries every level and the runtime lines") {
        report.train_seconds = 12.5;
        report.eval_seconds = 0.25;
        const std::string text = format_report(report);
        CHECK(text.find("rel_error_%") != std::string::npos);
        CHECK(text.find("training time") != std::string::npos);
        CHECK(text.find("evaluation time") != std::string::npos);
        CHECK(std::count(text.begin(), text.end(), '\n') >= 4);
    }

    SUBCASE("level/config mismatches are caught") {
        auto wrong = cfg;
        wrong.levels.pop_back();
        CHECK_THROWS_WITH_AS(experiment::evaluate(wrong, ens, ds), doctest::Contains("declares 1"),
                             ConfigError);
        CHECK_THROWS_AS(experiment::write_predictions_csv(preds_path, cfg, ens, ds, 7),
                        ConfigError);
    }
}

TEST_CASE("reaction-diffusion configs map onto the generator") {
    config::RunConfig cfg;
    cfg.experiment = "rd";
    cfg.seed = 77;
    cfg.rd.train_mu = {0.6, 1.2};
    cfg.rd.test_mu = {0.9};
    cfg.rd.hf.n = 12;
    cfg.rd.lf_n = 6;
    cfg.rd.hf.dt = 0.05;
    cfg.rd.hf.T = 0.8;
    cfg.rd.hf.stride = 4;
    cfg.rd.lf_diffusion = 0.12;
    cfg.rd.noise_sigma = 0.3;
    cfg.rd.t_train = 0.4;

    const auto ds = experiment::build_dataset(cfg);
    CHECK(ds.n_levels == 3);
    REQUIRE(ds.samples.size() == 3);
    CHECK(ds.samples[0].meta.mu == 0.6);
    CHECK(ds.samples[1].meta.mu == 1.2);
    CHECK(ds.samples[2].meta.mu == 0.9);
    CHECK(ds.samples[0].level_inputs[0].cols() == 2);
    CHECK(ds.samples[0].level_inputs[1].cols() == 4);
    CHECK(ds.samples[0].level_inputs[2].cols() == 36);
    CHECK(ds.samples[0].target.cols() == 144);
    CHECK(ds.t_train == 0.4);
    CHECK(ds.samples[0].steps() == 5);

    const auto again = experiment::build_dataset(cfg);
    CHECK(again.samples[2].target.values() == ds.samples[2].target.values());
}
