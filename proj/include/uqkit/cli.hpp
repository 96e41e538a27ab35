#pragma once

#include "uqkit/boosting.hpp"
#include "uqkit/forest.hpp"
#include "uqkit/gp.hpp"
#include "uqkit/parallel.hpp"
#include "uqkit/uq.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace uqkit {

struct ExperimentConfig {
    std::string data_path;
    std::string target = "target";
    std::string id_col = "id";
    std::string unit;
    Method method = Method::Quantile;
    double alpha_lo = 0.14;
    double alpha_hi = 0.84;
    std::uint64_t seed = 0;
    double target_pct = 68.0;
    int histogram_bins = 30;
    std::string out;  // output directory; not part of the config hash

    QuantileConfigs quantile;

    std::string engine = "gbdt";  // gbdt | forest, for 3split
    GbdtConfig threesplit_gbdt;
    ForestConfig threesplit_forest;

    std::optional<nlohmann::json> kernel;  // kernel spec; default RBF-ARD + white noise
    int gp_restarts = 5;
    int gp_max_iter = 200;
    std::vector<std::string> gp_features;  // descriptor subset; empty = all

    std::string search_model = "mid";  // mid | lower | upper | error
    int search_budget = 20;
};

// Canonical JSON of every setting that influences results (sorted keys).
nlohmann::json config_to_json(const ExperimentConfig& config);
// Keys present in `doc` override `base`.
ExperimentConfig config_from_json(const nlohmann::json& doc, ExperimentConfig base = {});
std::string config_hash(const ExperimentConfig& config);

// Default GP kernel for `dims` features.
KernelExpr default_kernel(int dims);

struct RunOutput {
    UqReport report;
    nlohmann::json report_json;  // report plus provenance, as written to report.json
    std::vector<std::string> ids;
    std::vector<PredictionInterval> intervals;
    Eigen::VectorXd observed;
};

// Loads, splits, trains, builds intervals and, when config.out is set, writes
// report.json, report.csv, intervals.csv, histogram.csv and models/.
RunOutput cmd_run(const ExperimentConfig& config, Exec exec = Exec::parallel);

struct CompareOutput {
    nlohmann::json json;
    std::string csv;
};

// Throws MismatchedPartitions unless all reports share property, dataset
// hash, split seed and test size.
CompareOutput cmd_compare(const std::vector<nlohmann::json>& reports);
CompareOutput cmd_compare(const std::vector<std::filesystem::path>& report_paths,
                          const std::filesystem::path& out_dir = {});

struct SearchTrial {
    GbdtConfig config;
    double score = 0.0;
};

struct SearchOutput {
    std::vector<SearchTrial> trials;
    std::size_t best = 0;
    std::string trace_csv;
};

// Random search over n_trees [100, 1000], learning_rate log-uniform
// [0.01, 0.3], max_leaves [4, 63], min_samples_leaf [1, 50], subsample and
// colsample [0.5, 1]. Scores are validation MAE (pinball loss for the lower
// and upper quantile models) on a slice of the training partition.
SearchOutput cmd_search(const ExperimentConfig& config, int budget, Exec exec = Exec::parallel);

// Fits three MSE GBDTs (seeds seed, seed+1, seed+2; row and column
// subsampling 0.8) on the training partition and intersects their top_k.
std::vector<std::string> select_descriptors_from_data(const ExperimentConfig& config, int top_k,
                                                      Exec exec = Exec::parallel);

// Histogram of half_width - |observed - center| from an intervals.csv file.
Histogram histogram_from_intervals_csv(const std::filesystem::path& path, int n_bins,
                                       std::optional<std::pair<double, double>> range = std::nullopt);

// "# config_hash=... dataset_hash=... seed=..." line that heads every CSV output.
std::string provenance_comment(const nlohmann::json& provenance);

}  // namespace uqkit
