#pragma once

#include "uqkit/data.hpp"
#include "uqkit/parallel.hpp"
#include "uqkit/tree.hpp"

#include <cstdint>
#include <vector>

#include "json.hpp"

namespace uqkit {

struct ForestConfig {
    int n_trees = 100;
    double max_features = 1.0;  // fraction of features tried per split; 1.0 = all
    int min_samples_leaf = 1;
    bool bootstrap = true;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json forest_config_to_json(const ForestConfig& config);
ForestConfig forest_config_from_json(const nlohmann::json& doc, ForestConfig base = {});

// prediction = mean of per-tree predictions
struct ForestModel {
    std::vector<RegressionTree> trees;
    std::vector<std::vector<int>> oob_indices;  // per tree, training rows not drawn
    ForestConfig config;
    std::vector<std::string> feature_names;
    double oob_mse = 0.0;    // over rows with at least one out-of-bag prediction
    int oob_covered = 0;     // number of such rows
};

// Tree t uses its own seed stream, so growing more trees leaves the first
// ones unchanged.
ForestModel fit_forest(const Dataset& train, const ForestConfig& config, Exec exec = Exec::parallel);

Eigen::VectorXd predict_forest(const ForestModel& model, const Eigen::MatrixXd& features, Exec exec = Exec::parallel);

nlohmann::json forest_to_json(const ForestModel& model);
ForestModel forest_from_json(const nlohmann::json& doc);

}  // namespace uqkit
