#pragma once

#include "uqkit/data.hpp"
#include "uqkit/loss.hpp"
#include "uqkit/parallel.hpp"
#include "uqkit/tree.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace uqkit {

struct GbdtConfig {
    int n_trees = 500;
    double learning_rate = 0.05;
    int max_leaves = 31;
    int min_samples_leaf = 5;
    double subsample = 1.0;
    double colsample = 1.0;
    std::uint64_t seed = 0;
    Objective objective = Objective::mse();

    void validate() const;
};

nlohmann::json gbdt_config_to_json(const GbdtConfig& config);
// Missing keys keep the values from `base`.
GbdtConfig gbdt_config_from_json(const nlohmann::json& doc, GbdtConfig base = {});

// prediction = base_score + learning_rate * sum of tree outputs
struct GbdtModel {
    double base_score = 0.0;
    std::vector<RegressionTree> trees;
    GbdtConfig config;
    std::vector<std::string> feature_names;
    bool degenerate_features = false;  // all training features constant; no trees were grown

    bool operator==(const GbdtModel& other) const;
};

GbdtModel fit_gbdt(const Dataset& train, const GbdtConfig& config, Exec exec = Exec::parallel);

// Uses the first `n_trees` trees when given (staged prediction).
Eigen::VectorXd predict_gbdt(const GbdtModel& model, const Eigen::MatrixXd& features,
                             std::optional<int> n_trees = std::nullopt, Exec exec = Exec::parallel);

struct FeatureGain {
    std::string name;
    double gain = 0.0;
};

// All features, total split gain descending, ties by feature index.
std::vector<FeatureGain> feature_importance(const GbdtModel& model);

nlohmann::json gbdt_to_json(const GbdtModel& model);
GbdtModel gbdt_from_json(const nlohmann::json& doc);

}  // namespace uqkit
