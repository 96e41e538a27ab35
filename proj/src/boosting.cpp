#include "uqkit/boosting.hpp"

#include "uqkit/error.hpp"
#include "uqkit/random.hpp"
#include "uqkit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace uqkit {

void GbdtConfig::validate() const {
    require(n_trees >= 1, ErrorCode::InvalidArgument, "n_trees must be >= 1");
    require(learning_rate > 0.0 && learning_rate <= 1.0, ErrorCode::InvalidArgument,
            "learning_rate must lie in (0, 1]");
    require(max_leaves >= 2, ErrorCode::InvalidArgument, "max_leaves must be >= 2");
    require(min_samples_leaf >= 1, ErrorCode::InvalidArgument, "min_samples_leaf must be >= 1");
    require(subsample > 0.0 && subsample <= 1.0, ErrorCode::InvalidArgument, "subsample must lie in (0, 1]");
    require(colsample > 0.0 && colsample <= 1.0, ErrorCode::InvalidArgument, "colsample must lie in (0, 1]");
}

nlohmann::json gbdt_config_to_json(const GbdtConfig& c) {
    nlohmann::json objective = {{"kind", c.objective.name()}};
    if (c.objective.kind() == LossKind::Quantile) objective["alpha"] = c.objective.alpha();
    return {{"n_trees", c.n_trees},         {"learning_rate", c.learning_rate},
            {"max_leaves", c.max_leaves},   {"min_samples_leaf", c.min_samples_leaf},
            {"subsample", c.subsample},     {"colsample", c.colsample},
            {"seed", c.seed},               {"objective", objective}};
}

GbdtConfig gbdt_config_from_json(const nlohmann::json& doc, GbdtConfig c) {
    c.n_trees = doc.value("n_trees", c.n_trees);
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    c.max_leaves = doc.value("max_leaves", c.max_leaves);
    c.min_samples_leaf = doc.value("min_samples_leaf", c.min_samples_leaf);
    c.subsample = doc.value("subsample", c.subsample);
    c.colsample = doc.value("colsample", c.colsample);
    c.seed = doc.value("seed", c.seed);
    if (doc.contains("objective")) {
        const auto& o = doc["objective"];
        if (o.is_string()) {
            c.objective = objective_from_string(o.get<std::string>(), c.objective.alpha() > 0 ? c.objective.alpha() : 0.5);
        } else {
            c.objective = objective_from_string(o.at("kind").get<std::string>(), o.value("alpha", 0.5));
        }
    }
    c.validate();
    return c;
}

bool GbdtModel::operator==(const GbdtModel& other) const {
    return base_score == other.base_score && trees == other.trees && feature_names == other.feature_names &&
           degenerate_features == other.degenerate_features &&
           gbdt_config_to_json(config) == gbdt_config_to_json(other.config);
}

namespace {

double initial_score(const Objective& obj, const Eigen::VectorXd& y) {
    std::vector<double> values(y.data(), y.data() + y.size());
    switch (obj.kind()) {
        case LossKind::MSE: return mean(values);
        case LossKind::MAE: return empirical_quantile(std::move(values), 0.5);
        case LossKind::Quantile: return empirical_quantile(std::move(values), obj.alpha());
    }
    return 0.0;
}

bool all_features_constant(const Eigen::MatrixXd& X) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        if (X.col(j).minCoeff() != X.col(j).maxCoeff()) return false;
    }
    return true;
}

}  // namespace

GbdtModel fit_gbdt(const Dataset& train, const GbdtConfig& config, Exec exec) {
    config.validate();
    const auto n = static_cast<int>(train.size());
    require(n >= 2 * config.min_samples_leaf && n >= 1, ErrorCode::TooFewSamples,
            "GBDT needs at least 2*min_samples_leaf samples, got " + std::to_string(n));

    GbdtModel model;
    model.config = config;
    model.feature_names = train.feature_names;
    model.base_score = initial_score(config.objective, train.targets);
    if (train.dims() == 0 || all_features_constant(train.features)) {
        model.degenerate_features = true;
        return model;
    }

    const Eigen::MatrixXd& X = train.features;
    const Eigen::VectorXd& y = train.targets;
    const int d = static_cast<int>(train.dims());
    const bool refit_leaves = config.objective.kind() != LossKind::MSE;
    const int sample_size = std::max(2 * config.min_samples_leaf,
                                     static_cast<int>(std::floor(config.subsample * n)));
    const int feature_count = std::max(1, static_cast<int>(std::lround(config.colsample * d)));

    Eigen::VectorXd pred = Eigen::VectorXd::Constant(n, model.base_score);
    std::vector<int> all_rows(static_cast<std::size_t>(n));
    std::iota(all_rows.begin(), all_rows.end(), 0);
    std::vector<int> all_features(static_cast<std::size_t>(d));
    std::iota(all_features.begin(), all_features.end(), 0);

    GrowParams grow;
    grow.max_leaves = config.max_leaves;
    grow.min_samples_leaf = config.min_samples_leaf;
    grow.exec = exec;

    model.trees.reserve(static_cast<std::size_t>(config.n_trees));
    for (int t = 0; t < config.n_trees; ++t) {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(t)));
        const std::vector<int> rows =
            sample_size < n ? sample_without_replacement(rng, n, sample_size) : all_rows;
        const std::vector<int> features =
            feature_count < d ? sample_without_replacement(rng, d, feature_count) : all_features;

        std::vector<double> obs(rows.size());
        std::vector<double> cur(rows.size());
        for (std::size_t p = 0; p < rows.size(); ++p) {
            obs[p] = y(rows[p]);
            cur[p] = pred(rows[p]);
        }
        auto stats = loss_grad_hess(config.objective, obs, cur);
        auto grown = grow_tree(X, rows, stats.gradient, stats.hessian, features, grow, rng);

        if (refit_leaves) {
            const double q = config.objective.kind() == LossKind::Quantile ? config.objective.alpha() : 0.5;
            std::vector<std::vector<double>> residuals(grown.tree.nodes.size());
            for (std::size_t p = 0; p < rows.size(); ++p) {
                residuals[static_cast<std::size_t>(grown.leaf_of[p])].push_back(obs[p] - cur[p]);
            }
            for (std::size_t id = 0; id < grown.tree.nodes.size(); ++id) {
                if (grown.tree.nodes[id].is_leaf() && !residuals[id].empty()) {
                    grown.tree.nodes[id].value = empirical_quantile(std::move(residuals[id]), q);
                }
            }
        }
        for (int r = 0; r < n; ++r) pred(r) += config.learning_rate * grown.tree.predict(X, r);
        model.trees.push_back(std::move(grown.tree));
    }
    return model;
}

Eigen::VectorXd predict_gbdt(const GbdtModel& model, const Eigen::MatrixXd& features, std::optional<int> n_trees,
                             Exec exec) {
    require(features.cols() == static_cast<Eigen::Index>(model.feature_names.size()), ErrorCode::DimensionMismatch,
            "feature count " + std::to_string(features.cols()) + " differs from training width " +
                std::to_string(model.feature_names.size()));
    const auto count = std::clamp<std::size_t>(
        n_trees ? static_cast<std::size_t>(std::max(0, *n_trees)) : model.trees.size(), 0, model.trees.size());
    Eigen::VectorXd out = predict_trees(std::span<const RegressionTree>(model.trees.data(), count), features,
                                        model.config.learning_rate, exec);
    out.array() += model.base_score;
    return out;
}

std::vector<FeatureGain> feature_importance(const GbdtModel& model) {
    std::vector<double> gains(model.feature_names.size(), 0.0);
    for (const auto& tree : model.trees) {
        for (const auto& node : tree.nodes) {
            if (!node.is_leaf()) gains[static_cast<std::size_t>(node.feature)] += node.gain;
        }
    }
    std::vector<std::size_t> order(gains.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return gains[a] > gains[b]; });
    std::vector<FeatureGain> ranked;
    ranked.reserve(order.size());
    for (auto j : order) ranked.push_back({model.feature_names[j], gains[j]});
    return ranked;
}

nlohmann::json gbdt_to_json(const GbdtModel& model) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : model.trees) trees.push_back(tree_to_json(t));
    return {{"kind", "gbdt"},
            {"base_score", model.base_score},
            {"learning_rate", model.config.learning_rate},
            {"objective", gbdt_config_to_json(model.config)["objective"]},
            {"config", gbdt_config_to_json(model.config)},
            {"feature_names", model.feature_names},
            {"degenerate_features", model.degenerate_features},
            {"trees", trees}};
}

GbdtModel gbdt_from_json(const nlohmann::json& doc) {
    require(doc.value("kind", std::string()) == "gbdt", ErrorCode::ParseError, "not a gbdt model document");
    GbdtModel model;
    model.base_score = doc.at("base_score").get<double>();
    model.config = gbdt_config_from_json(doc.at("config"));
    model.config.learning_rate = doc.at("learning_rate").get<double>();
    model.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
    model.degenerate_features = doc.value("degenerate_features", false);
    for (const auto& t : doc.at("trees")) {
        auto tree = tree_from_json(t);
        for (const auto& node : tree.nodes) {
            require(node.is_leaf() || node.feature < static_cast<int>(model.feature_names.size()),
                    ErrorCode::ParseError, "tree split feature out of range");
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

}  // namespace uqkit
