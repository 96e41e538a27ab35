#include <algorithm>
#include "uqkit/forest.hpp"

#include "uqkit/error.hpp"
#include "uqkit/random.hpp"

#include <numeric>

namespace uqkit {

void ForestConfig::validate() const {
    require(n_trees >= 1, ErrorCode::InvalidArgument, "n_trees must be >= 1");
    require(max_features > 0.0 && max_features <= 1.0, ErrorCode::InvalidArgument,
            "max_features must lie in (0, 1]");
    require(min_samples_leaf >= 1, ErrorCode::InvalidArgument, "min_samples_leaf must be >= 1");
}

nlohmann::json forest_config_to_json(const ForestConfig& c) {
    nlohmann::json max_features = c.max_features >= 1.0 ? nlohmann::json("all") : nlohmann::json(c.max_features);
    return {{"n_trees", c.n_trees},
            {"max_features", max_features},
            {"min_samples_leaf", c.min_samples_leaf},
            {"bootstrap", c.bootstrap},
            {"seed", c.seed}};
}

ForestConfig forest_config_from_json(const nlohmann::json& doc, ForestConfig c) {
    c.n_trees = doc.value("n_trees", c.n_trees);
    if (doc.contains("max_features")) {
        const auto& mf = doc["max_features"];
        c.max_features = mf.is_string() ? (mf.get<std::string>() == "all" ? 1.0 : c.max_features) : mf.get<double>();
    }
    c.min_samples_leaf = doc.value("min_samples_leaf", c.min_samples_leaf);
    c.bootstrap = doc.value("bootstrap", c.bootstrap);
    c.seed = doc.value("seed", c.seed);
    c.validate();
    return c;
}

namespace {

struct GrownTree {
    RegressionTree tree;
    std::vector<int> oob;
};

GrownTree grow_forest_tree(const Dataset& train, const ForestConfig& config, int t, const std::vector<int>& features) {
    const int n = static_cast<int>(train.size());
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(t)));
    std::vector<int> rows(static_cast<std::size_t>(n));
    GrownTree out;
    if (config.bootstrap) {
        std::vector<char> drawn(static_cast<std::size_t>(n), 0);
        for (auto& r : rows) {
            r = static_cast<int>(rng.index(static_cast<std::size_t>(n)));
            drawn[static_cast<std::size_t>(r)] = 1;
        }
        for (int i = 0; i < n; ++i) {
            if (!drawn[static_cast<std::size_t>(i)]) out.oob.push_back(i);
        }
    } else {
        std::iota(rows.begin(), rows.end(), 0);
    }

    // Centre on an actual target value (the lower median) so the purity test
    // works on the spread and representable targets stay exact.
    std::vector<double> ys;
    ys.reserve(rows.size());
    for (int r : rows) ys.push_back(train.targets(r));
    const auto mid = ys.begin() + static_cast<std::ptrdiff_t>((ys.size() - 1) / 2);
    std::nth_element(ys.begin(), mid, ys.end());
    const double centre = *mid;
    std::vector<double> grad(rows.size());
    std::vector<double> hess(rows.size(), 1.0);
    for (std::size_t p = 0; p < rows.size(); ++p) grad[p] = -(train.targets(rows[p]) - centre);

    GrowParams params;
    params.max_leaves = 0;
    params.min_samples_leaf = config.min_samples_leaf;
    params.feature_fraction_per_node = config.max_features;
    params.exec = Exec::serial;
    auto grown = grow_tree(train.features, rows, grad, hess, features, params, rng);
    for (auto& node : grown.tree.nodes) node.value += centre;
    out.tree = std::move(grown.tree);
    return out;
}

}  // namespace

ForestModel fit_forest(const Dataset& train, const ForestConfig& config, Exec exec) {
    config.validate();
    const int n = static_cast<int>(train.size());
    require(n >= 2, ErrorCode::TooFewSamples, "random forest needs at least 2 samples");

    std::vector<int> features(train.dims());
    std::iota(features.begin(), features.end(), 0);

    std::vector<GrownTree> grown(static_cast<std::size_t>(config.n_trees));
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
        for (int t = 0; t < config.n_trees; ++t) grown[static_cast<std::size_t>(t)] = grow_forest_tree(train, config, t, features);
    } else {
        for (int t = 0; t < config.n_trees; ++t) grown[static_cast<std::size_t>(t)] = grow_forest_tree(train, config, t, features);
    }

    ForestModel model;
    model.config = config;
    model.feature_names = train.feature_names;
    for (auto& g : grown) {
        model.trees.push_back(std::move(g.tree));
        model.oob_indices.push_back(std::move(g.oob));
    }

    // running means, as in predict_forest
    std::vector<double> oob_mean(static_cast<std::size_t>(n), 0.0);
    std::vector<int> oob_count(static_cast<std::size_t>(n), 0);
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        for (int r : model.oob_indices[t]) {
            const auto k = static_cast<std::size_t>(r);
            ++oob_count[k];
            oob_mean[k] += (model.trees[t].predict(train.features, r) - oob_mean[k]) / oob_count[k];
        }
    }
    double sse = 0.0;
    for (int r = 0; r < n; ++r) {
        if (oob_count[static_cast<std::size_t>(r)] == 0) continue;
        const double e = oob_mean[static_cast<std::size_t>(r)] - train.targets(r);
        sse += e * e;
        ++model.oob_covered;
    }
    model.oob_mse = model.oob_covered > 0 ? sse / model.oob_covered : 0.0;
    return model;
}

Eigen::VectorXd predict_forest(const ForestModel& model, const Eigen::MatrixXd& features, Exec exec) {
    require(features.cols() == static_cast<Eigen::Index>(model.feature_names.size()), ErrorCode::DimensionMismatch,
            "feature count " + std::to_string(features.cols()) + " differs from training width " +
                std::to_string(model.feature_names.size()));
    require(!model.trees.empty(), ErrorCode::InvalidArgument, "forest has no trees");
    const Eigen::Index n = features.rows();
    Eigen::VectorXd out(n);
    // running mean: exact for identical tree outputs and never leaves [min, max]
    auto row_mean = [&](Eigen::Index r) {
        double m = 0.0;
        for (std::size_t t = 0; t < model.trees.size(); ++t) {
            m += (model.trees[t].predict(features, r) - m) / static_cast<double>(t + 1);
        }
        out(r) = m;
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (Eigen::Index r = 0; r < n; ++r) row_mean(r);
    } else {
        for (Eigen::Index r = 0; r < n; ++r) row_mean(r);
    }
    return out;
}

nlohmann::json forest_to_json(const ForestModel& model) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : model.trees) trees.push_back(tree_to_json(t));
    return {{"kind", "forest"},
            {"config", forest_config_to_json(model.config)},
            {"feature_names", model.feature_names},
            {"oob_mse", model.oob_mse},
            {"oob_covered", model.oob_covered},
            {"oob_indices", model.oob_indices},
            {"trees", trees}};
}

ForestModel forest_from_json(const nlohmann::json& doc) {
    require(doc.value("kind", std::string()) == "forest", ErrorCode::ParseError, "not a forest model document");
    ForestModel model;
    model.config = forest_config_from_json(doc.at("config"));
    model.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
    model.oob_mse = doc.value("oob_mse", 0.0);
    model.oob_covered = doc.value("oob_covered", 0);
    model.oob_indices = doc.value("oob_indices", std::vector<std::vector<int>>{});
    for (const auto& t : doc.at("trees")) model.trees.push_back(tree_from_json(t));
    return model;
}

}  // namespace uqkit
