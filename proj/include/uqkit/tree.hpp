#pragma once

#include "uqkit/parallel.hpp"
#include "uqkit/random.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "json.hpp"

namespace uqkit {

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    double gain = 0.0;
    int count = 0;

    bool is_leaf() const { return feature < 0; }
    bool operator==(const TreeNode&) const = default;
};

// Binary regression tree; samples with x[feature] <= threshold go left.
struct RegressionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    int leaf_index(const Eigen::MatrixXd& X, Eigen::Index row) const;
    double predict(const Eigen::MatrixXd& X, Eigen::Index row) const { return nodes[leaf_index(X, row)].value; }
    int leaf_count() const;

    bool operator==(const RegressionTree&) const = default;
};

nlohmann::json tree_to_json(const RegressionTree& tree);
RegressionTree tree_from_json(const nlohmann::json& doc);

struct SplitCandidate {
    int feature = -1;  // global column index, -1 if no admissible split
    double threshold = 0.0;
    double gain = 0.0;
    int left_count = 0;
};

// Sorted-position view of one node, as the split kernel sees it. `sorted[k]`
// lists the node's sample positions ordered by column `features[k]`.
struct NodeView {
    const Eigen::MatrixXd* X = nullptr;
    std::span<const int> rows;   // position -> dataset row
    std::span<const double> grad;
    std::span<const double> hess;
    std::span<const int> features;
    const std::vector<std::vector<int>>* sorted = nullptr;
    double sum_grad = 0.0;
    double sum_hess = 0.0;
    int min_samples_leaf = 1;
};

// Exact greedy split search over the candidate local feature indices.
// Gain is G_L^2/H_L + G_R^2/H_R - G^2/H (the squared-error reduction when
// h = 1). Ties go to the lower feature index, then the lower threshold.
SplitCandidate find_best_split(const NodeView& node, std::span<const int> candidates, Exec exec = Exec::parallel);

// Best admissible split of a single feature; the building block of both
// find_best_split paths.
SplitCandidate best_split_for_feature(const NodeView& node, int local_feature);

struct GrowParams {
    int max_leaves = 0;  // 0 = unlimited
    int min_samples_leaf = 1;
    double feature_fraction_per_node = 1.0;
    Exec exec = Exec::parallel;
};

struct GrowResult {
    RegressionTree tree;
    std::vector<int> leaf_of;  // per position, node index of its leaf
};

// Grows a tree on (grad, hess) statistics of the sampled rows. Expansion is
// best-first by gain until max_leaves is reached or no split has positive
// gain. Leaf values are the Newton step -G/H.
GrowResult grow_tree(const Eigen::MatrixXd& X, std::span<const int> rows, std::span<const double> grad,
                     std::span<const double> hess, std::span<const int> features, const GrowParams& params,
                     Rng& rng);

// Sum of predictions of `trees` for each row of X, each scaled by `scale`.
Eigen::VectorXd predict_trees(std::span<const RegressionTree> trees, const Eigen::MatrixXd& X, double scale,
                              Exec exec = Exec::parallel);

}  // namespace uqkit
