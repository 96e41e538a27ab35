#include "uqkit/tree.hpp"

#include "uqkit/error.hpp"

#include <algorithm>
#include <numeric>
#include <memory>
#include <queue>

namespace uqkit {

int RegressionTree::leaf_index(const Eigen::MatrixXd& X, Eigen::Index row) const {
    int id = 0;
    while (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
        const auto& node = nodes[static_cast<std::size_t>(id)];
        id = X(row, node.feature) <= node.threshold ? node.left : node.right;
    }
    return id;
}

int RegressionTree::leaf_count() const {
    return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

nlohmann::json tree_to_json(const RegressionTree& tree) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : tree.nodes) {
        if (n.is_leaf()) {
            nodes.push_back({{"value", n.value}, {"count", n.count}});
        } else {
            nodes.push_back({{"feature", n.feature},
                             {"threshold", n.threshold},
                             {"left", n.left},
                             {"right", n.right},
                             {"gain", n.gain},
                             {"value", n.value},
                             {"count", n.count}});
        }
    }
    return {{"nodes", nodes}};
}

RegressionTree tree_from_json(const nlohmann::json& doc) {
    RegressionTree tree;
    for (const auto& j : doc.at("nodes")) {
        TreeNode n;
        n.value = j.at("value").get<double>();
        n.count = j.value("count", 0);
        if (j.contains("feature")) {
            n.feature = j.at("feature").get<int>();
            n.threshold = j.at("threshold").get<double>();
            n.left = j.at("left").get<int>();
            n.right = j.at("right").get<int>();
            n.gain = j.value("gain", 0.0);
        }
        tree.nodes.push_back(n);
    }
    const auto size = static_cast<int>(tree.nodes.size());
    require(size > 0, ErrorCode::ParseError, "tree without nodes");
    for (const auto& n : tree.nodes) {
        if (!n.is_leaf()) {
            require(n.left > 0 && n.left < size && n.right > 0 && n.right < size, ErrorCode::ParseError,
                    "tree child index out of range");
        }
    }
    return tree;
}

namespace {

double split_threshold(double lo, double hi) {
    double t = 0.5 * lo + 0.5 * hi;
    if (!(t < hi) || t < lo) t = lo;
    return t;
}

}  // namespace

SplitCandidate best_split_for_feature(const NodeView& node, int local_feature) {
    const auto& order = (*node.sorted)[static_cast<std::size_t>(local_feature)];
    const int feature = node.features[static_cast<std::size_t>(local_feature)];
    const Eigen::MatrixXd& X = *node.X;
    const int count = static_cast<int>(order.size());
    const double parent = node.sum_grad * node.sum_grad / node.sum_hess;

    SplitCandidate best;
    double gl = 0.0;
    double hl = 0.0;
    for (int i = 0; i + 1 < count; ++i) {
        const int p = order[static_cast<std::size_t>(i)];
        gl += node.grad[static_cast<std::size_t>(p)];
        hl += node.hess[static_cast<std::size_t>(p)];
        const int left = i + 1;
        if (left < node.min_samples_leaf) continue;
        if (count - left < node.min_samples_leaf) break;
        const double v = X(node.rows[static_cast<std::size_t>(p)], feature);
        const double next = X(node.rows[static_cast<std::size_t>(order[static_cast<std::size_t>(i) + 1])], feature);
        if (!(v < next)) continue;
        const double gr = node.sum_grad - gl;
        const double hr = node.sum_hess - hl;
        if (hl <= 0.0 || hr <= 0.0) continue;
        const double gain = gl * gl / hl + gr * gr / hr - parent;
        if (gain > best.gain) {
            best.feature = feature;
            best.threshold = split_threshold(v, next);
            best.gain = gain;
            best.left_count = left;
        }
    }
    return best;
}

SplitCandidate find_best_split(const NodeView& node, std::span<const int> candidates, Exec exec) {
    std::vector<SplitCandidate> per_feature(candidates.size());
    const auto n = static_cast<long>(candidates.size());
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 4)
        for (long k = 0; k < n; ++k) {
            per_feature[static_cast<std::size_t>(k)] = best_split_for_feature(node, candidates[static_cast<std::size_t>(k)]);
        }
    } else {
        for (long k = 0; k < n; ++k) {
            per_feature[static_cast<std::size_t>(k)] = best_split_for_feature(node, candidates[static_cast<std::size_t>(k)]);
        }
    }
    // serial reduction keeps the tie-break independent of thread scheduling
    SplitCandidate best;
    for (const auto& c : per_feature) {
        if (c.feature < 0) continue;
        if (best.feature < 0 || c.gain > best.gain || (c.gain == best.gain && c.feature < best.feature)) best = c;
    }
    return best;
}

namespace {

struct Pending {
    int node_id = 0;
    std::vector<std::vector<int>> sorted;
    double sum_grad = 0.0;
    double sum_hess = 0.0;
    double sum_grad_sq = 0.0;
    int count = 0;
    SplitCandidate split;
};

struct PendingOrder {
    bool operator()(const Pending* a, const Pending* b) const {
        if (a->split.gain != b->split.gain) return a->split.gain < b->split.gain;
        return a->node_id > b->node_id;
    }
};

}  // namespace

GrowResult grow_tree(const Eigen::MatrixXd& X, std::span<const int> rows, std::span<const double> grad,
                     std::span<const double> hess, std::span<const int> features, const GrowParams& params,
                     Rng& rng) {
    require(grad.size() == rows.size() && hess.size() == rows.size(), ErrorCode::LengthMismatch,
            "gradient statistics differ in length from the sample");
    require(!rows.empty(), ErrorCode::EmptyInput, "cannot grow a tree on zero samples");
    const int m = static_cast<int>(rows.size());
    const int d = static_cast<int>(features.size());

    GrowResult result;
    result.leaf_of.assign(static_cast<std::size_t>(m), 0);

    auto root = std::make_unique<Pending>();
    root->sorted.resize(static_cast<std::size_t>(d));
    auto presort = [&](long k) {
        auto& order = root->sorted[static_cast<std::size_t>(k)];
        order.resize(static_cast<std::size_t>(m));
        std::iota(order.begin(), order.end(), 0);
        const int f = features[static_cast<std::size_t>(k)];
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return X(rows[static_cast<std::size_t>(a)], f) < X(rows[static_cast<std::size_t>(b)], f);
        });
    };
    if (params.exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
        for (long k = 0; k < d; ++k) presort(k);
    } else {
        for (long k = 0; k < d; ++k) presort(k);
    }
    for (int p = 0; p < m; ++p) {
        root->sum_grad += grad[static_cast<std::size_t>(p)];
        root->sum_hess += hess[static_cast<std::size_t>(p)];
        root->sum_grad_sq += grad[static_cast<std::size_t>(p)] * grad[static_cast<std::size_t>(p)];
    }
    root->count = m;

    std::vector<int> all_local(static_cast<std::size_t>(d));
    std::iota(all_local.begin(), all_local.end(), 0);
    const int per_node = params.feature_fraction_per_node >= 1.0
                             ? d
                             : std::max(1, static_cast<int>(params.feature_fraction_per_node * d));

    auto evaluate = [&](Pending& node) {
        node.split = SplitCandidate{};
        if (d == 0 || node.count < 2 * params.min_samples_leaf) return;
        // pure node: nothing left to explain
        const double sse = node.sum_grad_sq - node.sum_grad * node.sum_grad / node.sum_hess;
        if (sse <= 1e-13 * node.sum_grad_sq) return;
        NodeView view{&X, rows, grad, hess, features, &node.sorted, node.sum_grad, node.sum_hess,
                      params.min_samples_leaf};
        std::vector<int> candidates;
        if (per_node < d) {
            candidates = sample_without_replacement(rng, d, per_node);
        } else {
            candidates = all_local;
        }
        auto best = find_best_split(view, candidates, params.exec);
        if (best.feature >= 0 && best.gain > 1e-12 * node.sum_grad_sq) node.split = best;
    };

    auto& nodes = result.tree.nodes;
    nodes.push_back(TreeNode{});
    evaluate(*root);

    std::vector<std::unique_ptr<Pending>> storage;
    std::priority_queue<Pending*, std::vector<Pending*>, PendingOrder> queue;
    std::vector<Pending*> finished;
    storage.push_back(std::move(root));
    queue.push(storage.back().get());

    int leaves = 1;
    std::vector<char> goes_left(static_cast<std::size_t>(m), 0);
    while (!queue.empty()) {
        Pending* node = queue.top();
        queue.pop();
        const bool can_split = node->split.feature >= 0 && (params.max_leaves <= 0 || leaves < params.max_leaves);
        if (!can_split) {
            finished.push_back(node);
            continue;
        }
        const auto& split = node->split;
        const auto split_local = static_cast<std::size_t>(
            std::find(features.begin(), features.end(), split.feature) - features.begin());
        for (int p : node->sorted[split_local]) {
            goes_left[static_cast<std::size_t>(p)] =
                X(rows[static_cast<std::size_t>(p)], split.feature) <= split.threshold ? 1 : 0;
        }
        auto left = std::make_unique<Pending>();
        auto right = std::make_unique<Pending>();
        left->sorted.resize(static_cast<std::size_t>(d));
        right->sorted.resize(static_cast<std::size_t>(d));
        for (int k = 0; k < d; ++k) {
            auto& src = node->sorted[static_cast<std::size_t>(k)];
            auto& l = left->sorted[static_cast<std::size_t>(k)];
            auto& r = right->sorted[static_cast<std::size_t>(k)];
            l.reserve(static_cast<std::size_t>(split.left_count));
            r.reserve(src.size() - static_cast<std::size_t>(split.left_count));
            for (int p : src) (goes_left[static_cast<std::size_t>(p)] ? l : r).push_back(p);
            std::vector<int>().swap(src);
        }
        for (int p : left->sorted[split_local]) {
            left->sum_grad += grad[static_cast<std::size_t>(p)];
            left->sum_hess += hess[static_cast<std::size_t>(p)];
            left->sum_grad_sq += grad[static_cast<std::size_t>(p)] * grad[static_cast<std::size_t>(p)];
        }
        for (int p : right->sorted[split_local]) {
            right->sum_grad += grad[static_cast<std::size_t>(p)];
            right->sum_hess += hess[static_cast<std::size_t>(p)];
            right->sum_grad_sq += grad[static_cast<std::size_t>(p)] * grad[static_cast<std::size_t>(p)];
        }
        left->count = static_cast<int>(left->sorted[split_local].size());
        right->count = static_cast<int>(right->sorted[split_local].size());

        auto& parent = nodes[static_cast<std::size_t>(node->node_id)];
        parent.feature = split.feature;
        parent.threshold = split.threshold;
        parent.gain = split.gain;
        parent.count = node->count;
        parent.value = -node->sum_grad / node->sum_hess;
        left->node_id = static_cast<int>(nodes.size());
        right->node_id = left->node_id + 1;
        parent.left = left->node_id;
        parent.right = right->node_id;
        nodes.push_back(TreeNode{});
        nodes.push_back(TreeNode{});
        ++leaves;

        evaluate(*left);
        evaluate(*right);
        storage.push_back(std::move(left));
        queue.push(storage.back().get());
        storage.push_back(std::move(right));
        queue.push(storage.back().get());
    }

    for (Pending* node : finished) {
        auto& leaf = nodes[static_cast<std::size_t>(node->node_id)];
        leaf.value = -node->sum_grad / node->sum_hess;
        leaf.count = node->count;
        if (d > 0) {
            for (int p : node->sorted[0]) result.leaf_of[static_cast<std::size_t>(p)] = node->node_id;
        }
    }
    return result;
}

Eigen::VectorXd predict_trees(std::span<const RegressionTree> trees, const Eigen::MatrixXd& X, double scale,
                              Exec exec) {
    const Eigen::Index n = X.rows();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    auto row_sum = [&](Eigen::Index r) {
        double s = 0.0;
        for (const auto& t : trees) s += t.predict(X, r);
        out(r) = scale * s;
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (Eigen::Index r = 0; r < n; ++r) row_sum(r);
    } else {
        for (Eigen::Index r = 0; r < n; ++r) row_sum(r);
    }
    return out;
}

}  // namespace uqkit
