#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "uqkit/boosting.hpp"
#include "uqkit/error.hpp"
#include "uqkit/random.hpp"
#include "uqkit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace uqkit;

namespace {

Dataset make_dataset(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    Dataset d;
    d.features = X;
    d.targets = y;
    for (Eigen::Index i = 0; i < X.rows(); ++i) d.ids.push_back("r" + std::to_string(i));
    for (Eigen::Index j = 0; j < X.cols(); ++j) d.feature_names.push_back("f" + std::to_string(j));
    return d;
}

std::vector<double> vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

struct BruteSplit {
    int feature = -1;
    double gain = 0.0;
    double lo = 0.0, hi = 0.0;  // admissible threshold interval [lo, hi)
};

// Enumerates every boundary between distinct sorted values with unit hessians.
BruteSplit brute_force_split(const Eigen::MatrixXd& X, const std::vector<double>& g, int min_leaf) {
    const auto n = static_cast<int>(g.size());
    const double G = std::accumulate(g.begin(), g.end(), 0.0);
    BruteSplit best;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        std::vector<int> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return X(a, j) < X(b, j); });
        for (int k = min_leaf; k <= n - min_leaf; ++k) {
            const double lo = X(idx[static_cast<std::size_t>(k - 1)], j);
            const double hi = X(idx[static_cast<std::size_t>(k)], j);
            if (!(lo < hi)) continue;
            double GL = 0.0;
            for (int i = 0; i < k; ++i) GL += g[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
            const double GR = G - GL;
            const double gain = GL * GL / k + GR * GR / (n - k) - G * G / n;
            if (gain > best.gain + 1e-12 * std::max(1.0, std::abs(best.gain))) best = {static_cast<int>(j), gain, lo, hi};
        }
    }
    return best;
}

GbdtConfig small_config() {
    GbdtConfig c;
    c.n_trees = 40;
    c.learning_rate = 0.1;
    c.max_leaves = 8;
    c.min_samples_leaf = 3;
    return c;
}

}  // namespace

TEST_CASE("constant target is absorbed by the base score") {
    Rng rng(1);
    Eigen::MatrixXd X(50, 2);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(50, 3.25);
    for (const auto& obj : {Objective::mse(), Objective::mae(), Objective::quantile(0.84)}) {
        auto c = small_config();
        c.objective = obj;
        const auto model = fit_gbdt(make_dataset(X, y), c);
        const auto pred = predict_gbdt(model, X);
        for (Eigen::Index i = 0; i < pred.size(); ++i) CHECK(pred(i) == 3.25);
        CHECK(loss_value(obj, vec(y), vec(pred)) == 0.0);
    }
}

TEST_CASE("step data: one tree fits exactly with a threshold between the classes") {
    Rng rng(2);
    const int n = 200;
    Eigen::MatrixXd X(n, 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = rng.uniform(-1, 1);
        y(i) = X(i, 0) < 0 ? 0.0 : 1.0;
    }
    GbdtConfig c;
    c.n_trees = 1;
    c.learning_rate = 1.0;
    c.max_leaves = 2;
    c.min_samples_leaf = 1;
    const auto model = fit_gbdt(make_dataset(X, y), c);
    REQUIRE(model.trees.size() == 1);
    const auto& root = model.trees[0].nodes[0];
    double max_neg = -1e300, min_pos = 1e300;
    for (int i = 0; i < n; ++i) {
        if (X(i, 0) < 0) max_neg = std::max(max_neg, X(i, 0));
        else min_pos = std::min(min_pos, X(i, 0));
    }
    CHECK(root.feature == 0);
    CHECK(root.threshold >= max_neg);
    CHECK(root.threshold < min_pos);
    const auto pred = predict_gbdt(model, X);
    for (int i = 0; i < n; ++i) CHECK(pred(i) == doctest::Approx(y(i)).epsilon(1e-12));

    // The chosen gain is the best over every enumerated split point.
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = model.base_score - y(i);
    const auto brute = brute_force_split(X, g, 1);
    CHECK(root.gain == doctest::Approx(brute.gain).epsilon(1e-10));

    const auto imp = feature_importance(model);
    CHECK(imp[0].name == "f0");
    CHECK(imp[0].gain == doctest::Approx(root.gain));
}

TEST_CASE("root split matches the brute-force oracle on random data") {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 20 + static_cast<int>(rng.index(60));
        const int d = 1 + static_cast<int>(rng.index(4));
        const int msl = 1 + static_cast<int>(rng.index(5));
        Eigen::MatrixXd X(n, d);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) X(i, j) = std::round(rng.uniform(-3, 3) * 4) / 4;  // ties on purpose
            y(i) = std::sin(X(i, 0)) + 0.3 * rng.normal();
        }
        GbdtConfig c;
        c.n_trees = 1;
        c.learning_rate = 1.0;
        c.max_leaves = 2;
        c.min_samples_leaf = msl;
        const auto model = fit_gbdt(make_dataset(X, y), c);
        std::vector<double> g(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = model.base_score - y(i);
        const auto brute = brute_force_split(X, g, msl);
        if (brute.feature < 0) {
            CHECK((model.trees.empty() || model.trees[0].nodes.size() == 1));
            continue;
        }
        REQUIRE(!model.trees.empty());
        const auto& root = model.trees[0].nodes[0];
        REQUIRE(!root.is_leaf());
        CHECK(root.gain == doctest::Approx(brute.gain).epsilon(1e-9));
        CHECK(root.feature == brute.feature);
        CHECK(root.threshold >= brute.lo);
        CHECK(root.threshold < brute.hi);
    }
}

TEST_CASE("quantile 0.84 of N(0,1) noise with a constant feature") {
    Rng rng(4);
    const int n = 10000;
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(n, 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = rng.normal();
    GbdtConfig c = small_config();
    c.objective = Objective::quantile(0.84);
    const auto model = fit_gbdt(make_dataset(X, y), c);
    CHECK(model.degenerate_features);
    const double oracle = empirical_quantile(vec(y), 0.84);
    const double p = predict_gbdt(model, X)(0);
    CHECK(std::abs(p - oracle) <= 0.05);
    CHECK(std::abs(p - 0.994) <= 0.05);
}

TEST_CASE("empty tree list predicts the base score; row permutation permutes outputs") {
    GbdtModel empty;
    empty.base_score = 1.5;
    empty.feature_names = {"a", "b"};
    const Eigen::VectorXd p = predict_gbdt(empty, Eigen::MatrixXd::Random(7, 2));
    for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p(i) == 1.5);
    for (const auto& fg : feature_importance(empty)) CHECK(fg.gain == 0.0);

    Rng rng(5);
    Eigen::MatrixXd X(100, 3);
    Eigen::VectorXd y(100);
    for (int i = 0; i < 100; ++i) {
        for (int j = 0; j < 3; ++j) X(i, j) = rng.normal();
        y(i) = X(i, 0) * X(i, 1) + rng.normal() * 0.1;
    }
    const auto model = fit_gbdt(make_dataset(X, y), small_config());
    const auto base = predict_gbdt(model, X);
    std::vector<int> perm(100);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Eigen::MatrixXd Xp(100, 3);
    for (int i = 0; i < 100; ++i) Xp.row(i) = X.row(perm[static_cast<std::size_t>(i)]);
    const auto permuted = predict_gbdt(model, Xp);
    for (int i = 0; i < 100; ++i) CHECK(permuted(i) == base(perm[static_cast<std::size_t>(i)]));
    CHECK_THROWS_AS(predict_gbdt(model, Eigen::MatrixXd::Zero(2, 4)), Error);
}

TEST_CASE("duplicated columns share exactly the gain of the single column") {
    Rng rng(6);
    const int n = 300;
    Eigen::MatrixXd X1(n, 2), X2(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        const double a = rng.uniform(-2, 2), b = rng.normal();
        X1(i, 0) = a;
        X1(i, 1) = b;
        X2(i, 0) = a;
        X2(i, 1) = a;
        X2(i, 2) = b;
        y(i) = a * a + 0.2 * b + 0.1 * rng.normal();
    }
    const auto m1 = fit_gbdt(make_dataset(X1, y), small_config());
    const auto m2 = fit_gbdt(make_dataset(X2, y), small_config());
    auto gain_of = [](const std::vector<FeatureGain>& imp, const std::string& name) {
        for (const auto& fg : imp) {
            if (fg.name == name) return fg.gain;
        }
        return -1.0;
    };
    const auto i1 = feature_importance(m1);
    const auto i2 = feature_importance(m2);
    CHECK(std::abs(gain_of(i2, "f0") + gain_of(i2, "f1") - gain_of(i1, "f0")) <= 1e-9 * gain_of(i1, "f0"));
    CHECK(gain_of(i2, "f1") == 0.0);  // ties go to the lower index
    for (std::size_t k = 1; k < i2.size(); ++k) CHECK(i2[k - 1].gain >= i2[k].gain);
}

TEST_CASE("training MSE is non-increasing over boosting rounds on noiseless data") {
    Rng rng(7);
    const int n = 150;
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = rng.uniform(-3, 3);
        X(i, 1) = rng.uniform(-3, 3);
        y(i) = std::sin(X(i, 0)) + 0.5 * X(i, 1);
    }
    auto c = small_config();
    c.n_trees = 60;
    const auto model = fit_gbdt(make_dataset(X, y), c);
    double prev = 1e300;
    for (int k = 0; k <= static_cast<int>(model.trees.size()); ++k) {
        const double l = loss_value(Objective::mse(), vec(y), vec(predict_gbdt(model, X, k)));
        CHECK(l <= prev + 1e-12);
        prev = l;
    }
}

TEST_CASE("quantile model coverage on i.i.d. noise around a constant") {
    Rng rng(8);
    const int n = 2000;
    Eigen::MatrixXd X(n, 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = rng.uniform();
        y(i) = 2.0 + rng.normal();
    }
    for (double alpha : {0.14, 0.5, 0.84}) {
        auto c = small_config();
        c.objective = Objective::quantile(alpha);
        const auto model = fit_gbdt(make_dataset(X, y), c);
        const auto pred = predict_gbdt(model, X);
        int below = 0;
        for (int i = 0; i < n; ++i) below += y(i) < pred(i) ? 1 : 0;
        const double frac = static_cast<double>(below) / n;
        CHECK(std::abs(frac - alpha) <= 3.0 * std::sqrt(alpha * (1 - alpha) / n));
    }
}

TEST_CASE("determinism, JSON round trip and serial/parallel agreement") {
    Rng rng(9);
    const int n = 250;
    Eigen::MatrixXd X(n, 5);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 5; ++j) X(i, j) = rng.normal();
        y(i) = X(i, 0) - X(i, 2) * X(i, 3) + 0.3 * rng.normal();
    }
    auto c = small_config();
    c.subsample = 0.7;
    c.colsample = 0.6;
    c.seed = 42;
    c.objective = Objective::quantile(0.3);
    const auto data = make_dataset(X, y);
    const auto a = fit_gbdt(data, c, Exec::parallel);
    const auto b = fit_gbdt(data, c, Exec::serial);
    CHECK(a == b);
    CHECK(gbdt_to_json(a).dump() == gbdt_to_json(fit_gbdt(data, c)).dump());
    const auto back = gbdt_from_json(nlohmann::json::parse(gbdt_to_json(a).dump()));
    CHECK(back == a);
    const auto pa = predict_gbdt(a, X, std::nullopt, Exec::parallel);
    const auto ps = predict_gbdt(back, X, std::nullopt, Exec::serial);
    for (int i = 0; i < n; ++i) CHECK(pa(i) == ps(i));
    c.seed = 43;
    CHECK(!(fit_gbdt(data, c) == a));
}

TEST_CASE("node count bound and leaf cap") {
    Rng rng(10);
    Eigen::MatrixXd X(400, 3);
    Eigen::VectorXd y(400);
    for (int i = 0; i < 400; ++i) {
        for (int j = 0; j < 3; ++j) X(i, j) = rng.normal();
        y(i) = rng.normal();
    }
    auto c = small_config();
    c.max_leaves = 5;
    c.min_samples_leaf = 1;
    const auto model = fit_gbdt(make_dataset(X, y), c);
    for (const auto& t : model.trees) {
        CHECK(t.leaf_count() <= 5);
        CHECK(t.nodes.size() <= 2 * 5 - 1);
        for (const auto& node : t.nodes) {
            if (!node.is_leaf()) CHECK((node.left > 0 && node.right > 0));
        }
    }
}

TEST_CASE("config validation and too few samples") {
    GbdtConfig c;
    c.n_trees = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = GbdtConfig{};
    c.learning_rate = 1.5;
    CHECK_THROWS_AS(c.validate(), Error);
    c = GbdtConfig{};
    c.max_leaves = 1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = GbdtConfig{};
    c.min_samples_leaf = 5;
    try {
        fit_gbdt(make_dataset(Eigen::MatrixXd::Zero(9, 1), Eigen::VectorXd::Zero(9)), c);
        FAIL("expected TooFewSamples");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TooFewSamples);
    }
    const auto rt = gbdt_config_from_json(gbdt_config_to_json(small_config()));
    CHECK(gbdt_config_to_json(rt) == gbdt_config_to_json(small_config()));
}
