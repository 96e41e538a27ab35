#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "support.hpp"

#include "uqkit/gp.hpp"
#include "uqkit/gp_kernel.hpp"
#include "uqkit/lbfgsb.hpp"

#include <cmath>
#include <limits>

using namespace uqkit;
using testing_support::make_dataset;
using testing_support::throws_code;

namespace {

double kv(const KernelExpr& k, std::vector<double> a, std::vector<double> b) { return kernel_eval(k, a, b); }

// All four terms with parameters log-uniform in [lo, hi].
KernelExpr random_kernel(Rng& rng, int dims, double lo, double hi) {
    auto draw = [&] { return std::exp(rng.uniform(std::log(lo), std::log(hi))); };
    KernelExpr k;
    k.with_rbf_ard(dims, draw(), 1.0);
    for (auto& l : k.lambda) l.value = draw();
    k.with_rq(draw(), draw(), draw());
    k.with_periodic(draw(), draw(), draw(), draw());
    k.with_white_noise(draw(), draw(), false);
    return k;
}

}  // namespace

TEST_CASE("kernel worked values") {
    KernelExpr rbf;
    rbf.with_rbf_ard(2, 2.0, 1.3);
    CHECK(kv(rbf, {0.5, -1}, {0.5, -1}) == 2.0);
    CHECK(kv(rbf, {0, 0}, {1.3, 0}) == doctest::Approx(2.0 * std::exp(-0.5)).epsilon(1e-15));

    KernelExpr rq;
    rq.with_rq(1.7, 0.6, 0.9);
    const double d = std::sqrt(2 * 0.6 * 0.81);  // d^2 = 2 alpha l^2
    CHECK(kv(rq, {0}, {d}) == doctest::Approx(1.7 * std::pow(2.0, -0.6)).epsilon(1e-14));

    KernelExpr per;
    per.with_periodic(1.0, 2.5, 0.7, 0.8);
    for (int m = 1; m <= 4; ++m) {
        const double dist = 0.8 * m;
        CHECK(kv(per, {0}, {dist}) == doctest::Approx(std::exp(-dist * dist / (2 * 2.5 * 2.5))).epsilon(1e-12));
    }

    Rng rng(3);
    const KernelExpr all = random_kernel(rng, 3, 0.1, 10);
    const std::vector<double> x{0.1, 0.2, 0.3};
    CHECK(kv(all, x, x) ==
          doctest::Approx(all.c1.value + all.c2.value + all.c3.value + all.c4.value * all.noise.value).epsilon(1e-14));
    CHECK(prior_variance(all) == doctest::Approx(all.c1.value + all.c2.value + all.c3.value).epsilon(1e-14));
    CHECK_THROWS_AS(kv(all, {0, 0}, {0, 0, 0}), Error);
}

TEST_CASE("kernel symmetry and Gram PSD for random parameters within the bounds") {
    Rng rng(4);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 5 + static_cast<int>(rng.index(46));
        const int d = 1 + static_cast<int>(rng.index(3));
        const auto k = random_kernel(rng, d, 1e-5, 1e5);
        Eigen::MatrixXd X(n, d);
        for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                std::vector<double> a, b;
                for (int c = 0; c < d; ++c) {
                    a.push_back(X(i, c));
                    b.push_back(X(j, c));
                }
                CHECK(kernel_eval(k, a, b) == kernel_eval(k, b, a));
            }
        }
        const Eigen::MatrixXd K = gram_matrix(k, X);
        CHECK((K - K.transpose()).norm() == 0.0);
        const auto model = condition_gp(make_dataset(X, Eigen::VectorXd::Zero(n)), k);
        Eigen::MatrixXd Kj = gram_matrix(model.kernel, model.X_train);
        Kj.diagonal().array() += model.jitter;
        const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Kj).eigenvalues().minCoeff();
        CHECK(min_eig >= -1e-8);
        // chol * chol^T reconstructs the Gram matrix.
        const Eigen::MatrixXd LLt = model.chol * model.chol.transpose();
        CHECK((LLt - Kj).norm() <= 1e-8 * Kj.norm());
    }
}

TEST_CASE("serial and parallel kernels agree bit for bit") {
    Rng rng(5);
    const auto k = random_kernel(rng, 3, 0.1, 10);
    Eigen::MatrixXd X(37, 3), Q(11, 3);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < Q.size(); ++i) Q.data()[i] = rng.normal();
    CHECK(gram_matrix(k, X, Exec::serial) == gram_matrix(k, X, Exec::parallel));
    CHECK(cross_covariance(k, Q, X, Exec::serial) == cross_covariance(k, Q, X, Exec::parallel));
    Eigen::MatrixXd W = Eigen::MatrixXd::Random(37, 37);
    W = (W + W.transpose()).eval();
    CHECK(gram_gradient_contract(k, X, W, Exec::serial) == gram_gradient_contract(k, X, W, Exec::parallel));
}

TEST_CASE("kernel JSON round trip and bound overrides") {
    Rng rng(6);
    const auto k = random_kernel(rng, 2, 0.1, 10);
    const auto back = kernel_from_json(kernel_to_json(k), 2);
    CHECK(kernel_to_json(back) == kernel_to_json(k));
    const auto spec = nlohmann::json::parse(
        R"({"terms":[{"kind":"rbf_ard","c":1.5,"lambda":{"value":2,"bounds":[0.1,10]}},{"kind":"white_noise","noise":0.01}]})");
    const auto parsed = kernel_from_json(spec, 3);
    CHECK(parsed.lambda.size() == 3);
    CHECK(parsed.lambda[2].lower == 0.1);
    CHECK(parsed.c1.value == 1.5);
    CHECK(parsed.free_params().size() == 1 + 3 + 1);
}

TEST_CASE("likelihood scalar case") {
    KernelExpr k;
    k.with_rbf_ard(1, 2.5);
    const auto r = log_marginal_likelihood(k, Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1));
    CHECK(r.value == doctest::Approx(-0.5 * std::log(2.5) - 0.5 * std::log(2 * M_PI)).epsilon(1e-14));
}

TEST_CASE("likelihood gradient matches central differences in log space") {
    Rng rng(7);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 1 + static_cast<int>(rng.index(3));
        auto k = random_kernel(rng, d, 0.3, 3.0);
        Eigen::MatrixXd X(8, d);
        Eigen::VectorXd y(8);
        for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
        for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = rng.normal();
        const auto base = log_marginal_likelihood(k, X, y);
        const auto theta = k.theta();
        REQUIRE(base.gradient.size() == theta.size());
        double worst = 0.0;
        for (std::size_t j = 0; j < theta.size(); ++j) {
            auto up = theta, dn = theta;
            up[j] += h;
            dn[j] -= h;
            KernelExpr ku = k, kd = k;
            ku.set_theta(up);
            kd.set_theta(dn);
            const double fd =
                (log_marginal_likelihood(ku, X, y, {}, false).value - log_marginal_likelihood(kd, X, y, {}, false).value) /
                (2 * h);
            worst = std::max(worst, std::abs(fd - base.gradient[j]) / std::max(1.0, std::abs(base.gradient[j])));
        }
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("duplicated training point without noise") {
    KernelExpr k;
    k.with_rbf_ard(1);
    Eigen::MatrixXd X(3, 1);
    X << 0.0, 0.0, 1.0;
    const Eigen::VectorXd y = Eigen::Vector3d(1.0, 1.0, 2.0);
    JitterPolicy none;
    none.max_rel = 0.0;
    CHECK(throws_code([&] { log_marginal_likelihood(k, X, y, none); }, ErrorCode::CholeskyFailure));
    CHECK(throws_code([&] { condition_gp(make_dataset(X, y), k, none); }, ErrorCode::CholeskyFailure));
    const auto r = log_marginal_likelihood(k, X, y);
    CHECK(r.jitter > 0.0);
    CHECK(r.escalations >= 1);
}

TEST_CASE("lbfgsb: bounded quadratic") {
    auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        g(0) = 2 * (x(0) - 3);
        return (x(0) - 3) * (x(0) - 3);
    };
    const auto a = lbfgsb_minimize(f, Eigen::VectorXd::Zero(1), {{0.0, 10.0}});
    CHECK(std::abs(a.x(0) - 3.0) < 1e-6);
    CHECK(a.converged);
    const auto b = lbfgsb_minimize(f, Eigen::VectorXd::Zero(1), {{0.0, 2.0}});
    CHECK(b.x(0) == 2.0);
}

TEST_CASE("lbfgsb: Rosenbrock from (-1.2, 1)") {
    auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        const double a = 1 - x(0), b = x(1) - x(0) * x(0);
        g(0) = -2 * a - 400 * x(0) * b;
        g(1) = 200 * b;
        return a * a + 100 * b * b;
    };
    Eigen::VectorXd x0(2);
    x0 << -1.2, 1.0;
    LbfgsbOptions opt;
    opt.max_iter = 500;
    const auto r = lbfgsb_minimize(f, x0, {{-5, 5}, {-5, 5}}, opt);
    CHECK(std::abs(r.x(0) - 1) < 1e-4);
    CHECK(std::abs(r.x(1) - 1) < 1e-4);
    CHECK(r.value < 1e-8);
}

TEST_CASE("lbfgsb: result stays feasible and never worse than x0") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + static_cast<int>(rng.index(6));
        Eigen::MatrixXd A = Eigen::MatrixXd::Random(n, n);
        const Eigen::MatrixXd H = A * A.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
        Eigen::VectorXd c(n), x0(n);
        std::vector<std::pair<double, double>> bounds;
        for (int i = 0; i < n; ++i) {
            c(i) = rng.uniform(-5, 5);
            const double lo = rng.uniform(-2, 0), hi = rng.uniform(0, 2);
            bounds.emplace_back(lo, hi);
            x0(i) = rng.uniform(lo, hi);
        }
        auto f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
            g = H * x - c;
            return 0.5 * x.dot(H * x) - c.dot(x);
        };
        Eigen::VectorXd g0(n);
        const double f0 = f(x0, g0);
        const auto r = lbfgsb_minimize(f, x0, bounds);
        CHECK(r.value <= f0);
        for (int i = 0; i < n; ++i) {
            CHECK(r.x(i) >= bounds[static_cast<std::size_t>(i)].first);
            CHECK(r.x(i) <= bounds[static_cast<std::size_t>(i)].second);
        }
    }
}

TEST_CASE("lbfgsb: non-finite start and infeasible start") {
    auto bad = [](const Eigen::VectorXd&, Eigen::VectorXd& g) {
        g.setZero();
        return std::numeric_limits<double>::quiet_NaN();
    };
    CHECK(throws_code([&] { lbfgsb_minimize(bad, Eigen::VectorXd::Zero(1), {{-1, 1}}); }, ErrorCode::NonFiniteObjective));
    auto ok = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        g = 2 * x;
        return x.squaredNorm();
    };
    CHECK(throws_code([&] { lbfgsb_minimize(ok, Eigen::VectorXd::Constant(1, 3.0), {{-1, 1}}); },
                      ErrorCode::InvalidArgument));
}

TEST_CASE("posterior matches the hand-solved 2x2 case") {
    KernelExpr k;
    k.with_rbf_ard(1, 1.5, 0.8).with_white_noise(0.1, 1.0, true);
    Eigen::MatrixXd X(2, 1);
    X << 0.0, 1.0;
    const Eigen::VectorXd y = Eigen::Vector2d(1.0, 3.0);
    const auto model = condition_gp(make_dataset(X, y), k);
    CHECK(model.jitter == 0.0);

    // Standardized inputs are -1 and +1, targets -1 and +1 (mean 2, std 1).
    const double c1 = 1.5, lam = 0.8, noise = 0.1;
    const double a = c1 + noise, b = c1 * std::exp(-0.5 * 4.0 / (lam * lam));
    const double det = a * a - b * b;
    const double qs = (0.3 - 0.5) / 0.5;
    const double k1 = c1 * std::exp(-0.5 * (qs + 1) * (qs + 1) / (lam * lam));
    const double k2 = c1 * std::exp(-0.5 * (qs - 1) * (qs - 1) / (lam * lam));
    const double w1 = (a * k1 - b * k2) / det, w2 = (-b * k1 + a * k2) / det;  // K^-1 k*
    const double mean = 2.0 + (w1 * -1.0 + w2 * 1.0);
    const double var = c1 - (k1 * w1 + k2 * w2);

    Eigen::MatrixXd Q(1, 1);
    Q << 0.3;
    const auto post = gp_posterior(model, Q);
    CHECK(std::abs(post.mean(0) - mean) < 1e-8);
    CHECK(std::abs(post.std(0) - std::sqrt(var)) < 1e-8);
}

TEST_CASE("interpolation at training points and prior recovery far away") {
    Rng rng(9);
    Eigen::MatrixXd X(15, 2);
    Eigen::VectorXd y(15);
    for (int i = 0; i < 15; ++i) {
        X(i, 0) = rng.uniform(-2, 2);
        X(i, 1) = rng.uniform(-2, 2);
        y(i) = std::sin(X(i, 0)) * 3 + X(i, 1);
    }
    KernelExpr k;
    k.with_rbf_ard(2, 1.3, 0.7);
    const auto model = condition_gp(make_dataset(X, y), k);
    const auto at_train = gp_posterior(model, X);
    for (int i = 0; i < 15; ++i) {
        CHECK(std::abs(at_train.mean(i) - y(i)) < 1e-6);
        CHECK(at_train.std(i) < 1e-4);
    }
    Eigen::MatrixXd far(1, 2);
    far << 1e3, -1e3;
    const auto p = gp_posterior(model, far);
    CHECK(std::abs(p.mean(0) - model.scaling.mean) < 1e-3);
    CHECK(std::abs(p.std(0) - model.scaling.std * std::sqrt(1.3)) < 1e-3);
    CHECK_THROWS_AS(gp_posterior(model, Eigen::MatrixXd::Zero(1, 3)), Error);
}

TEST_CASE("noise floors training-point uncertainty") {
    Rng rng(10);
    Eigen::MatrixXd X(25, 1);
    Eigen::VectorXd y(25);
    for (int i = 0; i < 25; ++i) {
        X(i, 0) = rng.uniform(-3, 3);
        y(i) = std::cos(X(i, 0)) + 0.2 * rng.normal();
    }
    KernelExpr k;
    k.with_rbf_ard(1, 1.0, 0.5).with_white_noise(0.05, 2.0, true);
    const auto model = condition_gp(make_dataset(X, y), k);
    const auto post = gp_posterior(model, X);
    const double floor = std::sqrt(0.05 * 2.0) * model.scaling.std + 1e-6;
    for (int i = 0; i < 25; ++i) CHECK(post.std(i) <= floor);
}

TEST_CASE("scaling targets scales means and stds") {
    Rng rng(11);
    Eigen::MatrixXd X(20, 2);
    Eigen::VectorXd y(20);
    for (int i = 0; i < 20; ++i) {
        X(i, 0) = rng.normal();
        X(i, 1) = rng.normal();
        y(i) = X(i, 0) - X(i, 1) * X(i, 1) + 0.1 * rng.normal();
    }
    Eigen::MatrixXd Q(6, 2);
    for (Eigen::Index i = 0; i < Q.size(); ++i) Q.data()[i] = rng.normal();
    KernelExpr k;
    k.with_rbf_ard(2).with_white_noise(0.05, 1.0, true);
    GpFitOptions opt;
    opt.restarts = 2;
    const auto m1 = fit_gp(make_dataset(X, y), k, opt);
    for (double s : {0.001, 3.0, 250.0}) {
        const auto ms = fit_gp(make_dataset(X, (y * s).eval()), k, opt);
        const auto ts = ms.kernel.theta(), t1 = m1.kernel.theta();
        REQUIRE(ts.size() == t1.size());
        for (std::size_t j = 0; j < ts.size(); ++j) CHECK(ts[j] == doctest::Approx(t1[j]).epsilon(1e-6));
        const auto p1 = gp_posterior(m1, Q), ps = gp_posterior(ms, Q);
        for (Eigen::Index i = 0; i < Q.rows(); ++i) {
            CHECK(ps.mean(i) == doctest::Approx(s * p1.mean(i)).epsilon(1e-10));
            CHECK(ps.std(i) == doctest::Approx(s * p1.std(i)).epsilon(1e-10));
        }
    }
}

TEST_CASE("fit recovers the length scale of GP-sampled data") {
    Rng rng(12);
    const int n = 30;
    Eigen::MatrixXd X(n, 1);
    for (int i = 0; i < n; ++i) X(i, 0) = rng.uniform(-3, 3);
    X = testing_support::zscore(X);
    KernelExpr truth;
    truth.with_rbf_ard(1, 1.0, 1.0);
    const Eigen::VectorXd y = testing_support::sample_mvn(gram_matrix(truth, X), rng);

    KernelExpr tmpl;
    tmpl.with_rbf_ard(1).with_white_noise(1e-3, 1.0, true);
    tmpl.noise.lower = 1e-8;
    GpFitOptions opt;
    opt.restarts = 5;
    opt.seed = 3;
    const auto model = fit_gp(make_dataset(X, y), tmpl, opt);
    const double lam = model.kernel.lambda[0].value;
    CHECK(lam > 0.5);
    CHECK(lam < 2.0);
    const auto post = gp_posterior(model, X);
    for (int i = 0; i < n; ++i) CHECK(post.std(i) < 1e-3);
}

TEST_CASE("more restarts never lower the likelihood; restarts are seeded") {
    Rng rng(13);
    Eigen::MatrixXd X(30, 2);
    Eigen::VectorXd y(30);
    for (int i = 0; i < 30; ++i) {
        X(i, 0) = rng.uniform(-2, 2);
        X(i, 1) = rng.uniform(-2, 2);
        y(i) = std::sin(2 * X(i, 0)) + 0.1 * rng.normal();
    }
    KernelExpr k;
    k.with_rbf_ard(2).with_rq().with_white_noise();
    GpFitOptions one, five;
    one.restarts = 1;
    five.restarts = 5;
    const auto d = make_dataset(X, y);
    const auto a = fit_gp(d, k, one);
    const auto b = fit_gp(d, k, five);
    CHECK(b.log_likelihood >= a.log_likelihood);
    const auto b2 = fit_gp(d, k, five);
    CHECK(gp_to_json(b2).dump() == gp_to_json(b).dump());
    five.exec = Exec::serial;
    CHECK(gp_to_json(fit_gp(d, k, five)).dump() == gp_to_json(b).dump());
}

TEST_CASE("constant targets") {
    Eigen::MatrixXd X(10, 1);
    for (int i = 0; i < 10; ++i) X(i, 0) = i;
    KernelExpr k;
    k.with_rbf_ard(1).with_white_noise();
    GpFitOptions opt;
    opt.restarts = 2;
    const auto model = fit_gp(make_dataset(X, Eigen::VectorXd::Constant(10, 4.2)), k, opt);
    Eigen::MatrixXd Q(3, 1);
    Q << -5, 3.3, 40;
    const auto post = gp_posterior(model, Q);
    for (int i = 0; i < 3; ++i) CHECK(post.mean(i) == doctest::Approx(4.2).epsilon(1e-12));
}

TEST_CASE("guardrail and JSON round trip") {
    KernelExpr k;
    k.with_rbf_ard(65);
    CHECK(throws_code([&] { fit_gp(make_dataset(Eigen::MatrixXd::Random(5, 65), Eigen::VectorXd::Random(5)), k); },
                      ErrorCode::TooManyFeatures));

    Rng rng(14);
    Eigen::MatrixXd X(12, 2);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    const Eigen::VectorXd y = X.col(0) + X.col(1);
    KernelExpr k2;
    k2.with_rbf_ard(2).with_white_noise();
    GpFitOptions opt;
    opt.restarts = 1;
    const auto model = fit_gp(make_dataset(X, y), k2, opt);
    const auto back = gp_from_json(nlohmann::json::parse(gp_to_json(model).dump()));
    const auto pa = gp_posterior(model, X), pb = gp_posterior(back, X);
    for (int i = 0; i < 12; ++i) {
        CHECK(pa.mean(i) == doctest::Approx(pb.mean(i)).epsilon(1e-12));
        CHECK(pa.std(i) == doctest::Approx(pb.std(i)).epsilon(1e-9));
    }
}
