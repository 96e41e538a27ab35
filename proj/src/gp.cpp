#include "uqkit/gp.hpp"

#include "uqkit/error.hpp"
#include "uqkit/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace uqkit {

namespace {

struct Factor {
    Eigen::MatrixXd lower;
    double jitter = 0.0;
    int escalations = 0;
};

bool factor_ok(const Eigen::LLT<Eigen::MatrixXd>& llt, double mean_diag) {
    if (llt.info() != Eigen::Success) return false;
    const Eigen::VectorXd pivots = llt.matrixLLT().diagonal();
    return pivots.allFinite() && pivots.array().square().minCoeff() > 1e-13 * mean_diag;
}

Factor factorize(const Eigen::MatrixXd& K, const JitterPolicy& policy) {
    const Eigen::Index n = K.rows();
    const double mean_diag = K.trace() / static_cast<double>(n);
    require(std::isfinite(mean_diag), ErrorCode::CholeskyFailure, "Gram matrix is not finite");
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (factor_ok(llt, mean_diag)) return {llt.matrixL(), 0.0, 0};
    int escalations = 0;
    if (policy.max_rel > 0.0) {
        for (double rel = policy.start_rel; rel <= policy.max_rel * (1.0 + 1e-9); rel *= 10.0) {
            ++escalations;
            const double jitter = rel * mean_diag;
            Eigen::MatrixXd Kj = K;
            Kj.diagonal().array() += jitter;
            llt.compute(Kj);
            if (factor_ok(llt, mean_diag)) return {llt.matrixL(), jitter, escalations};
        }
    }
    fail(ErrorCode::CholeskyFailure,
         "Gram matrix not positive definite after " + std::to_string(escalations) + " jitter escalations");
}

TargetScaling target_scaling(const Eigen::VectorXd& y) {
    TargetScaling s;
    s.mean = y.mean();
    const double var = (y.array() - s.mean).square().mean();
    s.std = std::sqrt(var);
    if (!(s.std > 1e-12 * std::max(1.0, std::abs(s.mean)))) s.std = 1.0;
    return s;
}

void standardize_features(const Eigen::MatrixXd& X, Eigen::VectorXd& mean, Eigen::VectorXd& scale) {
    mean = X.colwise().mean().transpose();
    scale.resize(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double sd = std::sqrt((X.col(j).array() - mean(j)).square().mean());
        scale(j) = sd > 1e-12 * std::max(1.0, std::abs(mean(j))) ? sd : 1.0;
    }
}

Eigen::MatrixXd apply_standardization(const Eigen::MatrixXd& X, const Eigen::VectorXd& mean,
                                      const Eigen::VectorXd& scale) {
    return (X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

}  // namespace

LikelihoodResult log_marginal_likelihood(const KernelExpr& kernel, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                         const JitterPolicy& jitter, bool with_gradient, Exec exec) {
    require(X.rows() == y.size(), ErrorCode::LengthMismatch, "X rows differ from y length");
    require(y.size() > 0, ErrorCode::EmptyInput, "likelihood of an empty sample");
    const Eigen::Index n = X.rows();
    const Eigen::MatrixXd K = gram_matrix(kernel, X, exec);
    const Factor f = factorize(K, jitter);
    const auto L = f.lower.triangularView<Eigen::Lower>();
    Eigen::VectorXd alpha = L.solve(y);
    f.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(alpha);

    LikelihoodResult out;
    out.jitter = f.jitter;
    out.escalations = f.escalations;
    out.value = -0.5 * y.dot(alpha) - f.lower.diagonal().array().log().sum() -
                0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
    if (with_gradient) {
        Eigen::MatrixXd Kinv = Eigen::MatrixXd::Identity(n, n);
        L.solveInPlace(Kinv);
        f.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(Kinv);
        const Eigen::MatrixXd W = alpha * alpha.transpose() - Kinv;
        out.gradient = gram_gradient_contract(kernel, X, W, exec);
    }
    return out;
}

GpModel condition_gp(const Dataset& train, const KernelExpr& kernel, const JitterPolicy& jitter,
                     std::optional<TargetScaling> scaling, Exec exec) {
    require(train.size() >= 1, ErrorCode::TooFewSamples, "GP needs at least one training point");
    GpModel model;
    model.kernel = kernel;
    model.kernel.set_dims(static_cast<int>(train.dims()));
    model.kernel.validate();
    model.feature_names = train.feature_names;
    standardize_features(train.features, model.feature_mean, model.feature_scale);
    model.X_train = apply_standardization(train.features, model.feature_mean, model.feature_scale);
    model.y_train = train.targets;
    model.scaling = scaling ? *scaling : target_scaling(train.targets);
    model.jitter_policy = jitter;

    const Eigen::VectorXd ys = (train.targets.array() - model.scaling.mean) / model.scaling.std;
    const Eigen::MatrixXd K = gram_matrix(model.kernel, model.X_train, exec);
    const Factor f = factorize(K, jitter);
    model.chol = f.lower;
    model.jitter = f.jitter;
    const auto L = model.chol.triangularView<Eigen::Lower>();
    model.alpha = L.solve(ys);
    model.chol.transpose().triangularView<Eigen::Upper>().solveInPlace(model.alpha);
    model.log_likelihood = -0.5 * ys.dot(model.alpha) - model.chol.diagonal().array().log().sum() -
                           0.5 * static_cast<double>(ys.size()) * std::log(2.0 * M_PI);
    return model;
}

GpModel fit_gp(const Dataset& train, const KernelExpr& kernel_template, const GpFitOptions& options) {
    require(static_cast<int>(train.dims()) <= options.max_features, ErrorCode::TooManyFeatures,
            "GP supports at most " + std::to_string(options.max_features) + " features, got " +
                std::to_string(train.dims()));
    require(train.size() >= 1, ErrorCode::TooFewSamples, "GP needs at least one training point");
    require(options.restarts >= 1, ErrorCode::InvalidArgument, "restarts must be >= 1");

    KernelExpr base = kernel_template;
    base.set_dims(static_cast<int>(train.dims()));
    base.validate();

    Eigen::VectorXd fmean, fscale;
    standardize_features(train.features, fmean, fscale);
    const Eigen::MatrixXd X = apply_standardization(train.features, fmean, fscale);
    const TargetScaling scaling = target_scaling(train.targets);
    const Eigen::VectorXd ys = (train.targets.array() - scaling.mean) / scaling.std;

    const auto bounds = base.theta_bounds();
    const auto dim = bounds.size();
    if (dim == 0) {
        auto model = condition_gp(train, base, options.jitter, std::nullopt, options.exec);
        model.restarts_run = 1;
        return model;
    }

    struct Outcome {
        bool ok = false;
        double value = -std::numeric_limits<double>::infinity();
        std::vector<double> theta;
    };
    std::vector<Outcome> outcomes(static_cast<std::size_t>(options.restarts));
    const bool parallel_restarts = options.exec == Exec::parallel && options.restarts > 1;
    const Exec inner = parallel_restarts ? Exec::serial : options.exec;

    auto run_restart = [&](int r) {
        Eigen::VectorXd x0(static_cast<Eigen::Index>(dim));
        const auto start = base.theta();
        Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(r)));
        for (std::size_t i = 0; i < dim; ++i) {
            const auto [lo, hi] = bounds[i];
            x0(static_cast<Eigen::Index>(i)) =
                r == 0 ? std::clamp(start[i], lo, hi) : rng.uniform(lo, hi);
        }
        KernelExpr work = base;
        auto objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
            work.set_theta(std::span<const double>(theta.data(), static_cast<std::size_t>(theta.size())));
            try {
                auto lml = log_marginal_likelihood(work, X, ys, options.jitter, true, inner);
                for (std::size_t i = 0; i < dim; ++i) grad(static_cast<Eigen::Index>(i)) = -lml.gradient[i];
                return -lml.value;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::CholeskyFailure) throw;
                grad.setZero();
                return std::numeric_limits<double>::quiet_NaN();
            }
        };
        Outcome out;
        try {
            auto result = lbfgsb_minimize(objective, x0, bounds, options.optimizer);
            out.ok = std::isfinite(result.value);
            out.value = -result.value;
            out.theta.assign(result.x.data(), result.x.data() + result.x.size());
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NonFiniteObjective) throw;
        }
        outcomes[static_cast<std::size_t>(r)] = std::move(out);
    };

    if (parallel_restarts) {
#pragma omp parallel for schedule(dynamic, 1)
        for (int r = 0; r < options.restarts; ++r) run_restart(r);
    } else {
        for (int r = 0; r < options.restarts; ++r) run_restart(r);
    }

    int best = -1;
    int failed = 0;
    for (int r = 0; r < options.restarts; ++r) {
        const auto& o = outcomes[static_cast<std::size_t>(r)];
        if (!o.ok) {
            ++failed;
            continue;
        }
        if (best < 0 || o.value > outcomes[static_cast<std::size_t>(best)].value) best = r;
    }
    if (best < 0) fail(ErrorCode::CholeskyFailure, "every GP restart failed to factorize the Gram matrix");

    KernelExpr fitted = base;
    fitted.set_theta(outcomes[static_cast<std::size_t>(best)].theta);
    auto model = condition_gp(train, fitted, options.jitter, scaling, options.exec);
    model.restarts_run = options.restarts;
    model.restarts_failed = failed;
    return model;
}

GpPosterior gp_posterior(const GpModel& model, const Eigen::MatrixXd& queries, Exec exec) {
    require(queries.cols() == model.X_train.cols(), ErrorCode::DimensionMismatch,
            "query width " + std::to_string(queries.cols()) + " differs from training width " +
                std::to_string(model.X_train.cols()));
    const Eigen::MatrixXd Q = apply_standardization(queries, model.feature_mean, model.feature_scale);
    const Eigen::MatrixXd Ks = cross_covariance(model.kernel, Q, model.X_train, exec);
    GpPosterior out;
    const Eigen::VectorXd mean_std = Ks * model.alpha;
    const Eigen::MatrixXd V = model.chol.triangularView<Eigen::Lower>().solve(Ks.transpose());
    const double prior = prior_variance(model.kernel);
    out.mean = (mean_std.array() * model.scaling.std + model.scaling.mean).matrix();
    out.std.resize(Q.rows());
    for (Eigen::Index i = 0; i < Q.rows(); ++i) {
        double var = prior - V.col(i).squaredNorm();
        if (var < 0.0) {
            var = 0.0;
            ++out.clipped_variances;
        }
        out.std(i) = model.scaling.std * std::sqrt(var);
    }
    return out;
}

nlohmann::json gp_to_json(const GpModel& model) {
    nlohmann::json X = nlohmann::json::array();
    const Eigen::MatrixXd raw =
        (model.X_train.array().rowwise() * model.feature_scale.transpose().array()).rowwise() +
        model.feature_mean.transpose().array();
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < raw.cols(); ++j) row.push_back(raw(i, j));
        X.push_back(std::move(row));
    }
    return {{"kind", "gp"},
            {"kernel", kernel_to_json(model.kernel)},
            {"feature_names", model.feature_names},
            {"y_mean", model.scaling.mean},
            {"y_std", model.scaling.std},
            {"jitter", model.jitter},
            {"jitter_policy", {{"start_rel", model.jitter_policy.start_rel}, {"max_rel", model.jitter_policy.max_rel}}},
            {"log_likelihood", model.log_likelihood},
            {"restarts_run", model.restarts_run},
            {"restarts_failed", model.restarts_failed},
            {"X_train", X},
            {"y_train", std::vector<double>(model.y_train.data(), model.y_train.data() + model.y_train.size())}};
}

GpModel gp_from_json(const nlohmann::json& doc) {
    require(doc.value("kind", std::string()) == "gp", ErrorCode::ParseError, "not a gp model document");
    Dataset train;
    train.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
    const auto rows = doc.at("X_train").get<std::vector<std::vector<double>>>();
    const auto y = doc.at("y_train").get<std::vector<double>>();
    require(rows.size() == y.size(), ErrorCode::ParseError, "gp training arrays differ in length");
    train.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(train.feature_names.size()));
    train.targets.resize(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i].size() == train.feature_names.size(), ErrorCode::ParseError, "gp training row width");
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            train.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
        train.targets(static_cast<Eigen::Index>(i)) = y[i];
        train.ids.push_back(std::to_string(i));
    }
    JitterPolicy policy;
    if (doc.contains("jitter_policy")) {
        policy.start_rel = doc["jitter_policy"].value("start_rel", policy.start_rel);
        policy.max_rel = doc["jitter_policy"].value("max_rel", policy.max_rel);
    }
    TargetScaling scaling{doc.at("y_mean").get<double>(), doc.at("y_std").get<double>()};
    auto model = condition_gp(train, kernel_from_json(doc.at("kernel"), static_cast<int>(train.dims())), policy, scaling);
    model.restarts_run = doc.value("restarts_run", 0);
    model.restarts_failed = doc.value("restarts_failed", 0);
    return model;
}

}  // namespace uqkit
