#pragma once

#include "uqkit/data.hpp"
#include "uqkit/gp_kernel.hpp"
#include "uqkit/lbfgsb.hpp"
#include "uqkit/parallel.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace uqkit {

// Diagonal jitter schedule, relative to trace(K)/n. The factorization is
// first attempted on K itself, then with start_rel, growing by 10x up to
// max_rel; max_rel = 0 disables escalation.
struct JitterPolicy {
    double start_rel = 1e-10;
    double max_rel = 1e-4;
};

struct TargetScaling {
    double mean = 0.0;
    double std = 1.0;
};

struct GpModel {
    KernelExpr kernel;
    std::vector<std::string> feature_names;
    Eigen::VectorXd feature_mean;
    Eigen::VectorXd feature_scale;
    Eigen::MatrixXd X_train;  // standardized features
    Eigen::VectorXd y_train;  // original units
    TargetScaling scaling;
    Eigen::MatrixXd chol;     // lower factor of K + jitter*I
    Eigen::VectorXd alpha;    // (K + jitter*I)^-1 (y - mean) / std
    double jitter = 0.0;
    double log_likelihood = 0.0;  // on standardized targets
    JitterPolicy jitter_policy;
    int restarts_run = 0;
    int restarts_failed = 0;
};

struct LikelihoodResult {
    double value = 0.0;
    std::vector<double> gradient;  // over KernelExpr::theta()
    double jitter = 0.0;
    int escalations = 0;
};

// log p(y | X) = -1/2 y^T K^-1 y - 1/2 log|K| - n/2 log(2 pi) and its gradient
// over the free parameters (log coordinates for log-scale ones). y is used
// as given; callers standardize. Throws CholeskyFailure when the jitter
// schedule is exhausted.
LikelihoodResult log_marginal_likelihood(const KernelExpr& kernel, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                         const JitterPolicy& jitter = {}, bool with_gradient = true,
                                         Exec exec = Exec::parallel);

struct GpFitOptions {
    int restarts = 5;
    std::uint64_t seed = 0;
    int max_features = 64;
    LbfgsbOptions optimizer;
    JitterPolicy jitter;
    Exec exec = Exec::parallel;
};

// Maximizes the marginal likelihood from `restarts` starting points (the
// template itself, then log-uniform draws within the bounds) and keeps the
// best. Restart r is the same for any restart count, so more restarts can
// only improve the result.
GpModel fit_gp(const Dataset& train, const KernelExpr& kernel_template, const GpFitOptions& options = {});

// Conditions a GP on `train` with a fixed kernel. `scaling` overrides the
// target standardization computed from the data.
GpModel condition_gp(const Dataset& train, const KernelExpr& kernel, const JitterPolicy& jitter = {},
                     std::optional<TargetScaling> scaling = std::nullopt, Exec exec = Exec::parallel);

struct GpPosterior {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
    int clipped_variances = 0;
};

// Latent-function posterior in original target units.
GpPosterior gp_posterior(const GpModel& model, const Eigen::MatrixXd& queries, Exec exec = Exec::parallel);

nlohmann::json gp_to_json(const GpModel& model);
GpModel gp_from_json(const nlohmann::json& doc);

}  // namespace uqkit
