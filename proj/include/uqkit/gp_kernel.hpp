#pragma once

#include "uqkit/parallel.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace uqkit {

// One kernel hyperparameter. Log-scale parameters are optimized as log(value).
struct KernelParam {
    double value = 1.0;
    double lower = 1e-5;
    double upper = 1e5;
    bool log_scale = true;
    bool fixed = false;
};

// Composite covariance
//   c1 * RBF_ARD(lambda_1..lambda_N)
// + c2 * RQ(alpha, l)
// + c3 * RBF(l') * ExpSineSquared(l'', p)
// + c4 * WhiteNoise(noise)
// with
//   RBF_ARD   exp(-1/2 sum_i (x_i - x'_i)^2 / lambda_i^2)
//   RQ        (1 + d^2 / (2 alpha l^2))^-alpha
//   RBF       exp(-d^2 / (2 l'^2))
//   ExpSine   exp(-2 sum_i sin^2(pi (x_i - x'_i) / p) / l''^2)
//   WhiteNoise noise on the diagonal of a Gram matrix, 0 elsewhere
// where d is the Euclidean distance. ExpSine sums over coordinates so the
// term stays PSD beyond one dimension. A term is active iff its c > 0; a
// term with c fixed at 0 is disabled and its parameters are not optimized.
struct KernelExpr {
    KernelParam c1{0.0, 1e-5, 1e5, true, true};
    std::vector<KernelParam> lambda;

    KernelParam c2{0.0, 1e-5, 1e5, true, true};
    KernelParam rq_alpha;
    KernelParam rq_length;

    KernelParam c3{0.0, 1e-5, 1e5, true, true};
    KernelParam periodic_rbf_length;
    KernelParam periodic_length;
    KernelParam period;

    KernelParam c4{0.0, 1e-5, 1e5, true, true};
    KernelParam noise{1e-2, 1e-5, 1e5, true, false};

    bool rbf_active() const { return c1.value > 0.0; }
    bool rq_active() const { return c2.value > 0.0; }
    bool periodic_active() const { return c3.value > 0.0; }
    bool noise_active() const { return c4.value > 0.0; }

    int dims() const { return static_cast<int>(lambda.size()); }

    // Builders for the common compositions; every builder leaves the other
    // terms disabled.
    KernelExpr& with_rbf_ard(int dims, double c = 1.0, double length = 1.0);
    KernelExpr& with_rq(double c = 1.0, double alpha = 1.0, double length = 1.0);
    KernelExpr& with_periodic(double c = 1.0, double rbf_length = 1.0, double periodic_length = 1.0,
                              double period = 1.0);
    KernelExpr& with_white_noise(double noise = 1e-2, double c = 1.0, bool fix_c = true);

    // Resizes lambda to `dims`, broadcasting a single length scale.
    void set_dims(int dims);

    // Parameters that the optimizer moves, in a fixed order:
    // c1, lambda..., c2, rq_alpha, rq_length, c3, periodic_rbf_length,
    // periodic_length, period, c4, noise (inactive terms skipped).
    std::vector<KernelParam*> free_params();
    std::vector<const KernelParam*> free_params() const;
    std::vector<std::string> free_param_names() const;

    // Free parameters in optimizer coordinates (log for log-scale ones).
    std::vector<double> theta() const;
    void set_theta(std::span<const double> theta);
    std::vector<std::pair<double, double>> theta_bounds() const;

    void validate() const;
};

// Pointwise k(x, x2); the white-noise term contributes when x == x2.
double kernel_eval(const KernelExpr& k, std::span<const double> x, std::span<const double> x2);

// Gram matrix over the rows of X, white noise on the diagonal.
Eigen::MatrixXd gram_matrix(const KernelExpr& k, const Eigen::MatrixXd& X, Exec exec = Exec::parallel);

// Cross covariance (rows of Q) x (rows of X), white noise excluded.
Eigen::MatrixXd cross_covariance(const KernelExpr& k, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& X,
                                 Exec exec = Exec::parallel);

// k(x, x) without the noise term.
double prior_variance(const KernelExpr& k);

// g_j = 1/2 * sum_ab W_ab * dK_ab / dtheta_j for every free parameter; W symmetric.
std::vector<double> gram_gradient_contract(const KernelExpr& k, const Eigen::MatrixXd& X, const Eigen::MatrixXd& W,
                                           Exec exec = Exec::parallel);

// {"terms": [{"kind": "rbf_ard", "c": .., "lambda": [..]}, {"kind": "rq", "c": .., "alpha": .., "length": ..},
//            {"kind": "periodic_rbf", "c": .., "rbf_length": .., "periodic_length": .., "period": ..},
//            {"kind": "white_noise", "c": .., "noise": ..}]}
// Any numeric parameter may instead be {"value": v, "bounds": [lo, hi], "fixed": bool, "log_scale": bool}.
nlohmann::json kernel_to_json(const KernelExpr& k);
KernelExpr kernel_from_json(const nlohmann::json& doc, int dims);

}  // namespace uqkit
