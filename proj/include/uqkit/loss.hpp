#pragma once

#include <span>
#include <string>
#include <vector>

namespace uqkit {

enum class LossKind { MSE, MAE, Quantile };

// Loss selector. `alpha` is meaningful only for Quantile and must lie in (0, 1).
class Objective {
public:
    static Objective mse() { return Objective(LossKind::MSE, 0.0); }
    static Objective mae() { return Objective(LossKind::MAE, 0.0); }
    static Objective quantile(double alpha);

    LossKind kind() const { return kind_; }
    double alpha() const { return alpha_; }

    // Per-sample loss for residual observed - predicted.
    double pointwise(double residual) const;

    std::string name() const;

    bool operator==(const Objective&) const = default;

private:
    Objective(LossKind kind, double alpha) : kind_(kind), alpha_(alpha) {}

    LossKind kind_;
    double alpha_;
};

Objective objective_from_string(const std::string& name, double alpha = 0.5);

// Mean per-sample loss.
double loss_value(const Objective& obj, std::span<const double> observed, std::span<const double> predicted);

struct GradHess {
    std::vector<double> gradient;
    std::vector<double> hessian;
};

// Per-sample first-order statistic and a positive hessian surrogate, in the
// boosting convention (gradient with respect to the prediction):
//   MSE       g = pred - obs (half the derivative of the squared error), h = 1
//   MAE       g = sign(pred - obs), h = 1
//   Quantile  g = -alpha if obs > pred, 1 - alpha if obs < pred, 0 at the kink; h = 1
GradHess loss_grad_hess(const Objective& obj, std::span<const double> observed, std::span<const double> predicted);

}  // namespace uqkit
