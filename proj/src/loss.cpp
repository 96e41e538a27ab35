#include "uqkit/loss.hpp"

#include "uqkit/error.hpp"
#include "uqkit/format.hpp"

#include <cmath>

namespace uqkit {

Objective Objective::quantile(double alpha) {
    require(alpha > 0.0 && alpha < 1.0, ErrorCode::InvalidArgument,
            "quantile alpha must lie in (0, 1), got " + format_double(alpha));
    return Objective(LossKind::Quantile, alpha);
}

double Objective::pointwise(double residual) const {
    switch (kind_) {
        case LossKind::MSE: return residual * residual;
        case LossKind::MAE: return std::abs(residual);
        case LossKind::Quantile:
            return residual >= 0.0 ? alpha_ * residual : (1.0 - alpha_) * (-residual);
    }
    return 0.0;
}

std::string Objective::name() const {
    switch (kind_) {
        case LossKind::MSE: return "mse";
        case LossKind::MAE: return "mae";
        case LossKind::Quantile: return "quantile";
    }
    return "unknown";
}

Objective objective_from_string(const std::string& name, double alpha) {
    if (name == "mse") return Objective::mse();
    if (name == "mae") return Objective::mae();
    if (name == "quantile") return Objective::quantile(alpha);
    fail(ErrorCode::InvalidArgument, "unknown objective: " + name);
}

namespace {

void check_lengths(std::span<const double> observed, std::span<const double> predicted) {
    require(observed.size() == predicted.size(), ErrorCode::LengthMismatch,
            "observed and predicted differ in length");
}

}  // namespace

double loss_value(const Objective& obj, std::span<const double> observed, std::span<const double> predicted) {
    check_lengths(observed, predicted);
    require(!observed.empty(), ErrorCode::EmptyInput, "loss of an empty sample");
    double sum = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) sum += obj.pointwise(observed[i] - predicted[i]);
    return sum / static_cast<double>(observed.size());
}

GradHess loss_grad_hess(const Objective& obj, std::span<const double> observed, std::span<const double> predicted) {
    check_lengths(observed, predicted);
    const std::size_t n = observed.size();
    GradHess out{std::vector<double>(n), std::vector<double>(n, 1.0)};
    for (std::size_t i = 0; i < n; ++i) {
        const double diff = predicted[i] - observed[i];
        double g = 0.0;
        switch (obj.kind()) {
            case LossKind::MSE: g = diff; break;
            case LossKind::MAE: g = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0); break;
            case LossKind::Quantile:
                g = diff < 0.0 ? -obj.alpha() : (diff > 0.0 ? 1.0 - obj.alpha() : 0.0);
                break;
        }
        out.gradient[i] = g;
    }
    return out;
}

}  // namespace uqkit
