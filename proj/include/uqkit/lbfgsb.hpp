#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace uqkit {

// Returns f(x) and writes the gradient into `grad` (already sized).
using SmoothObjective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct LbfgsbOptions {
    int max_iter = 200;
    int memory = 10;
    double pgtol = 1e-5;  // infinity norm of the projected gradient
    int max_line_search = 30;
};

struct LbfgsbResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;  // projected-gradient test met
    std::string message;
};

// Limited-memory BFGS with box constraints: generalized Cauchy point along
// the projected steepest-descent path, subspace minimization of the compact
// quasi-Newton model over the free variables, then a backtracking Armijo
// search along the resulting feasible direction.
//
// Throws NonFiniteObjective if f(x0) is not finite; non-finite trial points
// during the search are treated as failed steps.
LbfgsbResult lbfgsb_minimize(const SmoothObjective& objective, Eigen::VectorXd x0,
                             const std::vector<std::pair<double, double>>& bounds,
                             const LbfgsbOptions& options = {});

}  // namespace uqkit
