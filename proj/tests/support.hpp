#pragma once

#include "uqkit/data.hpp"
#include "uqkit/error.hpp"
#include "uqkit/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

namespace testing_support {

inline uqkit::Dataset make_dataset(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    uqkit::Dataset d;
    d.features = X;
    d.targets = y;
    for (Eigen::Index i = 0; i < X.rows(); ++i) d.ids.push_back("r" + std::to_string(i));
    for (Eigen::Index j = 0; j < X.cols(); ++j) d.feature_names.push_back("f" + std::to_string(j));
    return d;
}

inline std::vector<double> vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// Error code thrown by fn, or nothing if it returned.
template <typename Fn>
bool throws_code(Fn&& fn, uqkit::ErrorCode code) {
    try {
        fn();
    } catch (const uqkit::Error& e) {
        return e.code() == code;
    }
    return false;
}

// Columns z-scored with the population std, matching the GP's own scaling,
// so that kernel parameters chosen here are the ones the model sees.
inline Eigen::MatrixXd zscore(const Eigen::MatrixXd& X) {
    Eigen::MatrixXd Z = X;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double m = X.col(j).mean();
        const double s = std::sqrt((X.col(j).array() - m).square().mean());
        Z.col(j) = (X.col(j).array() - m) / s;
    }
    return Z;
}

// Draw from N(0, C) via a Cholesky factor.
inline Eigen::VectorXd sample_mvn(const Eigen::MatrixXd& C, uqkit::Rng& rng) {
    Eigen::MatrixXd Cj = C;
    const double jitter = 1e-10 * C.trace() / static_cast<double>(C.rows());
    Cj.diagonal().array() += jitter;
    const Eigen::MatrixXd L = Cj.llt().matrixL();
    Eigen::VectorXd z(C.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return L * z;
}

}  // namespace testing_support
