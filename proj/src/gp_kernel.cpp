#include "uqkit/gp_kernel.hpp"

#include "uqkit/error.hpp"

#include <algorithm>
#include <cmath>

namespace uqkit {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

KernelParam positive(double value) { return KernelParam{value, 1e-5, 1e5, true, false}; }

// Optimizer slot of every parameter, -1 when fixed or inactive.
struct Slots {
    int c1 = -1;
    std::vector<int> lambda;
    int c2 = -1, rq_alpha = -1, rq_length = -1;
    int c3 = -1, periodic_rbf_length = -1, periodic_length = -1, period = -1;
    int c4 = -1, noise = -1;
    int count = 0;

    explicit Slots(const KernelExpr& k) {
        auto take = [&](const KernelParam& p, bool active) { return active && !p.fixed ? count++ : -1; };
        c1 = take(k.c1, k.rbf_active());
        for (const auto& l : k.lambda) lambda.push_back(take(l, k.rbf_active()));
        c2 = take(k.c2, k.rq_active());
        rq_alpha = take(k.rq_alpha, k.rq_active());
        rq_length = take(k.rq_length, k.rq_active());
        c3 = take(k.c3, k.periodic_active());
        periodic_rbf_length = take(k.periodic_rbf_length, k.periodic_active());
        periodic_length = take(k.periodic_length, k.periodic_active());
        period = take(k.period, k.periodic_active());
        c4 = take(k.c4, k.noise_active());
        noise = take(k.noise, k.noise_active());
    }
};

// d(value)/d(theta): value for log-scale parameters, 1 otherwise.
double chain(const KernelParam& p) { return p.log_scale ? p.value : 1.0; }

// Stationary part of the kernel for one pair, optionally accumulating
// weight * dk/dtheta into grad.
double pair_value(const KernelExpr& k, const Slots& slots, const double* a, const double* b, int dims,
                  double weight = 0.0, double* grad = nullptr) {
    double value = 0.0;
    double d2 = 0.0;
    double ard = 0.0;
    for (int i = 0; i < dims; ++i) {
        const double r = a[i] - b[i];
        d2 += r * r;
        if (k.rbf_active()) {
            const double l = k.lambda[static_cast<std::size_t>(i)].value;
            ard += r * r / (l * l);
        }
    }

    if (k.rbf_active()) {
        const double e = std::exp(-0.5 * ard);
        const double term = k.c1.value * e;
        value += term;
        if (grad) {
            if (slots.c1 >= 0) grad[slots.c1] += weight * e * chain(k.c1);
            for (int i = 0; i < dims; ++i) {
                const int s = slots.lambda[static_cast<std::size_t>(i)];
                if (s < 0) continue;
                const auto& p = k.lambda[static_cast<std::size_t>(i)];
                const double r = a[i] - b[i];
                grad[s] += weight * term * r * r / (p.value * p.value * p.value) * chain(p);
            }
        }
    }

    if (k.rq_active()) {
        const double alpha = k.rq_alpha.value;
        const double l = k.rq_length.value;
        const double base = 1.0 + d2 / (2.0 * alpha * l * l);
        const double pw = std::pow(base, -alpha);
        const double term = k.c2.value * pw;
        value += term;
        if (grad) {
            if (slots.c2 >= 0) grad[slots.c2] += weight * pw * chain(k.c2);
            if (slots.rq_length >= 0) {
                grad[slots.rq_length] += weight * term / base * d2 / (l * l * l) * chain(k.rq_length);
            }
            if (slots.rq_alpha >= 0) {
                const double dalpha = term * (-std::log(base) + d2 / (2.0 * alpha * l * l * base));
                grad[slots.rq_alpha] += weight * dalpha * chain(k.rq_alpha);
            }
        }
    }

    if (k.periodic_active()) {
        const double la = k.periodic_rbf_length.value;
        const double lb = k.periodic_length.value;
        const double p = k.period.value;
        // sin^2 summed per coordinate: a product of 1-D periodic kernels,
        // so PSD in any dimension and the usual form when dims == 1
        double s2 = 0.0, dp_sum = 0.0;
        for (int i = 0; i < dims; ++i) {
            const double r = a[i] - b[i];
            const double arg = M_PI * r / p;
            const double s = std::sin(arg);
            s2 += s * s;
            dp_sum += r * std::sin(2.0 * arg);
        }
        const double term = k.c3.value * std::exp(-d2 / (2.0 * la * la)) * std::exp(-2.0 * s2 / (lb * lb));
        value += term;
        if (grad) {
            if (slots.c3 >= 0) grad[slots.c3] += weight * term / k.c3.value * chain(k.c3);
            if (slots.periodic_rbf_length >= 0) {
                grad[slots.periodic_rbf_length] += weight * term * d2 / (la * la * la) * chain(k.periodic_rbf_length);
            }
            if (slots.periodic_length >= 0) {
                grad[slots.periodic_length] += weight * term * 4.0 * s2 / (lb * lb * lb) * chain(k.periodic_length);
            }
            if (slots.period >= 0) {
                const double dp = term * 2.0 * M_PI * dp_sum / (lb * lb * p * p);
                grad[slots.period] += weight * dp * chain(k.period);
            }
        }
    }
    return value;
}

RowMatrix row_major(const Eigen::MatrixXd& X) { return RowMatrix(X); }

KernelParam param_from_json(const nlohmann::json& j, KernelParam base) {
    if (j.is_number()) {
        base.value = j.get<double>();
        return base;
    }
    base.value = j.value("value", base.value);
    if (j.contains("bounds")) {
        const auto& b = j["bounds"];
        require(b.is_array() && b.size() == 2, ErrorCode::ParseError, "parameter bounds must be [lo, hi]");
        base.lower = b[0].get<double>();
        base.upper = b[1].get<double>();
    }
    base.fixed = j.value("fixed", base.fixed);
    base.log_scale = j.value("log_scale", base.log_scale);
    return base;
}

nlohmann::json param_to_json(const KernelParam& p) {
    return {{"value", p.value}, {"bounds", {p.lower, p.upper}}, {"fixed", p.fixed}, {"log_scale", p.log_scale}};
}

}  // namespace

KernelExpr& KernelExpr::with_rbf_ard(int dims, double c, double length) {
    c1 = positive(c);
    lambda.assign(static_cast<std::size_t>(dims), positive(length));
    return *this;
}

KernelExpr& KernelExpr::with_rq(double c, double alpha, double length) {
    c2 = positive(c);
    rq_alpha = positive(alpha);
    rq_length = positive(length);
    return *this;
}

KernelExpr& KernelExpr::with_periodic(double c, double rbf_length, double periodic_length_, double period_) {
    c3 = positive(c);
    periodic_rbf_length = positive(rbf_length);
    periodic_length = positive(periodic_length_);
    period = positive(period_);
    return *this;
}

KernelExpr& KernelExpr::with_white_noise(double noise_, double c, bool fix_c) {
    c4 = positive(c);
    c4.fixed = fix_c;
    noise = positive(noise_);
    return *this;
}

void KernelExpr::set_dims(int dims) {
    if (static_cast<int>(lambda.size()) == dims) return;
    const KernelParam fill = lambda.empty() ? positive(1.0) : lambda.front();
    require(lambda.size() <= 1, ErrorCode::DimensionMismatch,
            "kernel has " + std::to_string(lambda.size()) + " length scales, data has " + std::to_string(dims));
    lambda.assign(static_cast<std::size_t>(dims), fill);
}

std::vector<KernelParam*> KernelExpr::free_params() {
    std::vector<KernelParam*> out;
    auto add = [&](KernelParam& p, bool active) {
        if (active && !p.fixed) out.push_back(&p);
    };
    add(c1, rbf_active());
    for (auto& l : lambda) add(l, rbf_active());
    add(c2, rq_active());
    add(rq_alpha, rq_active());
    add(rq_length, rq_active());
    add(c3, periodic_active());
    add(periodic_rbf_length, periodic_active());
    add(periodic_length, periodic_active());
    add(period, periodic_active());
    add(c4, noise_active());
    add(noise, noise_active());
    return out;
}

std::vector<const KernelParam*> KernelExpr::free_params() const {
    auto ptrs = const_cast<KernelExpr*>(this)->free_params();
    return {ptrs.begin(), ptrs.end()};
}

std::vector<std::string> KernelExpr::free_param_names() const {
    std::vector<std::string> out;
    auto add = [&](const KernelParam& p, bool active, const std::string& name) {
        if (active && !p.fixed) out.push_back(name);
    };
    add(c1, rbf_active(), "c1");
    for (std::size_t i = 0; i < lambda.size(); ++i) add(lambda[i], rbf_active(), "lambda" + std::to_string(i));
    add(c2, rq_active(), "c2");
    add(rq_alpha, rq_active(), "rq_alpha");
    add(rq_length, rq_active(), "rq_length");
    add(c3, periodic_active(), "c3");
    add(periodic_rbf_length, periodic_active(), "periodic_rbf_length");
    add(periodic_length, periodic_active(), "periodic_length");
    add(period, periodic_active(), "period");
    add(c4, noise_active(), "c4");
    add(noise, noise_active(), "noise");
    return out;
}

std::vector<double> KernelExpr::theta() const {
    std::vector<double> out;
    for (const auto* p : free_params()) out.push_back(p->log_scale ? std::log(p->value) : p->value);
    return out;
}

void KernelExpr::set_theta(std::span<const double> theta) {
    auto params = free_params();
    require(theta.size() == params.size(), ErrorCode::DimensionMismatch, "theta length differs from free parameters");
    for (std::size_t i = 0; i < params.size(); ++i) {
        // exp(log(bound)) can land one ulp outside the box
        const double v = params[i]->log_scale ? std::exp(theta[i]) : theta[i];
        params[i]->value = std::clamp(v, params[i]->lower, params[i]->upper);
    }
}

std::vector<std::pair<double, double>> KernelExpr::theta_bounds() const {
    std::vector<std::pair<double, double>> out;
    for (const auto* p : free_params()) {
        if (p->log_scale) {
            out.emplace_back(std::log(p->lower), std::log(p->upper));
        } else {
            out.emplace_back(p->lower, p->upper);
        }
    }
    return out;
}

void KernelExpr::validate() const {
    auto check = [](const KernelParam& p, const char* name) {
        require(p.lower <= p.upper, ErrorCode::InvalidArgument, std::string(name) + ": lower bound above upper bound");
        require(!p.log_scale || p.lower > 0.0, ErrorCode::InvalidArgument,
                std::string(name) + ": log-scale parameter needs a positive lower bound");
        require(p.fixed || (p.value >= p.lower && p.value <= p.upper), ErrorCode::InvalidArgument,
                std::string(name) + ": value outside its bounds");
    };
    require(rbf_active() || rq_active() || periodic_active(), ErrorCode::InvalidArgument,
            "kernel needs at least one of the rbf_ard, rq, periodic_rbf terms");
    if (rbf_active()) {
        check(c1, "c1");
        for (const auto& l : lambda) {
            check(l, "lambda");
            require(l.value > 0.0, ErrorCode::InvalidArgument, "lambda must be positive");
        }
    }
    if (rq_active()) {
        check(c2, "c2");
        check(rq_alpha, "rq_alpha");
        check(rq_length, "rq_length");
        require(rq_alpha.value > 0.0 && rq_length.value > 0.0, ErrorCode::InvalidArgument, "rq parameters must be positive");
    }
    if (periodic_active()) {
        check(c3, "c3");
        check(periodic_rbf_length, "periodic_rbf_length");
        check(periodic_length, "periodic_length");
        check(period, "period");
        require(periodic_rbf_length.value > 0.0 && periodic_length.value > 0.0 && period.value > 0.0,
                ErrorCode::InvalidArgument, "periodic parameters must be positive");
    }
    if (noise_active()) {
        check(c4, "c4");
        check(noise, "noise");
        require(noise.value >= 0.0, ErrorCode::InvalidArgument, "noise must be non-negative");
    }
}

double kernel_eval(const KernelExpr& k, std::span<const double> x, std::span<const double> x2) {
    require(x.size() == x2.size(), ErrorCode::DimensionMismatch, "kernel inputs differ in length");
    require(!k.rbf_active() || static_cast<int>(x.size()) == k.dims(), ErrorCode::DimensionMismatch,
            "kernel input width differs from the ARD dimension");
    const Slots slots(k);
    double value = pair_value(k, slots, x.data(), x2.data(), static_cast<int>(x.size()));
    if (k.noise_active() && std::equal(x.begin(), x.end(), x2.begin())) value += k.c4.value * k.noise.value;
    return value;
}

double prior_variance(const KernelExpr& k) {
    double v = 0.0;
    if (k.rbf_active()) v += k.c1.value;
    if (k.rq_active()) v += k.c2.value;
    if (k.periodic_active()) v += k.c3.value;
    return v;
}

Eigen::MatrixXd gram_matrix(const KernelExpr& k, const Eigen::MatrixXd& X, Exec exec) {
    require(!k.rbf_active() || X.cols() == k.dims(), ErrorCode::DimensionMismatch,
            "data width differs from the ARD dimension");
    const Slots slots(k);
    const RowMatrix R = row_major(X);
    const Eigen::Index n = R.rows();
    const int dims = static_cast<int>(R.cols());
    const double diag_noise = k.noise_active() ? k.c4.value * k.noise.value : 0.0;
    Eigen::MatrixXd K(n, n);
    auto fill_row = [&](Eigen::Index a) {
        for (Eigen::Index b = 0; b <= a; ++b) {
            const double v = pair_value(k, slots, R.row(a).data(), R.row(b).data(), dims);
            K(a, b) = v;
            K(b, a) = v;
        }
        K(a, a) += diag_noise;
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 8)
        for (Eigen::Index a = 0; a < n; ++a) fill_row(a);
    } else {
        for (Eigen::Index a = 0; a < n; ++a) fill_row(a);
    }
    return K;
}

Eigen::MatrixXd cross_covariance(const KernelExpr& k, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& X, Exec exec) {
    require(Q.cols() == X.cols(), ErrorCode::DimensionMismatch, "query width differs from training width");
    require(!k.rbf_active() || X.cols() == k.dims(), ErrorCode::DimensionMismatch,
            "data width differs from the ARD dimension");
    const Slots slots(k);
    const RowMatrix RQ = row_major(Q);
    const RowMatrix RX = row_major(X);
    const int dims = static_cast<int>(RX.cols());
    Eigen::MatrixXd C(RQ.rows(), RX.rows());
    auto fill_row = [&](Eigen::Index a) {
        for (Eigen::Index b = 0; b < RX.rows(); ++b) C(a, b) = pair_value(k, slots, RQ.row(a).data(), RX.row(b).data(), dims);
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
        for (Eigen::Index a = 0; a < RQ.rows(); ++a) fill_row(a);
    } else {
        for (Eigen::Index a = 0; a < RQ.rows(); ++a) fill_row(a);
    }
    return C;
}

std::vector<double> gram_gradient_contract(const KernelExpr& k, const Eigen::MatrixXd& X, const Eigen::MatrixXd& W,
                                           Exec exec) {
    const Slots slots(k);
    const RowMatrix R = row_major(X);
    const Eigen::Index n = R.rows();
    const int dims = static_cast<int>(R.cols());
    const auto P = static_cast<std::size_t>(slots.count);
    // one partial per row, summed in row order afterwards for reproducibility
    std::vector<double> partial(static_cast<std::size_t>(n) * P, 0.0);
    auto do_row = [&](Eigen::Index a) {
        double* g = partial.data() + static_cast<std::size_t>(a) * P;
        for (Eigen::Index b = 0; b < a; ++b) {
            pair_value(k, slots, R.row(a).data(), R.row(b).data(), dims, W(a, b), g);
        }
        pair_value(k, slots, R.row(a).data(), R.row(a).data(), dims, 0.5 * W(a, a), g);
        if (k.noise_active()) {
            if (slots.c4 >= 0) g[slots.c4] += 0.5 * W(a, a) * k.noise.value * chain(k.c4);
            if (slots.noise >= 0) g[slots.noise] += 0.5 * W(a, a) * k.c4.value * chain(k.noise);
        }
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 8)
        for (Eigen::Index a = 0; a < n; ++a) do_row(a);
    } else {
        for (Eigen::Index a = 0; a < n; ++a) do_row(a);
    }
    std::vector<double> grad(P, 0.0);
    for (Eigen::Index a = 0; a < n; ++a) {
        for (std::size_t j = 0; j < P; ++j) grad[j] += partial[static_cast<std::size_t>(a) * P + j];
    }
    return grad;
}

nlohmann::json kernel_to_json(const KernelExpr& k) {
    nlohmann::json terms = nlohmann::json::array();
    if (k.rbf_active()) {
        nlohmann::json lambdas = nlohmann::json::array();
        for (const auto& l : k.lambda) lambdas.push_back(param_to_json(l));
        terms.push_back({{"kind", "rbf_ard"}, {"c", param_to_json(k.c1)}, {"lambda", lambdas}});
    }
    if (k.rq_active()) {
        terms.push_back({{"kind", "rq"},
                         {"c", param_to_json(k.c2)},
                         {"alpha", param_to_json(k.rq_alpha)},
                         {"length", param_to_json(k.rq_length)}});
    }
    if (k.periodic_active()) {
        terms.push_back({{"kind", "periodic_rbf"},
                         {"c", param_to_json(k.c3)},
                         {"rbf_length", param_to_json(k.periodic_rbf_length)},
                         {"periodic_length", param_to_json(k.periodic_length)},
                         {"period", param_to_json(k.period)}});
    }
    if (k.noise_active()) {
        terms.push_back({{"kind", "white_noise"}, {"c", param_to_json(k.c4)}, {"noise", param_to_json(k.noise)}});
    }
    return {{"terms", terms}};
}

KernelExpr kernel_from_json(const nlohmann::json& doc, int dims) {
    require(doc.contains("terms") && doc["terms"].is_array(), ErrorCode::ParseError, "kernel spec needs a terms array");
    KernelExpr k;
    for (const auto& term : doc["terms"]) {
        const auto kind = term.at("kind").get<std::string>();
        if (kind == "rbf_ard") {
            k.with_rbf_ard(dims);
            if (term.contains("c")) k.c1 = param_from_json(term["c"], k.c1);
            if (term.contains("lambda")) {
                const auto& l = term["lambda"];
                if (l.is_array()) {
                    require(l.size() == 1 || static_cast<int>(l.size()) == dims, ErrorCode::DimensionMismatch,
                            "lambda needs 1 or " + std::to_string(dims) + " entries");
                    for (int i = 0; i < dims; ++i) {
                        k.lambda[static_cast<std::size_t>(i)] =
                            param_from_json(l[l.size() == 1 ? 0 : static_cast<std::size_t>(i)], k.lambda[static_cast<std::size_t>(i)]);
                    }
                } else {
                    for (auto& p : k.lambda) p = param_from_json(l, p);
                }
            }
        } else if (kind == "rq") {
            k.with_rq();
            if (term.contains("c")) k.c2 = param_from_json(term["c"], k.c2);
            if (term.contains("alpha")) k.rq_alpha = param_from_json(term["alpha"], k.rq_alpha);
            if (term.contains("length")) k.rq_length = param_from_json(term["length"], k.rq_length);
        } else if (kind == "periodic_rbf") {
            k.with_periodic();
            if (term.contains("c")) k.c3 = param_from_json(term["c"], k.c3);
            if (term.contains("rbf_length")) k.periodic_rbf_length = param_from_json(term["rbf_length"], k.periodic_rbf_length);
            if (term.contains("periodic_length")) k.periodic_length = param_from_json(term["periodic_length"], k.periodic_length);
            if (term.contains("period")) k.period = param_from_json(term["period"], k.period);
        } else if (kind == "white_noise") {
            k.with_white_noise();
            if (term.contains("c")) k.c4 = param_from_json(term["c"], k.c4);
            if (term.contains("noise")) k.noise = param_from_json(term["noise"], k.noise);
        } else {
            fail(ErrorCode::ParseError, "unknown kernel term: " + kind);
        }
    }
    k.validate();
    return k;
}

}  // namespace uqkit
