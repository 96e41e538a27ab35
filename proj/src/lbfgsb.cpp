#include "uqkit/lbfgsb.hpp"

#include "uqkit/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace uqkit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = std::numeric_limits<double>::epsilon();

// Compact limited-memory representation B = theta*I - W M W^T.
struct CompactModel {
    std::deque<Eigen::VectorXd> s;
    std::deque<Eigen::VectorXd> y;
    double theta = 1.0;
    Eigen::MatrixXd W;  // n x 2m, [Y, theta*S]
    Eigen::MatrixXd M;  // 2m x 2m

    int pairs() const { return static_cast<int>(s.size()); }

    void reset(Eigen::Index n) {
        s.clear();
        y.clear();
        theta = 1.0;
        W.resize(n, 0);
        M.resize(0, 0);
    }

    void push(const Eigen::VectorXd& sk, const Eigen::VectorXd& yk, int memory) {
        s.push_back(sk);
        y.push_back(yk);
        if (static_cast<int>(s.size()) > memory) {
            s.pop_front();
            y.pop_front();
        }
        theta = yk.squaredNorm() / yk.dot(sk);
        rebuild();
    }

    void rebuild() {
        const int m = pairs();
        const Eigen::Index n = s.front().size();
        Eigen::MatrixXd S(n, m), Y(n, m);
        for (int i = 0; i < m; ++i) {
            S.col(i) = s[static_cast<std::size_t>(i)];
            Y.col(i) = y[static_cast<std::size_t>(i)];
        }
        W.resize(n, 2 * m);
        W << Y, theta * S;
        const Eigen::MatrixXd SY = S.transpose() * Y;
        Eigen::MatrixXd L = Eigen::MatrixXd::Zero(m, m);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < i; ++j) L(i, j) = SY(i, j);
        }
        Eigen::MatrixXd middle(2 * m, 2 * m);
        middle.topLeftCorner(m, m) = Eigen::MatrixXd((-SY.diagonal()).asDiagonal());
        middle.topRightCorner(m, m) = L.transpose();
        middle.bottomLeftCorner(m, m) = L;
        middle.bottomRightCorner(m, m) = theta * (S.transpose() * S);
        M = middle.inverse();
    }
};

double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                               const Eigen::VectorXd& hi) {
    double norm = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double step = std::clamp(x(i) - g(i), lo(i), hi(i)) - x(i);
        norm = std::max(norm, std::abs(step));
    }
    return norm;
}

struct CauchyPoint {
    Eigen::VectorXd x;
    Eigen::VectorXd c;  // W^T (x_cp - x)
};

CauchyPoint generalized_cauchy_point(const CompactModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                                     const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    const Eigen::Index n = x.size();
    const Eigen::Index m2 = model.W.cols();
    const double theta = model.theta;

    Eigen::VectorXd t(n);
    Eigen::VectorXd d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (g(i) < 0.0) {
            t(i) = std::isinf(hi(i)) ? kInf : (x(i) - hi(i)) / g(i);
        } else if (g(i) > 0.0) {
            t(i) = std::isinf(lo(i)) ? kInf : (x(i) - lo(i)) / g(i);
        } else {
            t(i) = kInf;
        }
        d(i) = t(i) == 0.0 ? 0.0 : -g(i);
    }

    std::vector<Eigen::Index> order;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (t(i) > 0.0 && std::isfinite(t(i))) order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return t(a) != t(b) ? t(a) < t(b) : a < b;
    });

    CauchyPoint cp{x, Eigen::VectorXd::Zero(m2)};
    Eigen::VectorXd p = m2 > 0 ? Eigen::VectorXd(model.W.transpose() * d) : Eigen::VectorXd::Zero(0);
    double fp = -d.squaredNorm();
    double fpp = -theta * fp - (m2 > 0 ? p.dot(model.M * p) : 0.0);
    double dt_min = fpp > 0.0 ? -fp / fpp : kInf;
    double t_old = 0.0;

    for (Eigen::Index b : order) {
        const double dt = t(b) - t_old;
        if (dt_min < dt) break;
        cp.x(b) = d(b) > 0.0 ? hi(b) : lo(b);
        const double z = cp.x(b) - x(b);
        const double gb = g(b);
        if (m2 > 0) {
            cp.c += dt * p;
            const Eigen::VectorXd wb = model.W.row(b).transpose();
            const Eigen::VectorXd Mwb = model.M * wb;
            fp += dt * fpp + gb * gb + theta * gb * z - gb * Mwb.dot(cp.c);
            fpp += -theta * gb * gb - 2.0 * gb * Mwb.dot(p) - gb * gb * wb.dot(Mwb);
            p += gb * wb;
        } else {
            fp += dt * fpp + gb * gb + theta * gb * z;
            fpp += -theta * gb * gb;
        }
        d(b) = 0.0;
        fpp = std::max(fpp, kEps * theta);
        dt_min = -fp / fpp;
        t_old = t(b);
    }
    dt_min = std::max(dt_min, 0.0);
    if (!std::isfinite(dt_min)) dt_min = 0.0;
    t_old += dt_min;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (d(i) != 0.0) cp.x(i) = std::clamp(x(i) + t_old * d(i), lo(i), hi(i));
    }
    if (m2 > 0) cp.c += dt_min * p;
    return cp;
}

// Minimizes the quadratic model over the variables that are free at the
// Cauchy point, then projects back into the box.
Eigen::VectorXd subspace_minimum(const CompactModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                                 const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, const CauchyPoint& cp) {
    const Eigen::Index n = x.size();
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (cp.x(i) > lo(i) && cp.x(i) < hi(i)) free.push_back(i);
    }
    if (free.empty()) return cp.x;

    const double theta = model.theta;
    const Eigen::Index m2 = model.W.cols();
    Eigen::VectorXd r = g + theta * (cp.x - x);
    if (m2 > 0) r -= model.W * (model.M * cp.c);

    const auto nz = static_cast<Eigen::Index>(free.size());
    Eigen::VectorXd rc(nz);
    for (Eigen::Index k = 0; k < nz; ++k) rc(k) = r(free[static_cast<std::size_t>(k)]);

    Eigen::VectorXd du;
    if (m2 == 0) {
        du = -rc / theta;
    } else {
        Eigen::MatrixXd WZ(nz, m2);
        for (Eigen::Index k = 0; k < nz; ++k) WZ.row(k) = model.W.row(free[static_cast<std::size_t>(k)]);
        Eigen::VectorXd v = model.M * (WZ.transpose() * rc);
        const Eigen::MatrixXd N =
            Eigen::MatrixXd::Identity(m2, m2) - (model.M * (WZ.transpose() * WZ)) / theta;
        v = N.partialPivLu().solve(v);
        du = -rc / theta - (WZ * v) / (theta * theta);
    }

    Eigen::VectorXd projected = cp.x;
    for (Eigen::Index k = 0; k < nz; ++k) {
        const auto i = free[static_cast<std::size_t>(k)];
        projected(i) = std::clamp(cp.x(i) + du(k), lo(i), hi(i));
    }
    if ((projected - x).dot(g) < 0.0) return projected;

    // projection destroyed descent: fall back to the longest feasible step along du
    double alpha = 1.0;
    for (Eigen::Index k = 0; k < nz; ++k) {
        const auto i = free[static_cast<std::size_t>(k)];
        if (du(k) > 0.0) alpha = std::min(alpha, (hi(i) - cp.x(i)) / du(k));
        if (du(k) < 0.0) alpha = std::min(alpha, (lo(i) - cp.x(i)) / du(k));
    }
    Eigen::VectorXd out = cp.x;
    for (Eigen::Index k = 0; k < nz; ++k) {
        const auto i = free[static_cast<std::size_t>(k)];
        out(i) = std::clamp(cp.x(i) + alpha * du(k), lo(i), hi(i));
    }
    return out;
}

}  // namespace

LbfgsbResult lbfgsb_minimize(const SmoothObjective& objective, Eigen::VectorXd x0,
                             const std::vector<std::pair<double, double>>& bounds, const LbfgsbOptions& options) {
    const Eigen::Index n = x0.size();
    require(static_cast<Eigen::Index>(bounds.size()) == n, ErrorCode::DimensionMismatch,
            "bounds count differs from the dimension of x0");
    require(options.memory >= 1 && options.max_iter >= 0, ErrorCode::InvalidArgument, "invalid optimizer options");
    Eigen::VectorXd lo(n), hi(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        lo(i) = bounds[static_cast<std::size_t>(i)].first;
        hi(i) = bounds[static_cast<std::size_t>(i)].second;
        require(lo(i) <= hi(i), ErrorCode::InvalidArgument, "lower bound above upper bound");
        require(x0(i) >= lo(i) && x0(i) <= hi(i), ErrorCode::InvalidArgument, "x0 outside the bounds");
    }

    LbfgsbResult result;
    Eigen::VectorXd x = std::move(x0);
    Eigen::VectorXd g(n);
    double f = objective(x, g);
    result.evaluations = 1;
    if (!std::isfinite(f) || !g.allFinite()) {
        fail(ErrorCode::NonFiniteObjective, "objective is not finite at the starting point");
    }

    CompactModel model;
    model.reset(n);
    bool last_search_failed = false;
    Eigen::VectorXd g_trial(n);

    for (result.iterations = 0; result.iterations < options.max_iter; ++result.iterations) {
        if (projected_gradient_norm(x, g, lo, hi) < options.pgtol) {
            result.converged = true;
            result.message = "projected gradient below tolerance";
            break;
        }

        const CauchyPoint cp = generalized_cauchy_point(model, x, g, lo, hi);
        Eigen::VectorXd target = subspace_minimum(model, x, g, lo, hi, cp);
        Eigen::VectorXd d = target - x;
        double slope = g.dot(d);
        if (!(slope < 0.0)) {
            // model is not a descent model here; restart from steepest descent
            model.reset(n);
            for (Eigen::Index i = 0; i < n; ++i) d(i) = std::clamp(x(i) - g(i), lo(i), hi(i)) - x(i);
            slope = g.dot(d);
            if (!(slope < 0.0)) {
                result.converged = true;
                result.message = "no feasible descent direction";
                break;
            }
        }

        double step = 1.0;
        if (model.pairs() == 0) step = std::min(1.0, 1.0 / std::max(d.norm(), kEps));
        bool accepted = false;
        Eigen::VectorXd x_trial(n);
        double f_trial = 0.0;
        for (int ls = 0; ls < options.max_line_search; ++ls) {
            x_trial = x + step * d;
            for (Eigen::Index i = 0; i < n; ++i) x_trial(i) = std::clamp(x_trial(i), lo(i), hi(i));
            f_trial = objective(x_trial, g_trial);
            ++result.evaluations;
            if (std::isfinite(f_trial) && g_trial.allFinite() && f_trial <= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            if (std::isfinite(f_trial)) {
                // safeguarded quadratic interpolation
                const double denom = 2.0 * (f_trial - f - step * slope);
                double next = denom > 0.0 ? -slope * step * step / denom : 0.5 * step;
                step = std::clamp(next, 0.1 * step, 0.5 * step);
            } else {
                step *= 0.25;
            }
        }

        if (!accepted) {
            if (model.pairs() > 0 && !last_search_failed) {
                model.reset(n);
                last_search_failed = true;
                continue;
            }
            result.message = "line search failed";
            break;
        }
        last_search_failed = false;

        const Eigen::VectorXd s = x_trial - x;
        const Eigen::VectorXd y = g_trial - g;
        x = x_trial;
        f = f_trial;
        g = g_trial;
        const double sy = s.dot(y);
        if (sy > kEps * y.squaredNorm()) model.push(s, y, options.memory);
        if (s.lpNorm<Eigen::Infinity>() == 0.0) {
            result.message = "step vanished";
            break;
        }
    }
    if (!result.converged && projected_gradient_norm(x, g, lo, hi) < options.pgtol) {
        result.converged = true;
        result.message = "projected gradient below tolerance";
    }
    if (result.message.empty()) result.message = "iteration limit reached";
    result.x = std::move(x);
    result.value = f;
    return result;
}

}  // namespace uqkit
