#pragma once

#include "mmot/common.hpp"
#include "mmot/grid.hpp"
#include "mmot/marginal.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <vector>

namespace mmot {

struct OptionQuote {
    double strike = 0.0;
    double maturity = 0.0;  // years
    double mid = 0.0;       // undiscounted forward-space price
    double spread = 0.0;    // full bid-ask width

    void validate() const {
        if (mid < 0.0) throw ValidationError("quote: mid must be >= 0");
        if (spread < 0.0) throw ValidationError("quote: spread must be >= 0");
        if (mid - 0.5 * spread < 0.0) throw ValidationError("quote: bid below zero");
        if (maturity <= 0.0) throw ValidationError("quote: maturity must be > 0");
    }
};

struct CalibrationConfig {
    double tv_weight = 1e-4;  // lambda on the total-variation penalty
    int max_iters = 200000;
    double step_tol = 1e-14;
    double alpha = 0.05;  // confidence level for the quote-noise radius
};

struct CalibrationResult {
    std::vector<Marginal> marginals;  // one per maturity, ascending
    std::vector<double> times;
    std::vector<double> delta_cal;  // per-maturity W1 uncertainty radius

    // spot pins the time-zero marginal; needed because a lone maturity is not
    // a sequence
    MarginalSequence to_sequence(double forward) const;
};

// Cor-style quote-noise radius: (s/2) sqrt(2 (1 + log(2/alpha)) / M_q).
inline double calibration_delta(double spread, int quote_count, double alpha) {
    if (quote_count < 1) throw ValidationError("calibration delta: need at least one quote");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ValidationError("calibration delta: alpha must lie in (0,1)");
    return 0.5 * spread * std::sqrt(2.0 * (1.0 + std::log(2.0 / alpha)) / quote_count);
}

namespace detail {

// Euclidean projection onto { w >= 0, sum w = 1, <x, w> = f }: two
// multipliers, the mean one found by bisection around the plain simplex
// projection.
inline VectorXd project_simplex_mean(const VectorXd& v, const VectorXd& x, double f) {
    const Eigen::Index n = v.size();

    auto simplex_proj = [&](const VectorXd& y) {
        std::vector<double> u(y.data(), y.data() + n);
        std::sort(u.begin(), u.end(), std::greater<double>());
        double css = 0.0, tau = 0.0;
        int k = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            css += u[static_cast<size_t>(i)];
            double t = (css - 1.0) / static_cast<double>(i + 1);
            if (u[static_cast<size_t>(i)] - t > 0.0) {
                tau = t;
                k = static_cast<int>(i) + 1;
            }
        }
        (void)k;
        return (y.array() - tau).max(0.0).matrix().eval();
    };

    auto mean_of = [&](double lam) {
        VectorXd w = simplex_proj(v - lam * x);
        return std::pair<double, VectorXd>(w.dot(x), std::move(w));
    };

    double lo = -1.0, hi = 1.0;
    double scale = 1.0 + v.array().abs().maxCoeff();
    lo *= scale;
    hi *= scale;
    // mean decreases in lambda; expand until f is bracketed
    for (int it = 0; it < 200 && mean_of(lo).first < f; ++it) lo *= 2.0;
    for (int it = 0; it < 200 && mean_of(hi).first > f; ++it) hi *= 2.0;
    if (mean_of(lo).first < f || mean_of(hi).first > f)
        throw Infeasible("calibration: required mean is outside the grid hull");
    VectorXd w;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        auto [mean, ww] = mean_of(mid);
        w = std::move(ww);
        if (std::abs(mean - f) < 1e-14 * (1.0 + std::abs(f))) break;
        if (mean > f)
            lo = mid;
        else
            hi = mid;
    }
    return w;
}

// Exact equality-constrained nonnegative least squares by an active-set
// scheme (Lawson-Hanson stepping): used for the zero-penalty calibration
// path, where the quote system must be matched to solver precision.
inline VectorXd constrained_nnls(const MatrixXd& a, const VectorXd& c, const VectorXd& x, double f,
                                 int max_iters) {
    const Eigen::Index n = a.cols();
    VectorXd w = project_simplex_mean(VectorXd::Constant(n, 1.0 / static_cast<double>(n)), x, f);
    std::vector<bool> free_set(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) free_set[static_cast<size_t>(i)] = w[i] > 1e-14;

    auto solve_on_support = [&](const std::vector<bool>& s) {
        std::vector<int> idx;
        for (Eigen::Index i = 0; i < n; ++i)
            if (s[static_cast<size_t>(i)]) idx.push_back(static_cast<int>(i));
        const int k = static_cast<int>(idx.size());
        // KKT: [2 As'As, 1, x; 1', 0, 0; x', 0, 0] [w; l1; l2] = [2 As'c; 1; f]
        MatrixXd as(a.rows(), k);
        for (int j = 0; j < k; ++j) as.col(j) = a.col(idx[static_cast<size_t>(j)]);
        MatrixXd kkt = MatrixXd::Zero(k + 2, k + 2);
        kkt.topLeftCorner(k, k) = 2.0 * as.transpose() * as;
        for (int j = 0; j < k; ++j) {
            kkt(j, k) = 1.0;
            kkt(k, j) = 1.0;
            kkt(j, k + 1) = x[idx[static_cast<size_t>(j)]];
            kkt(k + 1, j) = x[idx[static_cast<size_t>(j)]];
        }
        VectorXd rhs(k + 2);
        rhs.head(k) = 2.0 * as.transpose() * c;
        rhs[k] = 1.0;
        rhs[k + 1] = f;
        VectorXd sol = kkt.fullPivLu().solve(rhs);
        VectorXd full = VectorXd::Zero(n);
        for (int j = 0; j < k; ++j) full[idx[static_cast<size_t>(j)]] = sol[j];
        return std::pair<VectorXd, Eigen::Vector2d>(full,
                                                    Eigen::Vector2d(sol[k], sol[k + 1]));
    };

    Eigen::Vector2d mult(0, 0);
    for (int outer = 0; outer < max_iters; ++outer) {
        auto [cand, lam] = solve_on_support(free_set);
        mult = lam;
        double worst = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            if (free_set[static_cast<size_t>(i)]) worst = std::min(worst, cand[i]);
        if (worst >= -1e-12) {
            w = cand;
        } else {
            // step toward cand until the first coordinate hits zero, drop it
            double t_best = 1.0;
            Eigen::Index drop = -1;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (!free_set[static_cast<size_t>(i)] || cand[i] >= 0.0) continue;
                double t = w[i] / (w[i] - cand[i]);
                if (t < t_best) {
                    t_best = t;
                    drop = i;
                }
            }
            w = w + t_best * (cand - w);
            if (drop >= 0) {
                free_set[static_cast<size_t>(drop)] = false;
                w[drop] = 0.0;
            }
            continue;
        }
        // KKT check on the bound set: reduced gradient must be nonnegative
        VectorXd grad = 2.0 * a.transpose() * (a * w - c);
        Eigen::Index enter = -1;
        double most = -1e-10;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (free_set[static_cast<size_t>(i)]) continue;
            double red = grad[i] + mult[0] + mult[1] * x[i];
            if (red < most) {
                most = red;
                enter = i;
            }
        }
        if (enter < 0) return w;
        free_set[static_cast<size_t>(enter)] = true;
    }
    throw NotConverged("calibration: active-set loop hit the iteration limit");
}

}  // namespace detail

// Per maturity: fit a grid density to the quoted calls, with mean pinned to
// the forward. Zero TV weight solves the least-squares system exactly;
// positive TV weight runs projected subgradient descent with diminishing
// steps.
inline CalibrationResult calibrate(const std::vector<OptionQuote>& quotes,
                                   std::shared_ptr<const Grid> grid, const CalibrationConfig& cfg,
                                   double forward) {
    if (quotes.empty()) throw Infeasible("calibrate: empty quote list");
    const Grid& g = *grid;
    if (!(forward > g.lo() && forward < g.hi()))
        throw Infeasible("calibrate: forward lies outside the grid hull");
    std::map<double, std::vector<OptionQuote>> by_t;
    for (const auto& q : quotes) {
        q.validate();
        if (q.strike < g.lo() || q.strike > g.hi())
            throw Infeasible("calibrate: quoted strike outside the grid");
        by_t[q.maturity].push_back(q);
    }

    CalibrationResult out;
    VectorXd x = g.as_vector();
    for (const auto& [t, qs] : by_t) {
        if (qs.size() < 2) throw Infeasible("calibrate: need at least 2 strikes per maturity");
        const int nq = static_cast<int>(qs.size());
        MatrixXd a(nq, g.size());
        VectorXd c(nq);
        double spread_sum = 0.0;
        for (int q = 0; q < nq; ++q) {
            for (int i = 0; i < g.size(); ++i)
                a(q, i) = std::max(g[i] - qs[static_cast<size_t>(q)].strike, 0.0);
            c[q] = qs[static_cast<size_t>(q)].mid;
            spread_sum += qs[static_cast<size_t>(q)].spread;
        }

        VectorXd w;
        if (cfg.tv_weight == 0.0) {
            w = detail::constrained_nnls(a, c, x, forward, cfg.max_iters);
        } else {
            w = detail::project_simplex_mean(
                VectorXd::Constant(g.size(), 1.0 / g.size()), x, forward);
            double prev_obj = std::numeric_limits<double>::infinity();
            for (int k = 0; k < cfg.max_iters; ++k) {
                VectorXd resid = a * w - c;
                VectorXd grad = 2.0 * a.transpose() * resid;
                for (int i = 0; i < g.size(); ++i) {  // TV subgradient
                    if (i + 1 < g.size()) grad[i] -= cfg.tv_weight * ((w[i + 1] > w[i]) ? 1.0 : -1.0);
                    if (i > 0) grad[i] += cfg.tv_weight * ((w[i] > w[i - 1]) ? 1.0 : -1.0);
                }
                double step = 1.0 / (k + 1.0);
                VectorXd next = detail::project_simplex_mean(w - step * grad, x, forward);
                double move = (next - w).cwiseAbs().maxCoeff();
                w = next;
                double obj = (a * w - c).squaredNorm();
                for (int i = 0; i + 1 < g.size(); ++i)
                    obj += cfg.tv_weight * std::abs(w[i + 1] - w[i]);
                if (move < cfg.step_tol && obj <= prev_obj + 1e-15) break;
                prev_obj = std::min(prev_obj, obj);
                if (k + 1 == cfg.max_iters)
                    throw NotConverged("calibrate: projected subgradient hit max_iters");
            }
        }

        out.marginals.emplace_back(grid, w);
        out.times.push_back(t);
        out.delta_cal.push_back(calibration_delta(spread_sum / nq, nq, cfg.alpha));
    }
    return out;
}

inline MarginalSequence CalibrationResult::to_sequence(double forward) const {
    if (marginals.empty()) throw Infeasible("calibration result: empty");
    std::vector<Marginal> ms;
    std::vector<double> ts;
    const Grid& g = marginals[0].grid();
    VectorXd w = VectorXd::Zero(g.size());
    // two-point bracket keeps the spot marginal's mean exactly at the forward
    int j = int(std::upper_bound(g.points().begin(), g.points().end(), forward) -
                g.points().begin());
    if (j <= 0 || j >= g.size()) throw Infeasible("calibration result: forward outside the grid");
    double fr = (forward - g[j - 1]) / (g[j] - g[j - 1]);
    w[j - 1] = 1.0 - fr;
    w[j] = fr;
    ms.emplace_back(marginals[0].grid_ptr(), w);
    ts.push_back(0.0);
    for (size_t k = 0; k < marginals.size(); ++k) {
        ms.push_back(marginals[k]);
        ts.push_back(times[k]);
    }
    return MarginalSequence(std::move(ms), std::move(ts));
}

}  // namespace mmot
