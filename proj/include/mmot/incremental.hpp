#pragma once

#include "mmot/solver.hpp"

#include <chrono>

namespace mmot {

struct IncrementalConfig {
    int k_warm = 50;
    int k_refine = 100;
    SolverConfig solver;
};

// Append one maturity to an existing solution: initialize the new blocks at
// zero, iterate only (u_N, h_{N-1}) against the frozen prefix, then refine
// jointly. The prefix forward message is computed once and reused for the
// whole frozen phase.
inline SolveResult append_period(const MarginalSequence& old_seq, const DualPotentials& prev,
                                 const Marginal& new_marginal, double new_time,
                                 const ReferenceChain& ref, const CostSpec& cost,
                                 const IncrementalConfig& cfg) {
    cfg.solver.validate();
    if (cfg.k_warm < 0 || cfg.k_refine < 0)
        throw ValidationError("append: phase iteration budgets must be >= 0");
    if (!(new_time > old_seq.times().back()))
        throw ValidationError("append: new time must extend the sequence");

    MarginalSequence seq = old_seq.appended(new_marginal, new_time);
    ConvexOrderReport co = check_convex_order(seq, cfg.solver.convex_tol);
    if (!co.ok)
        throw ConvexOrderViolation("append: appended marginal breaks convex order (violation " +
                                   std::to_string(co.worst_violation) + ")");
    const int n = seq.periods();
    const int m = seq.grid_size();
    if (ref.steps() != n) throw GridMismatch("append: reference chain must cover the new step");
    if (cost.steps() != n) throw GridMismatch("append: cost must cover the new step");
    if (prev.u.rows() != n || prev.u.cols() != m)
        throw GridMismatch("append: previous potentials have the wrong shape");

    const double eps = cfg.solver.epsilon;
    const VectorXd x = seq.grid().as_vector();

    DualPotentials pot = DualPotentials::zeros(n, m);
    pot.u.topRows(n) = prev.u;
    pot.h.topRows(n - 1) = prev.h;

    auto t0 = std::chrono::steady_clock::now();

    // prefix forward message at time n-1, fixed during the frozen phase
    VectorXd alpha = VectorXd::Zero(m);
    for (int j = 0; j < m; ++j)
        alpha[j] = (old_seq.at(0).weight(j) > 0.0)
                       ? std::log(ref.init[j]) + pot.u(0, j) / eps
                       : kNegInf;
    VectorXd next(m);
    for (int t = 1; t < n; ++t) {
        const MatrixXd& lqs = ref.kernels[static_cast<size_t>(t - 1)];
        for (int j = 0; j < m; ++j) {
            if (!(seq.at(t).weight(j) > 0.0)) {
                next[j] = kNegInf;
                continue;
            }
            ArrayXd col(m);
            for (int i = 0; i < m; ++i)
                col[i] = alpha[i] + std::log(lqs(i, j)) +
                         (pot.u(t, j) + pot.h(t - 1, i) * (x[j] - x[i]) -
                          cost.tables[static_cast<size_t>(t) - 1](i, j)) /
                             eps;
            next[j] = log_sum_exp(col);
        }
        alpha = next;
    }

    const MatrixXd& lq_last = ref.kernels[static_cast<size_t>(n) - 1];
    const MatrixXd& c_last = cost.tables[static_cast<size_t>(n) - 1];
    MatrixXd lq_log = lq_last.array().log().matrix();

    int frozen_iters = 0;
    ArrayXd dev(m), wrow(m);
    for (int k = 0; k < cfg.k_warm; ++k) {
        VectorXd u_prev = pot.u.row(n).transpose();
        VectorXd h_prev = pot.h.row(n - 1).transpose();
        // closed-form u update for the appended marginal (beta at the end is 0)
        for (int j = 0; j < m; ++j) {
            if (!(new_marginal.weight(j) > 0.0)) continue;
            ArrayXd col(m);
            for (int i = 0; i < m; ++i)
                col[i] = alpha[i] + lq_log(i, j) +
                         (pot.h(n - 1, i) * (x[j] - x[i]) - c_last(i, j)) / eps;
            pot.u(n, j) = eps * (std::log(new_marginal.weight(j)) - log_sum_exp(col));
        }
        // martingale projection of every last-step row
        for (int i = 0; i < m; ++i) {
            if (!(seq.at(n - 1).weight(i) > 0.0)) continue;
            for (int j = 0; j < m; ++j)
                wrow[j] = (new_marginal.weight(j) > 0.0)
                              ? lq_log(i, j) + (pot.u(n, j) - c_last(i, j)) / eps
                              : kNegInf;
            dev = x.array() - x[i];
            TiltResult tr = solve_exponential_tilt(dev, wrow, cfg.solver.h_newton_tol,
                                                   cfg.solver.h_newton_max, 1e5);
            pot.h(n - 1, i) = eps * tr.theta;
        }
        ++frozen_iters;
        double change = (pot.u.row(n).transpose() - u_prev).cwiseAbs().maxCoeff() +
                        (pot.h.row(n - 1).transpose() - h_prev).cwiseAbs().maxCoeff();
        if (change < cfg.solver.tol) break;
    }
    double frozen_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    SolverConfig refine_cfg = cfg.solver;
    refine_cfg.max_iters = std::max(1, cfg.k_refine);
    auto patch = [&](SolveReport& rep) {
        rep.frozen_iters = frozen_iters;
        rep.refine_iters = rep.iters;
        rep.iters = frozen_iters + rep.refine_iters;
        rep.frozen_wall_ms = frozen_ms;
        rep.wall_ms += frozen_ms;
    };
    try {
        SolveResult res = solve(seq, ref, cost, refine_cfg, &pot);
        patch(res.report);
        return res;
    } catch (MaxItersExceeded& e) {
        patch(e.best.report);
        throw MaxItersExceeded(std::move(e.best));
    }
}

// Frozen phase only, at a fixed iteration budget; used by the scaling study.
inline double frozen_phase_only_ms(const MarginalSequence& seq, const ReferenceChain& ref,
                                   const CostSpec& cost, const SolverConfig& scfg, int iters) {
    IncrementalConfig icfg;
    icfg.k_warm = iters;
    icfg.k_refine = 1;
    icfg.solver = scfg;
    icfg.solver.tol = 1e-300;  // never stop early; the budget is the point
    icfg.solver.max_iters = 1;

    const int n = seq.periods();
    MarginalSequence prefix = [&] {
        std::vector<Marginal> ms;
        std::vector<double> ts;
        for (int t = 0; t < n; ++t) {
            ms.push_back(seq.at(t));
            ts.push_back(seq.times()[static_cast<size_t>(t)]);
        }
        return MarginalSequence(std::move(ms), std::move(ts));
    }();
    DualPotentials prev = DualPotentials::zeros(n - 1, seq.grid_size());
    try {
        SolveResult r = append_period(prefix, prev, seq.at(n), seq.times().back(), ref, cost, icfg);
        return r.report.frozen_wall_ms;
    } catch (const MaxItersExceeded& e) {
        return e.best.report.frozen_wall_ms;
    }
}

}  // namespace mmot
