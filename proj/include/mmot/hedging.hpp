#pragma once

#include "mmot/parallel.hpp"
#include "mmot/payoff.hpp"
#include "mmot/rng.hpp"
#include "mmot/solver.hpp"

#include <vector>

namespace mmot {

// Continuation values and plan-derived deltas over the plan's state space
// (layers x grid). For single-layer plans the matrices are 1 x M slices.
struct HedgePolicy {
    std::vector<MatrixXd> values;  // N+1 entries, layers x M
    std::vector<MatrixXd> deltas;  // N entries, layers x M
    double delta_lipschitz = 0.0;
    double price = 0.0;  // E[V_0] under the initial state law
};

namespace detail {

// terminal payoff slice phi(layer, j) for payoffs expressible at the final time
inline MatrixXd terminal_slice(const PayoffSpec& payoff, const TransportPlan& plan) {
    const Grid& g = *plan.grid;
    const int m = g.size();
    const int l = plan.layers();
    MatrixXd v(l, m);
    switch (payoff.kind) {
        case PayoffKind::VanillaCall: {
            if (payoff.t_index >= 0 && payoff.t_index != plan.steps())
                throw UnsupportedPayoff("hedging: vanilla payoff must observe the final time");
            for (int a = 0; a < l; ++a)
                for (int j = 0; j < m; ++j) v(a, j) = std::max(g[j] - payoff.strike, 0.0);
            return v;
        }
        case PayoffKind::AsianCall: {
            if (l < 2) throw UnsupportedPayoff("hedging: asian payoff needs the augmented plan");
            double step = g.diameter() / (l - 1);
            for (int a = 0; a < l; ++a)
                for (int j = 0; j < m; ++j)
                    v(a, j) = std::max(g.lo() + a * step - payoff.strike, 0.0);
            return v;
        }
        case PayoffKind::SpreadAbs: {
            if (l != m) throw UnsupportedPayoff("hedging: spread payoff needs the pinned plan");
            for (int a = 0; a < l; ++a)
                for (int j = 0; j < m; ++j) v(a, j) = std::abs(g[j] - g[a]);
            return v;
        }
        case PayoffKind::CustomPath: {
            if (static_cast<size_t>(l) != payoff.path_table.size())
                throw UnsupportedPayoff("hedging: custom payoff needs the path-augmented plan");
            for (int a = 0; a < l; ++a)
                for (int j = 0; j < m; ++j) v(a, j) = payoff.path_table[static_cast<size_t>(a)];
            return v;
        }
        default:
            throw UnsupportedPayoff("hedging: payoff has no terminal slice");
    }
}

}  // namespace detail

// Backward induction V_t = E[V_{t+1} | state]; deltas are central finite
// differences of the continuation map x -> E[V_{t+1} | X_t = x] (one-sided at
// the ends of the grid).
inline HedgePolicy build_policy(const TransportPlan& plan, const PayoffSpec& payoff) {
    const Grid& g = *plan.grid;
    const int m = g.size();
    const int l = plan.layers();
    const int n = plan.steps();

    HedgePolicy pol;
    pol.values.assign(static_cast<size_t>(n) + 1, MatrixXd());
    pol.deltas.assign(static_cast<size_t>(n), MatrixXd());
    pol.values[static_cast<size_t>(n)] = detail::terminal_slice(payoff, plan);

    LayerTargets tg;
    for (int s = n - 1; s >= 0; --s) {
        const MatrixXd& vnext = pol.values[static_cast<size_t>(s) + 1];
        MatrixXd cont(l, m);
        for (int a = 0; a < l; ++a) {
            const MatrixXd& k = plan.kernels[static_cast<size_t>(s)][static_cast<size_t>(a)];
            const MatrixXd& c1 = plan.choice_one[static_cast<size_t>(s)][static_cast<size_t>(a)];
            for (int i = 0; i < m; ++i) {
                double acc = 0.0;
                for (int j = 0; j < m; ++j) {
                    double p = k(i, j);
                    if (p <= 0.0) continue;
                    plan.chain.step(s, a, j, tg);
                    if (tg.n == 1)
                        acc += p * vnext(tg.layer[0], j);
                    else {
                        double q = (c1.size() > 0) ? c1(i, j) : std::exp(tg.logw[0]);
                        acc += p * (q * vnext(tg.layer[0], j) + (1.0 - q) * vnext(tg.layer[1], j));
                    }
                }
                cont(a, i) = acc;
            }
        }
        MatrixXd delta(l, m);
        for (int a = 0; a < l; ++a)
            for (int i = 0; i < m; ++i) {
                int il = std::max(0, i - 1), ir = std::min(m - 1, i + 1);
                delta(a, i) = (cont(a, ir) - cont(a, il)) / (g[ir] - g[il]);
            }
        pol.deltas[static_cast<size_t>(s)] = std::move(delta);
        pol.values[static_cast<size_t>(s)] = std::move(cont);
    }

    for (int s = 0; s < n; ++s) {
        const MatrixXd& d = pol.deltas[static_cast<size_t>(s)];
        for (int a = 0; a < l; ++a)
            for (int i = 0; i + 1 < m; ++i)
                pol.delta_lipschitz = std::max(
                    pol.delta_lipschitz, std::abs(d(a, i + 1) - d(a, i)) / (g[i + 1] - g[i]));
    }

    pol.price = (plan.init_state.array() * pol.values[0].array()).sum();
    return pol;
}

struct HedgeReport {
    double rmse = 0.0;
    double bound = 0.0;         // L_Delta * C * sqrt(dt) * log(1/dt)
    double frac_within = 0.0;   // fraction of paths with |error| <= bound
    double unhedged_std = 0.0;  // payoff standard deviation
    double mean_payoff = 0.0;
    std::vector<double> terminal_errors;  // one entry per simulated path
};

// Simulate paths from the plan, track the self-financing delta portfolio
// against the payoff, and compare the terminal error with the discretization
// bound proxy (constant fitted by the time-step refinement study).
inline HedgeReport simulate_hedge(const TransportPlan& plan, const HedgePolicy& policy,
                                  int n_paths, std::uint64_t seed, double dt,
                                  double bound_constant = 1.0) {
    const Grid& g = *plan.grid;
    const int m = g.size();
    const int l = plan.layers();
    const int n = plan.steps();
    if (n_paths < 1) throw ValidationError("hedge: need at least one path");

    // flatten the initial state law for inverse-cdf sampling
    std::vector<double> init_cdf(static_cast<size_t>(l) * m);
    double acc = 0.0;
    for (int a = 0; a < l; ++a)
        for (int j = 0; j < m; ++j) {
            acc += plan.init_state(a, j);
            init_cdf[static_cast<size_t>(a) * m + j] = acc;
        }

    HedgeReport rep;
    rep.terminal_errors.assign(static_cast<size_t>(n_paths), 0.0);
    std::vector<double> payoffs(static_cast<size_t>(n_paths), 0.0);

    const int chunk = 256;
    parallel_chunks(n_paths, chunk, [&](int c, int begin, int end) {
        Rng rng(seed, static_cast<std::uint64_t>(c));
        LayerTargets tg;
        for (int p = begin; p < end; ++p) {
            double u = rng.uniform() * acc;
            size_t flat = static_cast<size_t>(
                std::lower_bound(init_cdf.begin(), init_cdf.end(), u) - init_cdf.begin());
            if (flat >= init_cdf.size()) flat = init_cdf.size() - 1;
            int a = static_cast<int>(flat) / m;
            int i = static_cast<int>(flat) % m;

            double pnl = policy.values[0](a, i);
            for (int s = 0; s < n; ++s) {
                const MatrixXd& k = plan.kernels[static_cast<size_t>(s)][static_cast<size_t>(a)];
                double delta = policy.deltas[static_cast<size_t>(s)](a, i);
                double uu = rng.uniform();
                int j = 0;
                double cum = 0.0;
                for (; j < m; ++j) {
                    cum += k(i, j);
                    if (uu <= cum) break;
                }
                if (j >= m) j = m - 1;
                pnl += delta * (g[j] - g[i]);
                plan.chain.step(s, a, j, tg);
                int a_next = tg.layer[0];
                if (tg.n == 2) {
                    const MatrixXd& c1 =
                        plan.choice_one[static_cast<size_t>(s)][static_cast<size_t>(a)];
                    double q = (c1.size() > 0) ? c1(i, j) : std::exp(tg.logw[0]);
                    a_next = (rng.uniform() <= q) ? tg.layer[0] : tg.layer[1];
                }
                a = a_next;
                i = j;
            }
            double phi = policy.values[static_cast<size_t>(n)](a, i);
            payoffs[static_cast<size_t>(p)] = phi;
            rep.terminal_errors[static_cast<size_t>(p)] = phi - pnl;
        }
    });

    double se = 0.0, mp = 0.0;
    for (double e : rep.terminal_errors) se += e * e;
    for (double v : payoffs) mp += v;
    mp /= n_paths;
    double var = 0.0;
    for (double v : payoffs) var += (v - mp) * (v - mp);
    rep.rmse = std::sqrt(se / n_paths);
    rep.unhedged_std = std::sqrt(var / n_paths);
    rep.mean_payoff = mp;
    rep.bound = policy.delta_lipschitz * bound_constant * std::sqrt(dt) * std::log(1.0 / dt);
    int within = 0;
    for (double e : rep.terminal_errors)
        if (std::abs(e) <= rep.bound) ++within;
    rep.frac_within = static_cast<double>(within) / n_paths;
    return rep;
}

}  // namespace mmot
