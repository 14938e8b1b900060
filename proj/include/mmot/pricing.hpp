#pragma once

#include "mmot/payoff.hpp"
#include "mmot/solver.hpp"

#include <vector>

namespace mmot {

struct TransactionCostSpec {
    std::vector<double> rates;  // proportional rate per rebalance step

    double rate(int s) const {
        if (rates.empty()) return 0.0;
        if (rates.size() == 1) return rates[0];
        return rates[static_cast<size_t>(s)];
    }
};

struct PriceBounds {
    double lower = 0.0;
    double upper = 0.0;
    double gamma = 0.0;      // transaction-cost widening
    double delta_cal = 0.0;  // calibration-uncertainty widening
    double widened_lo = 0.0;
    double widened_hi = 0.0;

    double mid() const { return 0.5 * (widened_lo + widened_hi); }

    static PriceBounds raw(double lo, double hi) {
        PriceBounds b;
        b.lower = lo;
        b.upper = hi;
        b.widened_lo = lo;
        b.widened_hi = hi;
        return b;
    }
};

struct PriceBoundsResult {
    PriceBounds bounds;
    SolveResult lower_solve;
    SolveResult upper_solve;
};

// Robust bounds: minimize E[phi] for the lower bound, minimize E[-phi] for
// the upper. Reported values are plain payoff expectations under each plan,
// without the entropic term.
inline PriceBoundsResult price_bounds(const MarginalSequence& marginals, const ReferenceChain& ref,
                                      const PayoffSpec& payoff, const SolverConfig& cfg) {
    CompiledPayoff lo = compile_payoff(payoff, marginals.grid(), marginals.periods());
    PriceBoundsResult out;
    out.lower_solve = solve_chain(marginals, ref, &lo.cost, lo.chain, cfg);

    CompiledPayoff hi = lo;
    for (auto& t : hi.cost.tables) t = -t;
    if (hi.chain.terminal_cost.size() > 0) hi.chain.terminal_cost = -hi.chain.terminal_cost;
    out.upper_solve = solve_chain(marginals, ref, &hi.cost, hi.chain, cfg);

    double lower = out.lower_solve.report.primal_cost;
    double upper = -out.upper_solve.report.primal_cost;
    out.bounds = PriceBounds::raw(lower, upper);
    return out;
}

inline PriceBounds widen_transaction_amount(PriceBounds b, double gamma) {
    if (gamma < 0.0) throw ValidationError("widen: gamma must be >= 0");
    b.gamma = gamma;
    b.widened_lo -= gamma;
    b.widened_hi += gamma;
    return b;
}

// Gamma = sum_s k_s E|X_{s+1} - X_s| under the given plan.
inline PriceBounds widen_transaction(const PriceBounds& b, const TransportPlan& plan,
                                     const TransactionCostSpec& tc) {
    if (!tc.rates.empty() && tc.rates.size() != 1 &&
        tc.rates.size() != static_cast<size_t>(plan.steps()))
        throw ValidationError("widen: need one rate or one rate per step");
    for (double k : tc.rates)
        if (k < 0.0) throw ValidationError("widen: transaction cost rates must be >= 0");
    std::vector<double> per_step;
    plan.expected_abs_increments(&per_step);
    double gamma = 0.0;
    for (int s = 0; s < plan.steps(); ++s) gamma += tc.rate(s) * per_step[static_cast<size_t>(s)];
    return widen_transaction_amount(b, gamma);
}

inline PriceBounds widen_calibration_amount(PriceBounds b, double delta) {
    if (delta < 0.0) throw ValidationError("widen: delta must be >= 0");
    b.delta_cal = delta;
    b.widened_lo -= delta;
    b.widened_hi += delta;
    return b;
}

// Delta = L_phi * (L_c + eps D) / eps * max_t delta_t: marginal estimation
// error propagated through the plan's Lipschitz stability constant.
inline PriceBounds widen_calibration(const PriceBounds& b, const std::vector<double>& delta_t,
                                     double payoff_lipschitz, double cost_lipschitz, double epsilon,
                                     double diameter) {
    double worst = 0.0;
    for (double d : delta_t) {
        if (d < 0.0) throw ValidationError("widen: delta_t entries must be >= 0");
        worst = std::max(worst, d);
    }
    double c_stab = (cost_lipschitz + epsilon * diameter) / epsilon;
    return widen_calibration_amount(b, payoff_lipschitz * c_stab * worst);
}

}  // namespace mmot
