#pragma once

#include "mmot/cost.hpp"
#include "mmot/oracle.hpp"
#include "mmot/solver.hpp"

#include <cmath>
#include <vector>

namespace mmot {

enum class PayoffKind { AsianCall, ForwardStart, VanillaCall, SpreadAbs, CustomPath };

struct PayoffSpec {
    PayoffKind kind = PayoffKind::VanillaCall;
    double strike = 0.0;
    int t_index = -1;  // vanilla observation time; -1 means terminal
    int buckets = 40;  // running-average resolution for the Asian payoff
    std::vector<double> path_table;  // custom path payoff, only for N <= 3
    double lipschitz = 1.0;

    static PayoffSpec asian_call(double k, int buckets = 40) {
        PayoffSpec p;
        p.kind = PayoffKind::AsianCall;
        p.strike = k;
        p.buckets = buckets;
        p.lipschitz = 1.0;
        return p;
    }
    static PayoffSpec forward_start(double k) {
        PayoffSpec p;
        p.kind = PayoffKind::ForwardStart;
        p.strike = k;
        p.lipschitz = 1.0 + std::abs(k);
        return p;
    }
    static PayoffSpec vanilla_call(double k, int t_index) {
        PayoffSpec p;
        p.kind = PayoffKind::VanillaCall;
        p.strike = k;
        p.t_index = t_index;
        p.lipschitz = 1.0;
        return p;
    }
    static PayoffSpec spread_abs() {
        PayoffSpec p;
        p.kind = PayoffKind::SpreadAbs;
        p.lipschitz = 2.0;
        return p;
    }
    static PayoffSpec custom_path(std::vector<double> table, double lipschitz) {
        PayoffSpec p;
        p.kind = PayoffKind::CustomPath;
        p.path_table = std::move(table);
        p.lipschitz = lipschitz;
        return p;
    }
};

// A payoff compiled into solver inputs: either pairwise step tables, or a
// layer structure with a terminal cost slice.
struct CompiledPayoff {
    CostSpec cost;          // pairwise part (may have zero tables)
    ChainStructure chain;   // layers + terminal slice
    bool pairwise = true;   // true when the chain is trivial
};

namespace detail {

inline void interp_targets(double v, double lo, double step, int count, LayerTargets& t) {
    double pos = (v - lo) / step;
    int b = static_cast<int>(std::floor(pos));
    if (b < 0) {
        t.n = 1;
        t.layer[0] = 0;
        t.logw[0] = 0.0;
        return;
    }
    if (b >= count - 1) {
        t.n = 1;
        t.layer[0] = count - 1;
        t.logw[0] = 0.0;
        return;
    }
    double fr = pos - b;
    if (fr < 1e-12) {
        t.n = 1;
        t.layer[0] = b;
        t.logw[0] = 0.0;
        return;
    }
    t.n = 2;
    t.layer[0] = b;
    t.layer[1] = b + 1;
    t.logw[0] = std::log(1.0 - fr);
    t.logw[1] = std::log(fr);
}

}  // namespace detail

inline CompiledPayoff compile_payoff(const PayoffSpec& payoff, const Grid& grid, int n_steps) {
    CompiledPayoff out;
    const int m = grid.size();
    switch (payoff.kind) {
        case PayoffKind::VanillaCall: {
            int ti = payoff.t_index < 0 ? n_steps : payoff.t_index;
            if (ti < 0 || ti > n_steps)
                throw ValidationError("payoff: vanilla observation time out of range");
            out.cost.kind = CostKind::Custom;
            out.cost.lipschitz = 1.0;
            out.cost.tables.assign(static_cast<size_t>(n_steps), MatrixXd::Zero(m, m));
            MatrixXd& tab = out.cost.tables[static_cast<size_t>(std::max(ti - 1, 0))];
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j) {
                    double v = (ti >= 1) ? grid[j] : grid[i];
                    tab(i, j) = std::max(v - payoff.strike, 0.0);
                }
            out.pairwise = true;
            return out;
        }
        case PayoffKind::ForwardStart: {
            out.cost = CostSpec::forward_start_call(grid, n_steps, payoff.strike);
            out.pairwise = true;
            return out;
        }
        case PayoffKind::AsianCall: {
            const int b = payoff.buckets;
            if (b < 2) throw ValidationError("payoff: need at least 2 average buckets");
            const double lo = grid.lo();
            const double step = grid.diameter() / (b - 1);
            out.pairwise = false;
            out.chain.layers = b;
            out.chain.init_map = [lo, step, b, &grid](int j, LayerTargets& t) {
                detail::interp_targets(grid[j], lo, step, b, t);
            };
            // running average over the n_steps+1 observations
            out.chain.step_map = [lo, step, b, &grid](int s, int a, int j, LayerTargets& t) {
                double avg_prev = lo + a * step;
                double avg = (avg_prev * (s + 1) + grid[j]) / (s + 2);
                detail::interp_targets(avg, lo, step, b, t);
            };
            out.chain.terminal_cost.resize(b, m);
            for (int a = 0; a < b; ++a)
                for (int j = 0; j < m; ++j)
                    out.chain.terminal_cost(a, j) = std::max(lo + a * step - payoff.strike, 0.0);
            out.cost.tables.clear();
            return out;
        }
        case PayoffKind::SpreadAbs: {
            out.pairwise = false;
            out.chain.layers = m;
            out.chain.init_map = [](int j, LayerTargets& t) {
                t.n = 1;
                t.layer[0] = j;
                t.logw[0] = 0.0;
            };
            out.chain.terminal_cost.resize(m, m);
            for (int a = 0; a < m; ++a)
                for (int j = 0; j < m; ++j)
                    out.chain.terminal_cost(a, j) = std::abs(grid[j] - grid[a]);
            out.cost.tables.clear();
            return out;
        }
        case PayoffKind::CustomPath: {
            if (n_steps > 3)
                throw UnsupportedPayoff(
                    "payoff: custom path tables are only supported up to 3 periods");
            size_t expect = TinyInstance::path_count(m, n_steps);
            if (payoff.path_table.size() != expect)
                throw ValidationError("payoff: path table has the wrong size");
            // layer = base-M encoding of the path visited so far
            int layer_count = static_cast<int>(expect);
            out.pairwise = false;
            out.chain.layers = layer_count;
            out.chain.init_map = [](int j, LayerTargets& t) {
                t.n = 1;
                t.layer[0] = j;
                t.logw[0] = 0.0;
            };
            int mm = m;
            out.chain.step_map = [mm](int s, int a, int j, LayerTargets& t) {
                int pw = 1;
                for (int k = 0; k <= s; ++k) pw *= mm;
                t.n = 1;
                t.layer[0] = a + j * pw;
                t.logw[0] = 0.0;
            };
            out.chain.terminal_cost.resize(layer_count, m);
            for (int a = 0; a < layer_count; ++a)
                for (int j = 0; j < m; ++j)
                    out.chain.terminal_cost(a, j) = payoff.path_table[static_cast<size_t>(a)];
            out.cost.tables.clear();
            return out;
        }
    }
    throw UnsupportedPayoff("payoff: unknown kind");
}

}  // namespace mmot
