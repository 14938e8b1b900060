#pragma once

#include "mmot/common.hpp"
#include "mmot/grid.hpp"
#include "mmot/rng.hpp"

#include <string>
#include <vector>

namespace mmot {

enum class CostKind { PairwiseAbs, PairwiseSquare, ForwardStartCall, Custom };

// Pairwise (adjacent-step) cost c(x) = sum_s c_s(x_{s-1}, x_s), stored as one
// M x M table per step.
struct CostSpec {
    CostKind kind = CostKind::PairwiseAbs;
    std::vector<MatrixXd> tables;  // N tables
    double lipschitz = 1.0;

    int steps() const { return static_cast<int>(tables.size()); }

    static CostSpec pairwise_abs(const Grid& g, int n_steps) {
        CostSpec c;
        c.kind = CostKind::PairwiseAbs;
        c.lipschitz = 1.0;
        MatrixXd t(g.size(), g.size());
        for (int i = 0; i < g.size(); ++i)
            for (int j = 0; j < g.size(); ++j) t(i, j) = std::abs(g[j] - g[i]);
        c.tables.assign(static_cast<size_t>(n_steps), t);
        return c;
    }

    static CostSpec pairwise_square(const Grid& g, int n_steps) {
        CostSpec c;
        c.kind = CostKind::PairwiseSquare;
        c.lipschitz = 2.0 * g.diameter();
        MatrixXd t(g.size(), g.size());
        for (int i = 0; i < g.size(); ++i)
            for (int j = 0; j < g.size(); ++j) t(i, j) = (g[j] - g[i]) * (g[j] - g[i]);
        c.tables.assign(static_cast<size_t>(n_steps), t);
        return c;
    }

    // (x_N - k x_{N-1})^+ on the last step only
    static CostSpec forward_start_call(const Grid& g, int n_steps, double k) {
        CostSpec c;
        c.kind = CostKind::ForwardStartCall;
        c.lipschitz = std::max(1.0, std::abs(k));
        c.tables.assign(static_cast<size_t>(n_steps), MatrixXd::Zero(g.size(), g.size()));
        MatrixXd& last = c.tables.back();
        for (int i = 0; i < g.size(); ++i)
            for (int j = 0; j < g.size(); ++j) last(i, j) = std::max(g[j] - k * g[i], 0.0);
        return c;
    }

    static CostSpec custom(std::vector<MatrixXd> tables, double lipschitz) {
        CostSpec c;
        c.kind = CostKind::Custom;
        c.tables = std::move(tables);
        c.lipschitz = lipschitz;
        return c;
    }

    CostSpec negated() const {
        CostSpec c = *this;
        for (auto& t : c.tables) t = -t;
        return c;
    }

    // Spot-check |c_s(x,y) - c_s(x',y)| <= L |x - x'| on random triples.
    bool check_lipschitz(const Grid& g, std::uint64_t seed = 7, int samples = 100) const {
        Rng rng(seed);
        for (int k = 0; k < samples; ++k) {
            int s = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(tables.size()));
            int i = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(g.size()));
            int i2 = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(g.size()));
            int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(g.size()));
            const MatrixXd& t = tables[static_cast<size_t>(s)];
            double lhs = std::abs(t(i, j) - t(i2, j));
            if (lhs > lipschitz * std::abs(g[i] - g[i2]) + 1e-12) return false;
        }
        return true;
    }
};

}  // namespace mmot
