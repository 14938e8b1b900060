#pragma once

#include "mmot/grid.hpp"
#include "mmot/marginal.hpp"

#include <vector>

namespace mmot {

namespace detail {

struct Cell {
    double lo, hi;
    int depth;
};

// mass of [lo, hi) under a discrete marginal (right-closed for the root's hi)
inline double cell_mass(const Marginal& m, double lo, double hi, double root_hi) {
    double s = 0.0;
    for (int i = 0; i < m.size(); ++i) {
        double x = m.grid()[i];
        bool inside = (x >= lo) && (x < hi || (hi == root_hi && x <= hi));
        if (inside) s += m.weight(i);
    }
    return s;
}

}  // namespace detail

struct LeafCell {
    double lo, hi;
    int depth;
};

// Density-driven binary refinement of the marginals' interval. A cell is
// split iff  max_t mu_t(cell) * diam(cell) / diam(domain)  exceeds the
// threshold (strict), up to max_depth levels.
inline std::vector<LeafCell> sparse_leaf_cells(const MarginalSequence& seq,
                                               const SparseGridConfig& cfg) {
    cfg.validate();
    const Grid& g = seq.grid();
    const double root_lo = g.lo(), root_hi = g.hi();
    const double domain_diam = root_hi - root_lo;

    auto score = [&](const detail::Cell& c) {
        double mass = 0.0;
        for (int t = 0; t <= seq.periods(); ++t)
            mass = std::max(mass, detail::cell_mass(seq.at(t), c.lo, c.hi, root_hi));
        return mass * (c.hi - c.lo) / domain_diam;
    };

    std::vector<LeafCell> leaves;
    std::vector<detail::Cell> frontier{{root_lo, root_hi, 0}};
    while (!frontier.empty()) {
        detail::Cell c = frontier.back();
        frontier.pop_back();
        if (c.depth < cfg.max_depth && score(c) > cfg.threshold) {
            double mid = 0.5 * (c.lo + c.hi);
            // push right first so leaves come out left-to-right
            frontier.push_back({mid, c.hi, c.depth + 1});
            frontier.push_back({c.lo, mid, c.depth + 1});
        } else {
            leaves.push_back({c.lo, c.hi, c.depth});
        }
    }
    std::sort(leaves.begin(), leaves.end(),
              [](const LeafCell& a, const LeafCell& b) { return a.lo < b.lo; });
    return leaves;
}

// Leaf-cell midpoints as a grid.
inline Grid make_sparse(const MarginalSequence& seq, const SparseGridConfig& cfg) {
    std::vector<LeafCell> leaves = sparse_leaf_cells(seq, cfg);
    if (leaves.size() < 2)
        throw EmptyGrid("make_sparse: refinement produced fewer than 2 cells; lower the threshold");
    std::vector<double> centroids;
    centroids.reserve(leaves.size());
    for (const auto& c : leaves) centroids.push_back(0.5 * (c.lo + c.hi));
    return Grid(std::move(centroids));
}

}  // namespace mmot
