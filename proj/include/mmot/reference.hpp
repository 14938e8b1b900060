#pragma once

#include "mmot/common.hpp"
#include "mmot/grid.hpp"

#include <memory>
#include <vector>

namespace mmot {

struct BoundaryDefect {
    int step = 0;
    int row = 0;
    double defect = 0.0;  // |achievable row mean - x|
};

// Discrete reference measure: initial law plus one row-stochastic transition
// matrix per step. Rows are floored (full support) and exponentially tilted
// so every interior row is a martingale row.
struct ReferenceChain {
    std::shared_ptr<const Grid> grid;
    VectorXd init;                  // full-support initial law
    std::vector<MatrixXd> kernels;  // N row-stochastic M x M matrices
    double sigma_ref = 0.2;
    std::vector<BoundaryDefect> boundary_defects;

    int steps() const { return static_cast<int>(kernels.size()); }
};

// Gaussian rows with variance sigma_ref^2 * dt, floored, renormalized, then
// tilted to row mean x wherever x is interior to the floored support hull.
// End rows cannot be martingale on a compact grid; they get the closest
// achievable mean and a recorded defect.
inline ReferenceChain build_reference(std::shared_ptr<const Grid> grid,
                                      const std::vector<double>& times, double sigma_ref,
                                      double floor = 1e-9) {
    if (sigma_ref <= 0.0) throw ValidationError("build_reference: sigma_ref must be > 0");
    if (!(floor > 0.0) || floor > 1e-6)
        throw ValidationError("build_reference: floor must lie in (0, 1e-6]");
    if (times.size() < 2) throw ValidationError("build_reference: need at least 2 times");

    const Grid& g = *grid;
    const int m = g.size();
    ReferenceChain ref;
    ref.grid = grid;
    ref.sigma_ref = sigma_ref;
    ref.init = VectorXd::Constant(m, 1.0 / m);

    VectorXd x = g.as_vector();
    for (size_t s = 1; s < times.size(); ++s) {
        double dt = times[s] - times[s - 1];
        if (!(dt > 0.0)) throw ValidationError("build_reference: times must be increasing");
        double var = sigma_ref * sigma_ref * dt;
        MatrixXd k(m, m);
        for (int i = 0; i < m; ++i) {
            ArrayXd row(m);
            for (int j = 0; j < m; ++j) {
                double d = x[j] - x[i];
                row[j] = std::exp(-0.5 * d * d / var) * g.cell_width(j);
            }
            row /= row.sum();
            row = row.max(floor);
            row /= row.sum();

            ArrayXd dev = x.array() - x[i];
            ArrayXd lw = row.log();
            TiltResult tr = solve_exponential_tilt(dev, lw, 1e-12, 100);
            ArrayXd lt = lw + tr.theta * dev;
            double mx = lt.maxCoeff();
            ArrayXd tilted = (lt - mx).exp();
            tilted /= tilted.sum();
            if (tr.clamped) {
                double mean = (tilted * x.array()).sum();
                ref.boundary_defects.push_back(
                    {static_cast<int>(s) - 1, i, std::abs(mean - x[i])});
            }
            k.row(i) = tilted.matrix().transpose();
        }
        ref.kernels.push_back(std::move(k));
    }
    return ref;
}

}  // namespace mmot
