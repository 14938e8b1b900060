#pragma once

#include "mmot/common.hpp"
#include "mmot/marginal.hpp"

#include <vector>

namespace mmot {

// Exact unregularized bounds on tiny instances, by explicit LP over path
// probabilities. Independent of the message-passing solver by construction.
struct TinyInstance {
    MarginalSequence marginals;
    std::vector<double> path_cost;  // size M^(N+1), path index p = sum_t i_t M^t

    int grid_size() const { return marginals.grid_size(); }
    int periods() const { return marginals.periods(); }

    void validate() const {
        const int m = grid_size();
        const int n = periods();
        if (m > 8) throw ValidationError("tiny instance: grid capped at 8 points");
        if (n > 3) throw ValidationError("tiny instance: capped at 3 periods");
        size_t expect = 1;
        for (int t = 0; t <= n; ++t) expect *= static_cast<size_t>(m);
        if (path_cost.size() != expect)
            throw ValidationError("tiny instance: cost table has the wrong size");
    }

    static size_t path_count(int m, int n) {
        size_t c = 1;
        for (int t = 0; t <= n; ++t) c *= static_cast<size_t>(m);
        return c;
    }
    static int digit(size_t path, int t, int m) {
        for (int k = 0; k < t; ++k) path /= static_cast<size_t>(m);
        return static_cast<int>(path % static_cast<size_t>(m));
    }
};

struct LpBounds {
    double min_value = 0.0;
    double max_value = 0.0;
    VectorXd argmin;  // path-probability table attaining the minimum
};

namespace detail {

// Dense two-phase simplex, Bland's rule throughout (entering: smallest
// eligible index; leaving: smallest basic index among minimum ratios).
// Minimizes c.p subject to A p = b, p >= 0.
class DenseSimplex {
   public:
    DenseSimplex(MatrixXd a, VectorXd b, VectorXd c)
        : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)) {
        rows_ = static_cast<int>(a_.rows());
        cols_ = static_cast<int>(a_.cols());
        for (int r = 0; r < rows_; ++r)
            if (b_[r] < 0.0) {
                a_.row(r) = -a_.row(r);
                b_[r] = -b_[r];
            }
    }

    // returns optimal value; fills x
    double solve(VectorXd& x) {
        // phase 1 tableau: [A | I] with artificial basis
        const int total = cols_ + rows_;
        t_.resize(rows_ + 1, total + 1);
        t_.setZero();
        t_.block(0, 0, rows_, cols_) = a_;
        for (int r = 0; r < rows_; ++r) {
            t_(r, cols_ + r) = 1.0;
            t_(r, total) = b_[r];
        }
        basis_.resize(static_cast<size_t>(rows_));
        for (int r = 0; r < rows_; ++r) basis_[static_cast<size_t>(r)] = cols_ + r;
        // phase-1 objective row: minimize sum of artificials
        for (int j = 0; j <= total; ++j) {
            double s = 0.0;
            for (int r = 0; r < rows_; ++r) s += t_(r, j);
            t_(rows_, j) = (j >= cols_ && j < total) ? 0.0 : -s;
        }
        run(/*allow_cols=*/cols_, /*phase1=*/true);
        double infeas = -t_(rows_, total);
        if (infeas > 1e-7) throw InfeasibleLP("lp: equality system infeasible");

        // phase 2: replace the objective row, forbid artificial columns
        for (int j = 0; j < cols_; ++j) t_(rows_, j) = c_[j];
        for (int j = cols_; j < total; ++j) t_(rows_, j) = 0.0;
        t_(rows_, total) = 0.0;
        for (int r = 0; r < rows_; ++r) {
            int bv = basis_[static_cast<size_t>(r)];
            if (bv < cols_ && std::abs(t_(rows_, bv)) > 0.0)
                t_.row(rows_) -= t_(rows_, bv) * t_.row(r);
        }
        run(cols_, /*phase1=*/false);

        x = VectorXd::Zero(cols_);
        for (int r = 0; r < rows_; ++r) {
            int bv = basis_[static_cast<size_t>(r)];
            if (bv < cols_) x[bv] = t_(r, total);
        }
        return -t_(rows_, total);
    }

   private:
    void run(int allow_cols, bool phase1) {
        const int total = cols_ + rows_;
        const double tol = 1e-10;
        long guard = 0;
        const long guard_max = 200000;
        while (guard++ < guard_max) {
            // drive out basic artificials sitting at zero before regular pivots
            if (!phase1) {
                bool pivoted = false;
                for (int r = 0; r < rows_ && !pivoted; ++r) {
                    int bv = basis_[static_cast<size_t>(r)];
                    if (bv >= allow_cols) {
                        for (int j = 0; j < allow_cols; ++j)
                            if (std::abs(t_(r, j)) > tol) {
                                pivot(r, j);
                                pivoted = true;
                                break;
                            }
                    }
                }
                if (pivoted) continue;
            }
            int enter = -1;
            for (int j = 0; j < (phase1 ? total : allow_cols); ++j) {
                if (!phase1 && j >= allow_cols) break;
                if (t_(rows_, j) < -tol) {
                    enter = j;
                    break;  // Bland: smallest index
                }
            }
            if (enter < 0) return;  // optimal
            int leave = -1;
            double best_ratio = 0.0;
            for (int r = 0; r < rows_; ++r) {
                double arj = t_(r, enter);
                if (arj > tol) {
                    double ratio = t_(r, total) / arj;
                    if (leave < 0 || ratio < best_ratio - 1e-14 ||
                        (std::abs(ratio - best_ratio) <= 1e-14 &&
                         basis_[static_cast<size_t>(r)] < basis_[static_cast<size_t>(leave)])) {
                        leave = r;
                        best_ratio = ratio;
                    }
                }
            }
            if (leave < 0) throw NumericalError("lp: unbounded direction in a bounded problem");
            pivot(leave, enter);
        }
        throw NumericalError("lp: pivot limit exceeded");
    }

    void pivot(int r, int j) {
        t_.row(r) /= t_(r, j);
        for (int i = 0; i <= rows_; ++i) {
            if (i == r) continue;
            double f = t_(i, j);
            if (f != 0.0) t_.row(i) -= f * t_.row(r);
        }
        basis_[static_cast<size_t>(r)] = j;
    }

    MatrixXd a_;
    VectorXd b_, c_;
    MatrixXd t_;
    std::vector<int> basis_;
    int rows_ = 0, cols_ = 0;
};

}  // namespace detail

// Build the equality system (marginal rows + martingale rows) and solve both
// orientations of the LP.
inline LpBounds lp_bounds(const TinyInstance& inst) {
    inst.validate();
    const int m = inst.grid_size();
    const int n = inst.periods();
    const Grid& g = inst.marginals.grid();
    const size_t paths = TinyInstance::path_count(m, n);

    const int row_count = (n + 1) * m + n * m;
    MatrixXd a = MatrixXd::Zero(row_count, static_cast<Eigen::Index>(paths));
    VectorXd b = VectorXd::Zero(row_count);
    for (int t = 0; t <= n; ++t)
        for (int k = 0; k < m; ++k) b[t * m + k] = inst.marginals.at(t).weight(k);
    for (size_t p = 0; p < paths; ++p) {
        for (int t = 0; t <= n; ++t) {
            int it = TinyInstance::digit(p, t, m);
            a(t * m + it, static_cast<Eigen::Index>(p)) = 1.0;
        }
        for (int t = 1; t <= n; ++t) {
            int prev = TinyInstance::digit(p, t - 1, m);
            int cur = TinyInstance::digit(p, t, m);
            a((n + 1) * m + (t - 1) * m + prev, static_cast<Eigen::Index>(p)) +=
                g[cur] - g[prev];
        }
    }

    VectorXd c(static_cast<Eigen::Index>(paths));
    for (size_t p = 0; p < paths; ++p) c[static_cast<Eigen::Index>(p)] = inst.path_cost[p];

    LpBounds out;
    {
        detail::DenseSimplex sx(a, b, c);
        out.min_value = sx.solve(out.argmin);
    }
    {
        VectorXd dummy;
        detail::DenseSimplex sx(a, b, -c);
        out.max_value = -sx.solve(dummy);
    }
    return out;
}

}  // namespace mmot
