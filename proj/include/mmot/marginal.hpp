#pragma once

#include "mmot/common.hpp"
#include "mmot/grid.hpp"

#include <memory>
#include <vector>

namespace mmot {

// A probability vector over a shared grid.
class Marginal {
   public:
    Marginal() = default;

    Marginal(std::shared_ptr<const Grid> grid, VectorXd weights)
        : grid_(std::move(grid)), w_(std::move(weights)) {
        if (!grid_) throw ValidationError("marginal: null grid");
        if (w_.size() != grid_->size()) throw GridMismatch("marginal: weight/grid size mismatch");
        double sum = 0.0;
        for (Eigen::Index i = 0; i < w_.size(); ++i) {
            if (w_[i] < 0.0) throw ValidationError("marginal: negative weight");
            sum += w_[i];
        }
        if (std::abs(sum - 1.0) > 1e-12) w_ /= sum;
    }

    const Grid& grid() const { return *grid_; }
    std::shared_ptr<const Grid> grid_ptr() const { return grid_; }
    const VectorXd& weights() const { return w_; }
    double weight(int i) const { return w_[i]; }
    int size() const { return static_cast<int>(w_.size()); }

    double mean() const { return w_.dot(grid_->as_vector()); }

    double variance() const {
        double m = mean();
        VectorXd x = grid_->as_vector();
        return (x.array() - m).square().matrix().dot(w_);
    }

    // undiscounted call price sum_i w_i (x_i - k)^+
    double call_price(double k) const {
        double c = 0.0;
        for (int i = 0; i < size(); ++i) {
            double p = (*grid_)[i] - k;
            if (p > 0.0) c += w_[i] * p;
        }
        return c;
    }

    double quantile(double p) const {
        double acc = 0.0;
        for (int i = 0; i < size(); ++i) {
            acc += w_[i];
            if (acc >= p) return (*grid_)[i];
        }
        return grid_->hi();
    }

    // Exponentially tilt the weights so the mean equals target (target must
    // lie strictly inside the support hull). Positivity and support are kept.
    Marginal tilted_to_mean(double target) const {
        VectorXd x = grid_->as_vector();
        ArrayXd d = x.array() - target;
        ArrayXd lw(w_.size());
        for (Eigen::Index i = 0; i < w_.size(); ++i)
            lw[i] = (w_[i] > 0.0) ? std::log(w_[i]) : kNegInf;
        TiltResult tr = solve_exponential_tilt(d, lw, 1e-14);
        if (tr.clamped) throw Infeasible("tilted_to_mean: target outside support hull");
        ArrayXd lt = lw + tr.theta * d;
        double m = lt.maxCoeff();
        VectorXd nw = (lt - m).exp().matrix();
        nw /= nw.sum();
        return Marginal(grid_, nw);
    }

   private:
    std::shared_ptr<const Grid> grid_;
    VectorXd w_;
};

struct ConvexOrderReport {
    bool ok = true;
    double worst_strike = 0.0;
    double worst_violation = 0.0;  // max of mean mismatch and call-curve decrease
};

// Marginals at increasing times on one common grid.
class MarginalSequence {
   public:
    MarginalSequence() = default;

    MarginalSequence(std::vector<Marginal> marginals, std::vector<double> times)
        : marg_(std::move(marginals)), times_(std::move(times)) {
        if (marg_.size() < 2) throw ValidationError("marginal sequence: need at least 2 marginals");
        if (marg_.size() != times_.size())
            throw ValidationError("marginal sequence: times/marginals length mismatch");
        for (size_t i = 1; i < times_.size(); ++i)
            if (!(times_[i] > times_[i - 1]))
                throw ValidationError("marginal sequence: times must be increasing");
        for (size_t i = 1; i < marg_.size(); ++i)
            if (!(marg_[i].grid() == marg_[0].grid()))
                throw GridMismatch("marginal sequence: marginals must share one grid");
    }

    int periods() const { return static_cast<int>(marg_.size()) - 1; }  // N
    int grid_size() const { return marg_[0].size(); }
    const Grid& grid() const { return marg_[0].grid(); }
    std::shared_ptr<const Grid> grid_ptr() const { return marg_[0].grid_ptr(); }
    const Marginal& at(int t) const { return marg_[static_cast<size_t>(t)]; }
    const std::vector<double>& times() const { return times_; }
    double dt(int s) const { return times_[static_cast<size_t>(s)] - times_[static_cast<size_t>(s) - 1]; }

    MarginalSequence appended(const Marginal& m, double time) const {
        std::vector<Marginal> ms = marg_;
        std::vector<double> ts = times_;
        ms.push_back(m);
        ts.push_back(time);
        return MarginalSequence(std::move(ms), std::move(ts));
    }

   private:
    std::vector<Marginal> marg_;
    std::vector<double> times_;
};

// Convex order on a common grid: equal means plus pointwise-dominating call
// price curves at every grid strike.
inline ConvexOrderReport check_convex_order(const MarginalSequence& seq, double tol) {
    ConvexOrderReport rep;
    const Grid& g = seq.grid();
    double mean0 = seq.at(0).mean();
    for (int t = 1; t <= seq.periods(); ++t) {
        double dm = std::abs(seq.at(t).mean() - mean0);
        if (dm > tol && dm > rep.worst_violation) {
            rep.ok = false;
            rep.worst_violation = dm;
            rep.worst_strike = std::numeric_limits<double>::quiet_NaN();  // mean failure, not a strike
        }
    }
    for (int t = 0; t < seq.periods(); ++t) {
        for (int i = 0; i < g.size(); ++i) {
            double k = g[i];
            double drop = seq.at(t).call_price(k) - seq.at(t + 1).call_price(k);
            if (drop > tol && drop > rep.worst_violation) {
                rep.ok = false;
                rep.worst_violation = drop;
                rep.worst_strike = k;
            }
        }
    }
    return rep;
}

// Closed-form 1-D W1: integral of |CDF_a - CDF_b| over the grid.
inline double wasserstein1(const Marginal& a, const Marginal& b) {
    if (!(a.grid() == b.grid())) throw GridMismatch("wasserstein1: marginals on different grids");
    const Grid& g = a.grid();
    double w = 0.0, ca = 0.0, cb = 0.0;
    for (int m = 0; m + 1 < g.size(); ++m) {
        ca += a.weight(m);
        cb += b.weight(m);
        w += std::abs(ca - cb) * (g[m + 1] - g[m]);
    }
    return w;
}

// Re-express a marginal on another grid: each source atom is split between the
// two enclosing target points so the mean is preserved exactly; atoms outside
// the hull go to the nearest end point and the mean is restored by tilting.
inline Marginal rebin(const Marginal& src, std::shared_ptr<const Grid> dst) {
    const Grid& g = *dst;
    VectorXd w = VectorXd::Zero(g.size());
    for (int i = 0; i < src.size(); ++i) {
        double x = src.grid()[i];
        double mass = src.weight(i);
        if (mass == 0.0) continue;
        if (x <= g.lo()) {
            w[0] += mass;
            continue;
        }
        if (x >= g.hi()) {
            w[g.size() - 1] += mass;
            continue;
        }
        int j = int(std::upper_bound(g.points().begin(), g.points().end(), x) - g.points().begin());
        double xl = g[j - 1], xr = g[j];
        double fr = (x - xl) / (xr - xl);
        w[j - 1] += mass * (1.0 - fr);
        w[j] += mass * fr;
    }
    Marginal out(std::move(dst), w);
    double target = src.mean();
    if (std::abs(out.mean() - target) > 1e-13 * (1.0 + std::abs(target)))
        out = out.tilted_to_mean(target);
    return out;
}

}  // namespace mmot
