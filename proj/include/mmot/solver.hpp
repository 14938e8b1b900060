#pragma once

#include "mmot/common.hpp"
#include "mmot/cost.hpp"
#include "mmot/grid.hpp"
#include "mmot/marginal.hpp"
#include "mmot/reference.hpp"

#include <chrono>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

namespace mmot {

// ---------------------------------------------------------------------------
// Chain structure. Plain transport uses a single layer; path-dependent
// payoffs ride along as a small auxiliary "layer" coordinate (running-average
// bucket, pinned initial point, ...) whose evolution is a deterministic
// split between at most two target layers.
// ---------------------------------------------------------------------------

struct LayerTargets {
    int n = 1;
    int layer[2] = {0, 0};
    double logw[2] = {0.0, kNegInf};
};

struct ChainStructure {
    int layers = 1;
    // initial layer(s) for a path starting at grid index j
    std::function<void(int j, LayerTargets&)> init_map;
    // layer transition for step s given from-layer a and arrival index j
    std::function<void(int s, int a, int j, LayerTargets&)> step_map;
    // optional terminal cost phi(layer, j), layers x M
    MatrixXd terminal_cost;

    bool trivial() const { return layers == 1 && !init_map && !step_map; }

    void initial(int j, LayerTargets& t) const {
        if (init_map)
            init_map(j, t);
        else {
            t.n = 1;
            t.layer[0] = 0;
            t.logw[0] = 0.0;
        }
    }
    void step(int s, int a, int j, LayerTargets& t) const {
        if (step_map)
            step_map(s, a, j, t);
        else {
            t.n = 1;
            t.layer[0] = a;
            t.logw[0] = 0.0;
        }
    }
};

struct SolverConfig {
    double epsilon = 0.1;
    double tol = 1e-10;        // stopping rule on sup-norm potential change
    double drift_tol = 1e-6;   // conditional drift bound for the final plan
    int max_iters = 5000;
    double h_newton_tol = 1e-12;
    int h_newton_max = 100;
    double convex_tol = 1e-6;  // convex-order pre-check tolerance
    bool track_history = false;

    void validate() const {
        if (!(epsilon > 0.0)) throw ValidationError("solver config: epsilon must be > 0");
        if (!(tol > 0.0)) throw ValidationError("solver config: tol must be > 0");
        if (!(drift_tol > 0.0)) throw ValidationError("solver config: drift_tol must be > 0");
    }
};

// Dual potentials: u_t multiplies the marginal constraint at time t, h_s the
// martingale increment of step s (a function of the step's starting point).
// Entries at zero-mass grid points are masked (kept at 0, excluded from the
// Gibbs factors). Gauge: sum_j u_t(j) mu_t(j) = 0 for every t.
struct DualPotentials {
    MatrixXd u;  // (N+1) x M
    MatrixXd h;  // N x M

    static DualPotentials zeros(int n_steps, int m) {
        return {MatrixXd::Zero(n_steps + 1, m), MatrixXd::Zero(n_steps, m)};
    }
};

struct SolveReport {
    int iters = 0;
    bool converged = false;
    double final_sup_change = std::numeric_limits<double>::infinity();
    double max_drift = 0.0;
    double marginal_defect = 0.0;
    double dual_value = 0.0;
    double primal_value = 0.0;
    double primal_cost = 0.0;  // E_P[c], without the entropic term
    double duality_gap = 0.0;
    std::vector<double> per_iter_error;  // sup distance to the final potentials
    std::vector<double> sup_changes;
    int clamped_rows = 0;
    int frozen_iters = 0;
    int refine_iters = 0;
    double wall_ms = 0.0;
    double frozen_wall_ms = 0.0;
};

// ---------------------------------------------------------------------------
// Transport plan. Kernels are stored per step and per from-layer as M x M
// x-transitions; the layer coordinate moves by the chain's split rule with
// continuation-weighted choice probabilities.
// ---------------------------------------------------------------------------

struct TransportPlan {
    std::shared_ptr<const Grid> grid;
    ChainStructure chain;
    MatrixXd init_state;                            // layers x M
    std::vector<std::vector<MatrixXd>> kernels;     // [step][layer]: M x M
    std::vector<std::vector<MatrixXd>> choice_one;  // [step][layer]: M x M prob of target 0

    int steps() const { return static_cast<int>(kernels.size()); }
    int layers() const { return init_state.rows() > 0 ? static_cast<int>(init_state.rows()) : 1; }

    // single-layer accessors
    const MatrixXd& kernel(int s) const { return kernels[static_cast<size_t>(s)][0]; }
    VectorXd init() const { return init_state.colwise().sum().transpose(); }

    std::vector<MatrixXd> state_laws() const {
        std::vector<MatrixXd> laws;
        laws.push_back(init_state);
        const int m = static_cast<int>(init_state.cols());
        for (int s = 0; s < steps(); ++s) {
            MatrixXd next = MatrixXd::Zero(layers(), m);
            LayerTargets tg;
            for (int a = 0; a < layers(); ++a) {
                const MatrixXd& k = kernels[static_cast<size_t>(s)][static_cast<size_t>(a)];
                for (int i = 0; i < m; ++i) {
                    double w = laws.back()(a, i);
                    if (w <= 0.0) continue;
                    for (int j = 0; j < m; ++j) {
                        double pij = w * k(i, j);
                        if (pij <= 0.0) continue;
                        chain.step(s, a, j, tg);
                        if (tg.n == 1) {
                            next(tg.layer[0], j) += pij;
                        } else {
                            double q = choice_one.empty()
                                           ? std::exp(tg.logw[0])
                                           : choice_one[static_cast<size_t>(s)][static_cast<size_t>(a)](i, j);
                            next(tg.layer[0], j) += pij * q;
                            next(tg.layer[1], j) += pij * (1.0 - q);
                        }
                    }
                }
            }
            laws.push_back(std::move(next));
        }
        return laws;
    }

    VectorXd x_marginal(const MatrixXd& law) const { return law.colwise().sum().transpose(); }

    // drift of the chained plan at every occupied state
    double max_conditional_drift(double mass_floor = 1e-300) const {
        auto laws = state_laws();
        const int m = static_cast<int>(init_state.cols());
        const VectorXd x = grid->as_vector();
        double worst = 0.0;
        for (int s = 0; s < steps(); ++s) {
            for (int i = 0; i < m; ++i) {
                double mass = 0.0, mean = 0.0;
                for (int a = 0; a < layers(); ++a) {
                    double w = laws[static_cast<size_t>(s)](a, i);
                    if (w <= 0.0) continue;
                    mass += w;
                    mean += w * kernels[static_cast<size_t>(s)][static_cast<size_t>(a)].row(i).dot(x);
                }
                if (mass > mass_floor) worst = std::max(worst, std::abs(mean / mass - x[i]));
            }
        }
        return worst;
    }

    // sum_s E | X_{s+1} - X_s | under the plan
    double expected_abs_increments(std::vector<double>* per_step = nullptr) const {
        auto laws = state_laws();
        const int m = static_cast<int>(init_state.cols());
        const VectorXd x = grid->as_vector();
        double total = 0.0;
        for (int s = 0; s < steps(); ++s) {
            double e = 0.0;
            for (int a = 0; a < layers(); ++a)
                for (int i = 0; i < m; ++i) {
                    double w = laws[static_cast<size_t>(s)](a, i);
                    if (w <= 0.0) continue;
                    const MatrixXd& k = kernels[static_cast<size_t>(s)][static_cast<size_t>(a)];
                    for (int j = 0; j < m; ++j)
                        if (k(i, j) > 0.0) e += w * k(i, j) * std::abs(x[j] - x[i]);
                }
            if (per_step) per_step->push_back(e);
            total += e;
        }
        return total;
    }
};

// ---------------------------------------------------------------------------
// Message-passing state for the alternating dual ascent. All messages live
// in the log domain; every reduction subtracts its maximum first.
// ---------------------------------------------------------------------------

class SolverState {
   public:
    SolverState(const MarginalSequence& marginals, const ReferenceChain& ref, const CostSpec* cost,
                const ChainStructure& chain, const SolverConfig& cfg)
        : marg_(marginals), ref_(ref), chain_(chain), cfg_(cfg) {
        cfg_.validate();
        n_ = marginals.periods();
        m_ = marginals.grid_size();
        layers_ = chain.layers;
        if (ref.steps() != n_) throw GridMismatch("solver: reference chain has wrong step count");
        if (!(ref.grid->operator==(marginals.grid())))
            throw GridMismatch("solver: marginals and reference live on different grids");
        if (cost && cost->steps() != 0 && cost->steps() != n_)
            throw GridMismatch("solver: cost table count does not match the period count");
        x_ = marginals.grid().as_vector();

        mu_.resize(n_ + 1, m_);
        for (int t = 0; t <= n_; ++t) mu_.row(t) = marginals.at(t).weights().transpose();

        log_q_.reserve(static_cast<size_t>(n_));
        for (int s = 0; s < n_; ++s)
            log_q_.push_back(ref.kernels[static_cast<size_t>(s)].array().log().matrix());
        log_q0_.resize(m_);
        for (int j = 0; j < m_; ++j) log_q0_[j] = std::log(ref.init[j]);

        cost_ = cost;
        if (cost_) {
            double cmax = 0.0;
            for (const auto& t : cost_->tables) cmax = std::max(cmax, t.array().abs().maxCoeff());
            if (chain_.terminal_cost.size() > 0)
                cmax = std::max(cmax, chain_.terminal_cost.array().abs().maxCoeff());
            if (cmax / cfg_.epsilon > 7e8)
                throw NumericalOverflow("solver: epsilon too small for the cost scale");
        }

        pot_ = DualPotentials::zeros(n_, m_);
        alpha_.assign(static_cast<size_t>(n_) + 1, MatrixXd());
        beta_.assign(static_cast<size_t>(n_) + 1, MatrixXd());
        gather_.assign(static_cast<size_t>(n_), MatrixXd());
        ls_.resize(m_, m_);
    }

    int periods() const { return n_; }
    int grid_size() const { return m_; }
    const DualPotentials& potentials() const { return pot_; }
    void set_potentials(DualPotentials p) { pot_ = std::move(p); }
    const SolverConfig& config() const { return cfg_; }
    int clamped_rows() const { return clamped_rows_; }

    bool active(int t, int j) const { return mu_(t, j) > 0.0; }

    // --- message passes ----------------------------------------------------

    void backward_pass() {
        if (chain_.terminal_cost.size() > 0)
            beta_[static_cast<size_t>(n_)] = -chain_.terminal_cost / cfg_.epsilon;
        else
            beta_[static_cast<size_t>(n_)] = MatrixXd::Zero(layers_, m_);
        VectorXd tmp(m_);
        for (int s = n_ - 1; s >= 0; --s) {
            build_logstep(s);
            MatrixXd& g = gather_[static_cast<size_t>(s)];
            g.resize(layers_, m_);
            const MatrixXd& bnext = beta_[static_cast<size_t>(s) + 1];
            LayerTargets tg;
            for (int a = 0; a < layers_; ++a)
                for (int j = 0; j < m_; ++j) {
                    chain_.step(s, a, j, tg);
                    double v = tg.logw[0] + bnext(tg.layer[0], j);
                    if (tg.n == 2) v = lse2(v, tg.logw[1] + bnext(tg.layer[1], j));
                    g(a, j) = v;
                }
            MatrixXd& b = beta_[static_cast<size_t>(s)];
            b.resize(layers_, m_);
            for (int a = 0; a < layers_; ++a) {
                log_sum_exp_rowwise(ls_, g.row(a).transpose(), tmp);
                b.row(a) = tmp.transpose();
            }
        }
    }

    void forward_pass() {
        scatter_initial();
        for (int t = 1; t <= n_; ++t) {
            build_logstep(t - 1);
            forward_step(t);
        }
    }

    void refresh_messages() {
        backward_pass();
        forward_pass();
    }

    // --- sweeps -------------------------------------------------------------

    void u_sweep() {
        backward_pass();
        // t = 0: base message sans u_0
        MatrixXd atil = scatter_initial_no_u();
        update_u_from(0, atil);
        for (int t = 1; t <= n_; ++t) {
            build_logstep_no_u(t - 1);
            atil = propagate(alpha_[static_cast<size_t>(t) - 1], t - 1);
            update_u_from(t, atil);
        }
    }

    void h_sweep() {
        backward_pass();
        scatter_initial();
        ArrayXd dev(m_), wa(m_);
        for (int s = 0; s < n_; ++s) {
            const MatrixXd& al = alpha_[static_cast<size_t>(s)];
            const MatrixXd& g = gather_[static_cast<size_t>(s)];
            const MatrixXd& lq = log_q_[static_cast<size_t>(s)];
            const MatrixXd* ct =
                (cost_ && cost_->steps() > 0) ? &cost_->tables[static_cast<size_t>(s)] : nullptr;
            for (int i = 0; i < m_; ++i) {
                if (!active(s, i)) continue;
                // collapse layers, then tilt the aggregated row
                for (int j = 0; j < m_; ++j) {
                    if (!active(s + 1, j)) {
                        wa[j] = kNegInf;
                        continue;
                    }
                    double base;
                    if (layers_ == 1) {
                        base = al(0, i) + g(0, j);
                    } else {
                        base = kNegInf;
                        for (int a = 0; a < layers_; ++a) base = lse2(base, al(a, i) + g(a, j));
                    }
                    double c = ct ? (*ct)(i, j) : 0.0;
                    wa[j] = base + lq(i, j) + (pot_.u(s + 1, j) - c) / cfg_.epsilon;
                }
                dev = x_.array() - x_[i];
                TiltResult tr =
                    solve_exponential_tilt(dev, wa, cfg_.h_newton_tol, cfg_.h_newton_max, 1e5);
                if (tr.clamped) {
                    ++clamped_rows_;
                    if (mu_(s, i) > 1e-10 && std::abs(tr.residual) > cfg_.drift_tol)
                        throw ConvexOrderViolation(
                            "solver: martingale row infeasible at an occupied state (convex order "
                            "breaks at the boundary)");
                }
                pot_.h(s, i) = cfg_.epsilon * tr.theta;
            }
            build_logstep(s);
            forward_step(s + 1);
        }
    }

    void gauge_fix() {
        for (int t = 0; t <= n_; ++t) {
            double shift = 0.0;
            for (int j = 0; j < m_; ++j) shift += pot_.u(t, j) * mu_(t, j);
            for (int j = 0; j < m_; ++j)
                if (active(t, j)) pot_.u(t, j) -= shift;
        }
    }

    // single closed-form u update against current messages (testing hook)
    void u_step(int t) {
        refresh_messages();
        for (int j = 0; j < m_; ++j) {
            if (!active(t, j)) continue;
            double s = kNegInf;
            for (int a = 0; a < layers_; ++a)
                s = lse2(s, alpha_[static_cast<size_t>(t)](a, j) + beta_[static_cast<size_t>(t)](a, j));
            pot_.u(t, j) += cfg_.epsilon * (std::log(mu_(t, j)) - s);
        }
    }

    // single martingale projection for row (step s, from-index i); testing hook
    double h_step(int s, int i) {
        refresh_messages();
        ArrayXd wa(m_), dev(m_);
        const MatrixXd& al = alpha_[static_cast<size_t>(s)];
        const MatrixXd& g = gather_[static_cast<size_t>(s)];
        const MatrixXd& lq = log_q_[static_cast<size_t>(s)];
        const MatrixXd* ct =
            (cost_ && cost_->steps() > 0) ? &cost_->tables[static_cast<size_t>(s)] : nullptr;
        for (int j = 0; j < m_; ++j) {
            if (!active(s + 1, j)) {
                wa[j] = kNegInf;
                continue;
            }
            double base = kNegInf;
            for (int a = 0; a < layers_; ++a) base = lse2(base, al(a, i) + g(a, j));
            double c = ct ? (*ct)(i, j) : 0.0;
            wa[j] = base + lq(i, j) + (pot_.u(s + 1, j) - c) / cfg_.epsilon;
        }
        dev = x_.array() - x_[i];
        TiltResult tr = solve_exponential_tilt(dev, wa, cfg_.h_newton_tol, cfg_.h_newton_max, 1e5);
        pot_.h(s, i) = cfg_.epsilon * tr.theta;
        return pot_.h(s, i);
    }

    // --- diagnostics (assume refresh_messages() was called) -----------------

    double log_mass() const {
        double s = kNegInf;
        const MatrixXd& a = alpha_[static_cast<size_t>(n_)];
        const MatrixXd& b = beta_[static_cast<size_t>(n_)];
        for (int l = 0; l < layers_; ++l)
            for (int j = 0; j < m_; ++j) s = lse2(s, a(l, j) + b(l, j));
        return s;
    }

    VectorXd gibbs_marginal(int t) const {
        double lm = log_mass();
        VectorXd out = VectorXd::Zero(m_);
        const MatrixXd& a = alpha_[static_cast<size_t>(t)];
        const MatrixXd& b = beta_[static_cast<size_t>(t)];
        for (int j = 0; j < m_; ++j) {
            double s = kNegInf;
            for (int l = 0; l < layers_; ++l) s = lse2(s, a(l, j) + b(l, j));
            out[j] = (s == kNegInf) ? 0.0 : std::exp(s - lm);
        }
        return out;
    }

    double marginal_defect() const {
        double worst = 0.0;
        for (int t = 0; t <= n_; ++t) {
            VectorXd g = gibbs_marginal(t);
            for (int j = 0; j < m_; ++j) worst = std::max(worst, std::abs(g[j] - mu_(t, j)));
        }
        return worst;
    }

    double max_drift() {
        double worst = 0.0;
        ArrayXd wa(m_);
        for (int s = 0; s < n_; ++s) {
            build_logstep(s);
            const MatrixXd& al = alpha_[static_cast<size_t>(s)];
            const MatrixXd& g = gather_[static_cast<size_t>(s)];
            for (int i = 0; i < m_; ++i) {
                if (!active(s, i)) continue;
                for (int j = 0; j < m_; ++j) {
                    double base = kNegInf;
                    for (int a = 0; a < layers_; ++a) base = lse2(base, al(a, i) + g(a, j));
                    wa[j] = base + ls_(i, j);
                }
                double mx = wa.maxCoeff();
                if (mx == kNegInf) continue;
                double sw = 0.0, swd = 0.0;
                for (int j = 0; j < m_; ++j) {
                    double p = std::exp(wa[j] - mx);
                    sw += p;
                    swd += p * (x_[j] - x_[i]);
                }
                worst = std::max(worst, std::abs(swd / sw));
            }
        }
        return worst;
    }

    double dual_value() const {
        double s = 0.0;
        for (int t = 0; t <= n_; ++t)
            for (int j = 0; j < m_; ++j) s += pot_.u(t, j) * mu_(t, j);
        return s - cfg_.epsilon * log_mass();
    }

    // pairwise joint law of (X_s, X_{s+1}), normalized
    MatrixXd step_joint(int s) {
        build_logstep(s);
        double lm = log_mass();
        MatrixXd j(m_, m_);
        const MatrixXd& al = alpha_[static_cast<size_t>(s)];
        const MatrixXd& g = gather_[static_cast<size_t>(s)];
        for (int i = 0; i < m_; ++i)
            for (int jj = 0; jj < m_; ++jj) {
                double base = kNegInf;
                for (int a = 0; a < layers_; ++a) base = lse2(base, al(a, i) + g(a, jj));
                double v = base + ls_(i, jj) - lm;
                j(i, jj) = (v == kNegInf) ? 0.0 : std::exp(v);
            }
        return j;
    }

    // E_P[c] including any terminal cost slice
    double expected_cost() {
        double e = 0.0;
        for (int s = 0; s < n_; ++s) {
            if (!cost_ || cost_->steps() == 0) break;
            MatrixXd j = step_joint(s);
            e += (j.array() * cost_->tables[static_cast<size_t>(s)].array()).sum();
        }
        if (chain_.terminal_cost.size() > 0) {
            double lm = log_mass();
            const MatrixXd& a = alpha_[static_cast<size_t>(n_)];
            const MatrixXd& b = beta_[static_cast<size_t>(n_)];
            for (int l = 0; l < layers_; ++l)
                for (int j = 0; j < m_; ++j) {
                    double v = a(l, j) + b(l, j);
                    if (v != kNegInf) e += std::exp(v - lm) * chain_.terminal_cost(l, j);
                }
        }
        return e;
    }

    // primal objective through the Gibbs identity:
    //   E_P[c] + eps KL = sum_t <u_t, m_t> + sum_s E[h_s dX_s] - eps log Z
    double primal_value() {
        double acc = 0.0;
        for (int t = 0; t <= n_; ++t) {
            VectorXd g = gibbs_marginal(t);
            for (int j = 0; j < m_; ++j) acc += pot_.u(t, j) * g[j];
        }
        for (int s = 0; s < n_; ++s) {
            MatrixXd j = step_joint(s);
            for (int i = 0; i < m_; ++i)
                for (int jj = 0; jj < m_; ++jj)
                    if (j(i, jj) > 0.0) acc += j(i, jj) * pot_.h(s, i) * (x_[jj] - x_[i]);
        }
        return acc - cfg_.epsilon * log_mass();
    }

    TransportPlan build_plan() {
        TransportPlan plan;
        plan.grid = marg_.grid_ptr();
        plan.chain = chain_;
        double lm = log_mass();
        plan.init_state.resize(layers_, m_);
        for (int a = 0; a < layers_; ++a)
            for (int j = 0; j < m_; ++j) {
                double v = alpha_[0](a, j) + beta_[0](a, j);
                plan.init_state(a, j) = (v == kNegInf || !active(0, j)) ? 0.0 : std::exp(v - lm);
            }
        double ism = plan.init_state.sum();
        if (ism > 0.0) plan.init_state /= ism;

        LayerTargets tg;
        for (int s = 0; s < n_; ++s) {
            build_logstep(s);
            const MatrixXd& bnext = beta_[static_cast<size_t>(s) + 1];
            std::vector<MatrixXd> ks, cs;
            for (int a = 0; a < layers_; ++a) {
                MatrixXd k(m_, m_), c1;
                bool need_choice = false;
                c1 = MatrixXd::Ones(m_, m_);
                for (int i = 0; i < m_; ++i) {
                    double mx = kNegInf;
                    ArrayXd row(m_);
                    for (int j = 0; j < m_; ++j) {
                        chain_.step(s, a, j, tg);
                        double v = tg.logw[0] + bnext(tg.layer[0], j);
                        if (tg.n == 2) {
                            double v2 = tg.logw[1] + bnext(tg.layer[1], j);
                            double tot = lse2(v, v2);
                            c1(i, j) = (tot == kNegInf) ? 1.0 : std::exp(v - tot);
                            v = tot;
                            need_choice = true;
                        }
                        row[j] = ls_(i, j) + v;
                        if (row[j] > mx) mx = row[j];
                    }
                    if (mx == kNegInf) {
                        k.row(i).setZero();
                        k(i, i) = 1.0;  // unreachable state; harmless identity row
                        continue;
                    }
                    double sum = 0.0;
                    for (int j = 0; j < m_; ++j) {
                        double e = std::exp(row[j] - mx);
                        k(i, j) = e;
                        sum += e;
                    }
                    k.row(i) /= sum;
                }
                ks.push_back(std::move(k));
                cs.push_back(need_choice ? std::move(c1) : MatrixXd());
            }
            plan.kernels.push_back(std::move(ks));
            plan.choice_one.push_back(std::move(cs));
        }
        // use exact marginals for reporting consistency checks downstream
        return plan;
    }

    double sup_distance(const DualPotentials& a, const DualPotentials& b) const {
        double d = 0.0;
        for (int t = 0; t <= n_; ++t)
            for (int j = 0; j < m_; ++j)
                if (active(t, j)) d = std::max(d, std::abs(a.u(t, j) - b.u(t, j)));
        double dh = 0.0;
        for (int s = 0; s < n_; ++s)
            for (int i = 0; i < m_; ++i)
                if (active(s, i)) dh = std::max(dh, std::abs(a.h(s, i) - b.h(s, i)));
        return d + dh;
    }

   private:
    void build_logstep(int s) {
        const MatrixXd& lq = log_q_[static_cast<size_t>(s)];
        const MatrixXd* ct =
            (cost_ && cost_->steps() > 0) ? &cost_->tables[static_cast<size_t>(s)] : nullptr;
        for (int i = 0; i < m_; ++i)
            for (int j = 0; j < m_; ++j) {
                if (!active(s + 1, j)) {
                    ls_(i, j) = kNegInf;
                    continue;
                }
                double c = ct ? (*ct)(i, j) : 0.0;
                ls_(i, j) = lq(i, j) + (pot_.u(s + 1, j) + pot_.h(s, i) * (x_[j] - x_[i]) - c) /
                                           cfg_.epsilon;
            }
    }

    // step factor without the arrival u (and without the arrival mask)
    void build_logstep_no_u(int s) {
        const MatrixXd& lq = log_q_[static_cast<size_t>(s)];
        const MatrixXd* ct =
            (cost_ && cost_->steps() > 0) ? &cost_->tables[static_cast<size_t>(s)] : nullptr;
        for (int i = 0; i < m_; ++i)
            for (int j = 0; j < m_; ++j) {
                double c = ct ? (*ct)(i, j) : 0.0;
                ls_(i, j) = lq(i, j) + (pot_.h(s, i) * (x_[j] - x_[i]) - c) / cfg_.epsilon;
            }
    }

    void scatter_initial() {
        MatrixXd& a0 = alpha_[0];
        a0 = MatrixXd::Constant(layers_, m_, kNegInf);
        LayerTargets tg;
        for (int j = 0; j < m_; ++j) {
            if (!active(0, j)) continue;
            double base = log_q0_[j] + pot_.u(0, j) / cfg_.epsilon;
            chain_.initial(j, tg);
            for (int k = 0; k < tg.n; ++k)
                a0(tg.layer[k], j) = lse2(a0(tg.layer[k], j), base + tg.logw[k]);
        }
    }

    MatrixXd scatter_initial_no_u() {
        MatrixXd a0 = MatrixXd::Constant(layers_, m_, kNegInf);
        LayerTargets tg;
        for (int j = 0; j < m_; ++j) {
            double base = log_q0_[j];
            chain_.initial(j, tg);
            for (int k = 0; k < tg.n; ++k)
                a0(tg.layer[k], j) = lse2(a0(tg.layer[k], j), base + tg.logw[k]);
        }
        return a0;
    }

    // alpha[t] from alpha[t-1] through the prebuilt ls_ for step t-1
    void forward_step(int t) {
        MatrixXd& at = alpha_[static_cast<size_t>(t)];
        at = propagate(alpha_[static_cast<size_t>(t) - 1], t - 1);
    }

    MatrixXd propagate(const MatrixXd& prev, int s) {
        MatrixXd out = MatrixXd::Constant(layers_, m_, kNegInf);
        VectorXd z(m_);
        LayerTargets tg;
        for (int a0 = 0; a0 < layers_; ++a0) {
            log_sum_exp_colwise(ls_, prev.row(a0).transpose(), z);
            for (int j = 0; j < m_; ++j) {
                if (z[j] == kNegInf) continue;
                chain_.step(s, a0, j, tg);
                for (int k = 0; k < tg.n; ++k)
                    out(tg.layer[k], j) = lse2(out(tg.layer[k], j), z[j] + tg.logw[k]);
            }
        }
        return out;
    }

    void update_u_from(int t, const MatrixXd& atil) {
        const MatrixXd& b = beta_[static_cast<size_t>(t)];
        MatrixXd at = atil;
        for (int j = 0; j < m_; ++j) {
            if (!active(t, j)) {
                for (int a = 0; a < layers_; ++a) at(a, j) = kNegInf;
                continue;
            }
            double s = kNegInf;
            for (int a = 0; a < layers_; ++a) s = lse2(s, atil(a, j) + b(a, j));
            if (s == kNegInf)
                throw NumericalOverflow("solver: message mass vanished; epsilon too small");
            pot_.u(t, j) = cfg_.epsilon * (std::log(mu_(t, j)) - s);
            for (int a = 0; a < layers_; ++a) at(a, j) += pot_.u(t, j) / cfg_.epsilon;
        }
        alpha_[static_cast<size_t>(t)] = std::move(at);
    }

    const MarginalSequence& marg_;
    const ReferenceChain& ref_;
    ChainStructure chain_;
    SolverConfig cfg_;
    int n_ = 0, m_ = 0, layers_ = 1;
    VectorXd x_;
    MatrixXd mu_;  // (N+1) x M
    std::vector<MatrixXd> log_q_;
    VectorXd log_q0_;
    const CostSpec* cost_ = nullptr;
    DualPotentials pot_;
    std::vector<MatrixXd> alpha_, beta_, gather_;
    MatrixXd ls_;  // scratch step-factor matrix
    int clamped_rows_ = 0;
};

struct SolveResult {
    DualPotentials potentials;
    TransportPlan plan;
    SolveReport report;
};

struct MaxItersExceeded : NumericalError {
    explicit MaxItersExceeded(SolveResult r)
        : NumericalError("solver: iteration limit reached before convergence"),
          best(std::move(r)) {}
    SolveResult best;
};

// ---------------------------------------------------------------------------
// Alternating dual ascent: closed-form marginal updates (u-sweep), per-row
// martingale projections (h-sweep), gauge fix, stop when the sup-norm change
// of the potentials falls below tol.
// ---------------------------------------------------------------------------

inline SolveResult solve_chain(const MarginalSequence& marginals, const ReferenceChain& ref,
                               const CostSpec* cost, const ChainStructure& chain,
                               const SolverConfig& cfg,
                               const DualPotentials* warm = nullptr) {
    auto t_start = std::chrono::steady_clock::now();
    ConvexOrderReport co = check_convex_order(marginals, cfg.convex_tol);
    if (!co.ok)
        throw ConvexOrderViolation("solve: marginals are not in convex order (violation " +
                                   std::to_string(co.worst_violation) + ")");

    SolverState st(marginals, ref, cost, chain, cfg);
    if (warm) st.set_potentials(*warm);

    SolveReport rep;
    std::vector<DualPotentials> history;
    DualPotentials prev = st.potentials();
    bool converged = false;
    for (int k = 0; k < cfg.max_iters; ++k) {
        st.u_sweep();
        st.h_sweep();
        st.gauge_fix();
        double change = st.sup_distance(st.potentials(), prev);
        if (!std::isfinite(change))
            throw NumericalOverflow("solver: potentials diverged; epsilon too small for the cost");
        rep.sup_changes.push_back(change);
        if (cfg.track_history) history.push_back(st.potentials());
        prev = st.potentials();
        rep.iters = k + 1;
        if (change < cfg.tol) {
            rep.final_sup_change = change;
            converged = true;
            break;
        }
        rep.final_sup_change = change;
    }

    st.refresh_messages();
    rep.converged = converged;
    rep.max_drift = st.max_drift();
    rep.marginal_defect = st.marginal_defect();
    rep.dual_value = st.dual_value();
    rep.primal_value = st.primal_value();
    rep.primal_cost = st.expected_cost();
    rep.duality_gap = rep.primal_value - rep.dual_value;
    rep.clamped_rows = st.clamped_rows();
    if (cfg.track_history && !history.empty()) {
        const DualPotentials& fin = history.back();
        for (const auto& p : history) rep.per_iter_error.push_back(st.sup_distance(p, fin));
    }
    rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            t_start)
                      .count();

    SolveResult res{st.potentials(), st.build_plan(), rep};
    if (!converged) throw MaxItersExceeded(std::move(res));
    return res;
}

inline SolveResult solve(const MarginalSequence& marginals, const ReferenceChain& ref,
                         const CostSpec& cost, const SolverConfig& cfg,
                         const DualPotentials* warm = nullptr) {
    ChainStructure trivial;
    return solve_chain(marginals, ref, &cost, trivial, cfg, warm);
}

// Dual objective for given potentials (no optimization): sum_t <u_t, mu_t>
// minus eps log E_Q exp(G / eps).
inline double dual_objective(const DualPotentials& pot, const MarginalSequence& marginals,
                             const ReferenceChain& ref, const CostSpec& cost, double epsilon) {
    SolverConfig cfg;
    cfg.epsilon = epsilon;
    ChainStructure trivial;
    SolverState st(marginals, ref, &cost, trivial, cfg);
    st.set_potentials(pot);
    st.refresh_messages();
    return st.dual_value();
}

// Primal objective of an explicit single-layer plan: E_P[c] + eps KL(P || Q),
// with the KL accumulated initial-law-wise and kernel-row-wise.
inline double primal_objective(const TransportPlan& plan, const MarginalSequence& marginals,
                               const ReferenceChain& ref, const CostSpec& cost, double epsilon) {
    if (plan.layers() != 1)
        throw ValidationError("primal_objective: expects a single-layer plan");
    const int n = plan.steps();
    const int m = static_cast<int>(plan.init_state.cols());
    VectorXd law = plan.init();
    double e_cost = 0.0, kl = 0.0;
    for (int j = 0; j < m; ++j) {
        double p = law[j];
        if (p > 0.0) kl += p * (std::log(p) - std::log(ref.init[j]));
    }
    for (int s = 0; s < n; ++s) {
        const MatrixXd& k = plan.kernel(s);
        const MatrixXd& q = ref.kernels[static_cast<size_t>(s)];
        const MatrixXd* ct = cost.steps() > 0 ? &cost.tables[static_cast<size_t>(s)] : nullptr;
        VectorXd next = VectorXd::Zero(m);
        for (int i = 0; i < m; ++i) {
            double w = law[i];
            if (w > 0.0) {
                for (int j = 0; j < m; ++j) {
                    double pij = k(i, j);
                    if (pij <= 0.0) continue;
                    if (ct) e_cost += w * pij * (*ct)(i, j);
                    kl += w * pij * (std::log(pij) - std::log(q(i, j)));
                    next[j] += w * pij;
                }
            }
        }
        law = next;
    }
    (void)marginals;
    return e_cost + epsilon * kl;
}

}  // namespace mmot
