#pragma once

#include "mmot/incremental.hpp"
#include "mmot/io.hpp"
#include "mmot/models.hpp"
#include "mmot/pricing.hpp"
#include "mmot/rng.hpp"
#include "mmot/sparse_grid.hpp"

#include <algorithm>
#include <map>
#include <string>
#include <vector>

namespace mmot {

struct StudyReport {
    std::string kind;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    double fitted_slope = std::numeric_limits<double>::quiet_NaN();
    double fitted_constant = std::numeric_limits<double>::quiet_NaN();
    std::map<std::string, double> scalars;
};

// ---------------------------------------------------------------------------
// Shared fixtures
// ---------------------------------------------------------------------------

inline std::vector<double> linspace_times(double t0, double t1, int n) {
    std::vector<double> t(static_cast<size_t>(n) + 1);
    for (int k = 0; k <= n; ++k) t[static_cast<size_t>(k)] = t0 + (t1 - t0) * k / n;
    return t;
}

// Convex-ordered sequence by construction: start from a discretized profile
// and push it through random mean-preserving local spread kernels.
inline MarginalSequence random_convex_sequence(std::shared_ptr<const Grid> grid, int n_periods,
                                               std::uint64_t seed, double base_width_frac = 0.08,
                                               double spread_prob = 0.35) {
    Rng rng(seed);
    const Grid& g = *grid;
    const int m = g.size();
    const double center = 0.5 * (g.lo() + g.hi()) + 0.1 * (rng.uniform() - 0.5) * g.diameter();
    const double width = g.diameter() * base_width_frac * (0.5 + rng.uniform());

    VectorXd w(m);
    for (int i = 0; i < m; ++i) {
        double z = (g[i] - center) / width;
        w[i] = std::exp(-0.5 * z * z) * g.cell_width(i) + 1e-9;
    }
    w /= w.sum();

    std::vector<Marginal> ms;
    std::vector<double> ts;
    ms.emplace_back(grid, w);
    ts.push_back(0.0);
    for (int t = 1; t <= n_periods; ++t) {
        VectorXd next = VectorXd::Zero(m);
        const VectorXd& cur = ms.back().weights();
        for (int i = 0; i < m; ++i) {
            double mass = cur[i];
            if (mass <= 0.0) continue;
            int reach = std::min(i, m - 1 - i);
            if (reach < 1 || rng.uniform() > spread_prob) {
                next[i] += mass;
                continue;
            }
            int k = 1 + static_cast<int>(rng.next_u64() %
                                         static_cast<std::uint64_t>(std::min(reach, 6)));
            double dl = g[i] - g[i - k], dr = g[i + k] - g[i];
            double q = 0.15 + 0.3 * rng.uniform();  // total mass moved out
            double wl = q * dr / (dl + dr), wr = q * dl / (dl + dr);
            next[i - k] += mass * wl;
            next[i + k] += mass * wr;
            next[i] += mass * (1.0 - wl - wr);
        }
        ms.emplace_back(grid, next);
        ts.push_back(static_cast<double>(t) * 0.05);
    }
    return MarginalSequence(std::move(ms), std::move(ts));
}

// Exact-simulation discrete GBM Asian reference price (forward-discounted
// coordinates, so the drift is zero).
inline double mc_asian_price(double s0, double sigma, const std::vector<double>& times,
                             double strike, int paths, std::uint64_t seed) {
    const int chunk = 4096;
    const int n_chunks = (paths + chunk - 1) / chunk;
    std::vector<double> partial(static_cast<size_t>(n_chunks), 0.0);
    parallel_chunks(paths, chunk, [&](int c, int begin, int end) {
        Rng rng(seed, static_cast<std::uint64_t>(c) + 1000);
        double acc = 0.0;
        for (int p = begin; p < end; ++p) {
            double x = s0, t_prev = 0.0, sum = 0.0;
            int count = 0;
            for (double t : times) {
                double dt = t - t_prev;
                t_prev = t;
                if (dt > 1e-14)
                    x *= std::exp(-0.5 * sigma * sigma * dt + sigma * std::sqrt(dt) * rng.normal());
                sum += x;
                ++count;
            }
            acc += std::max(sum / count - strike, 0.0);
        }
        partial[static_cast<size_t>(c)] = acc;
    });
    double total = 0.0;
    for (double v : partial) total += v;
    return total / paths;
}

// ---------------------------------------------------------------------------
// Linear-rate study: track the sup distance to the converged potentials and
// fit the tail slope; also emit both theoretical candidate rates.
// ---------------------------------------------------------------------------

struct ConvergenceStudyConfig {
    int n_periods = 10;
    int grid_points = 150;
    double epsilon = 0.5;
    double sigma = 0.2;
    double horizon = 0.2;
    double grid_lo = 0.65;
    double grid_hi = 1.35;
    double sigma_ref = 0.2;
    double tol = 5e-11;
    std::uint64_t seed = 17;
};

inline StudyReport study_convergence(const ConvergenceStudyConfig& sc = {}) {
    auto grid = std::make_shared<Grid>(make_uniform(sc.grid_lo, sc.grid_hi, sc.grid_points));
    auto times = linspace_times(0.0, sc.horizon, sc.n_periods);
    ModelParams mp;
    mp.model = Model::GBM;
    mp.spot = 1.0;
    mp.sigma = sc.sigma;
    mp.horizon = sc.horizon;
    mp.seed = sc.seed;
    MarginalSequence seq = generate(mp, times, grid);
    ReferenceChain ref = build_reference(grid, times, sc.sigma_ref);
    CostSpec cost = CostSpec::pairwise_abs(*grid, sc.n_periods);

    SolverConfig cfg;
    cfg.epsilon = sc.epsilon;
    cfg.tol = sc.tol;
    cfg.max_iters = 4000;
    cfg.track_history = true;
    SolveResult res = solve(seq, ref, cost, cfg);

    StudyReport rep;
    rep.kind = "convergence";
    rep.columns = {"iter", "error"};
    const auto& err = res.report.per_iter_error;
    for (size_t k = 0; k < err.size(); ++k)
        rep.rows.push_back({static_cast<double>(k + 1), err[k]});

    // tail window: below 1e-2 of the initial error, above the float floor
    std::vector<double> xs, ys;
    double top = err.empty() ? 0.0 : err.front() * 1e-2;
    for (size_t k = 0; k < err.size(); ++k) {
        if (err[k] <= 0.0) continue;
        if (err[k] < top && err[k] > 1e-9) {
            xs.push_back(static_cast<double>(k + 1));
            ys.push_back(std::log(err[k]));
        }
    }
    if (xs.size() >= 5)
        rep.fitted_slope = fit_slope(xs, ys);
    else
        rep.scalars["insufficient_tail"] = 1.0;

    double kappa = sc.epsilon / (cost.lipschitz * grid->diameter() + sc.epsilon);
    rep.scalars["kappa"] = kappa;
    rep.scalars["rate_two_thirds"] = (2.0 / 3.0) * std::log(1.0 - kappa);
    rep.scalars["rate_one_third_sq"] = (1.0 / 3.0) * std::log(1.0 - kappa * kappa);
    rep.scalars["iters"] = res.report.iters;
    rep.scalars["duality_gap"] = res.report.duality_gap;
    return rep;
}

// ---------------------------------------------------------------------------
// Time-step refinement study: price a fixed Lipschitz payoff (|X_T - X_0|,
// which stays exactly representable at every N) against a fine reference and
// regress the error on N.
// ---------------------------------------------------------------------------

struct DonskerStudyConfig {
    std::vector<int> n_list = {5, 10, 20, 50};
    int n_ref = 200;
    int grid_points = 40;
    double sigma = 0.2;
    double t_first = 0.05;  // first constrained time; keeps X_0 dispersed
    double horizon = 0.2;
    double epsilon = 0.4;
    double sigma_ref = 0.2;
    double tol = 1e-8;
    std::uint64_t seed = 23;
};

inline StudyReport study_donsker(const DonskerStudyConfig& sc = {}) {
    double span = 4.4 * sc.sigma * std::sqrt(sc.horizon);
    auto grid = std::make_shared<Grid>(make_uniform(1.0 - span, 1.0 + span, sc.grid_points));
    ModelParams mp;
    mp.model = Model::GBM;
    mp.spot = 1.0;
    mp.sigma = sc.sigma;
    mp.horizon = sc.horizon;
    PayoffSpec payoff = PayoffSpec::spread_abs();

    auto price_at = [&](int n) {
        auto times = linspace_times(sc.t_first, sc.horizon, n);
        MarginalSequence seq = generate(mp, times, grid);
        ReferenceChain ref = build_reference(grid, times, sc.sigma_ref);
        SolverConfig cfg;
        cfg.epsilon = sc.epsilon;
        cfg.tol = sc.tol;
        cfg.max_iters = 3000;
        CompiledPayoff cp = compile_payoff(payoff, *grid, n);
        SolveResult res = solve_chain(seq, ref, &cp.cost, cp.chain, cfg);
        return res.report.primal_cost;
    };

    double ref_price = price_at(sc.n_ref);
    StudyReport rep;
    rep.kind = "donsker";
    rep.columns = {"n", "dt", "price", "error"};
    std::vector<double> lx, ly, ratio;
    for (int n : sc.n_list) {
        double p = price_at(n);
        double dt = (sc.horizon - sc.t_first) / n;
        double err = std::abs(p - ref_price);
        rep.rows.push_back({static_cast<double>(n), dt, p, err});
        if (err > 0.0) {
            lx.push_back(std::log(static_cast<double>(n)));
            ly.push_back(std::log(err));
            double dt_ref = (sc.horizon - sc.t_first) / sc.n_ref;
            double basis = std::sqrt(dt) * std::log(1.0 / dt) -
                           std::sqrt(dt_ref) * std::log(1.0 / dt_ref);
            if (basis > 0.0) ratio.push_back(err / basis);
        }
    }
    rep.scalars["ref_price"] = ref_price;
    rep.scalars["ref_n"] = sc.n_ref;
    if (lx.size() >= 2) rep.fitted_slope = fit_slope(lx, ly);
    if (!ratio.empty()) {
        double c = 0.0;
        for (double r : ratio) c += r;
        rep.fitted_constant = c / static_cast<double>(ratio.size());
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Regularization sweep on the multi-maturity Asian fixture: price error
// against an exact-simulation reference, iteration counts per epsilon.
// ---------------------------------------------------------------------------

struct EpsilonStudyConfig {
    std::vector<double> eps_list = {0.01, 0.1, 0.5};
    int grid_points = 90;
    int buckets = 40;
    double sigma = 0.2;
    double sigma_ref = 0.26;  // reference-vol mismatch shapes the error curve
    double strike = 1.0;
    double tol = 2e-7;
    int mc_paths = 400000;
    std::uint64_t seed = 29;
};

inline StudyReport study_epsilon(const EpsilonStudyConfig& sc = {}) {
    std::vector<double> times{0.0};
    for (int d = 30; d <= 150; d += 30) times.push_back(d / 365.0);
    double t_max = times.back();
    double span = 4.3 * sc.sigma * std::sqrt(t_max);
    auto grid = std::make_shared<Grid>(make_uniform(1.0 - span, 1.0 + span, sc.grid_points));
    ModelParams mp;
    mp.model = Model::GBM;
    mp.spot = 1.0;
    mp.sigma = sc.sigma;
    mp.horizon = t_max;
    MarginalSequence seq = generate(mp, times, grid);
    ReferenceChain ref = build_reference(grid, times, sc.sigma_ref);
    double ref_price = mc_asian_price(1.0, sc.sigma, times, sc.strike, sc.mc_paths, sc.seed);
    PayoffSpec payoff = PayoffSpec::asian_call(sc.strike, sc.buckets);
    CompiledPayoff cp = compile_payoff(payoff, *grid, seq.periods());

    StudyReport rep;
    rep.kind = "epsilon";
    rep.columns = {"epsilon", "iters", "price", "ref_price", "err_pct"};
    for (double eps : sc.eps_list) {
        SolverConfig cfg;
        cfg.epsilon = eps;
        cfg.tol = sc.tol;
        cfg.max_iters = 5000;
        SolveResult res = solve_chain(seq, ref, &cp.cost, cp.chain, cfg);
        double price = res.report.primal_cost;
        double err = 100.0 * std::abs(price - ref_price) / ref_price;
        rep.rows.push_back({eps, static_cast<double>(res.report.iters), price, ref_price, err});
    }
    rep.scalars["ref_price"] = ref_price;
    return rep;
}

// ---------------------------------------------------------------------------
// Incremental study: appended-maturity iteration counts against cold solves,
// plus the frozen-phase wall-time scaling in the grid size.
// ---------------------------------------------------------------------------

struct IncrementalStudyConfig {
    int fixtures = 5;
    double epsilon = 0.3;
    double tol = 1e-9;
    int timing_iters = 60;
    int timing_reps = 7;
    std::uint64_t seed = 31;
};

inline StudyReport study_incremental(const IncrementalStudyConfig& sc = {}) {
    StudyReport rep;
    rep.kind = "incremental";
    rep.columns = {"fixture", "m", "n_new", "cold_iters", "append_iters", "frozen_iters",
                   "refine_iters"};

    bool all_fewer = true;
    for (int f = 0; f < sc.fixtures; ++f) {
        int m = 50 + 14 * f;
        int n_new = 3 + (f % 3);
        auto grid = std::make_shared<Grid>(make_uniform(0.7, 1.3, m));
        MarginalSequence full =
            random_convex_sequence(grid, n_new, sc.seed + static_cast<std::uint64_t>(f) * 101);
        std::vector<Marginal> pm;
        std::vector<double> pt;
        for (int t = 0; t < n_new; ++t) {
            pm.push_back(full.at(t));
            pt.push_back(full.times()[static_cast<size_t>(t)]);
        }
        MarginalSequence prefix(std::move(pm), std::move(pt));

        ReferenceChain ref_full = build_reference(grid, full.times(), 0.2);
        ReferenceChain ref_prev = build_reference(grid, prefix.times(), 0.2);
        CostSpec cost_full = CostSpec::pairwise_abs(*grid, n_new);
        CostSpec cost_prev = CostSpec::pairwise_abs(*grid, n_new - 1);

        SolverConfig cfg;
        cfg.epsilon = sc.epsilon;
        cfg.tol = sc.tol;
        cfg.max_iters = 3000;

        SolveResult prev = solve(prefix, ref_prev, cost_prev, cfg);
        SolveResult cold = solve(full, ref_full, cost_full, cfg);

        IncrementalConfig icfg;
        icfg.solver = cfg;
        icfg.k_refine = 3000;
        SolveResult inc = append_period(prefix, prev.potentials, full.at(n_new),
                                        full.times().back(), ref_full, cost_full, icfg);
        all_fewer = all_fewer && (inc.report.iters < cold.report.iters);
        rep.rows.push_back({static_cast<double>(f), static_cast<double>(m),
                            static_cast<double>(n_new), static_cast<double>(cold.report.iters),
                            static_cast<double>(inc.report.iters),
                            static_cast<double>(inc.report.frozen_iters),
                            static_cast<double>(inc.report.refine_iters)});
    }
    rep.scalars["all_fewer"] = all_fewer ? 1.0 : 0.0;

    // frozen-phase cost scaling: median wall time at m vs 2m, fixed budget
    auto timed = [&](int m) {
        auto grid = std::make_shared<Grid>(make_uniform(0.7, 1.3, m));
        MarginalSequence seq = random_convex_sequence(grid, 3, sc.seed + 777);
        ReferenceChain ref = build_reference(grid, seq.times(), 0.2);
        CostSpec cost = CostSpec::pairwise_abs(*grid, 3);
        SolverConfig cfg;
        cfg.epsilon = sc.epsilon;
        std::vector<double> ms;
        for (int r = 0; r < sc.timing_reps; ++r)
            ms.push_back(frozen_phase_only_ms(seq, ref, cost, cfg, sc.timing_iters));
        std::sort(ms.begin(), ms.end());
        return ms[ms.size() / 2];
    };
    double t100 = timed(100);
    double t200 = timed(200);
    rep.scalars["frozen_ms_m100"] = t100;
    rep.scalars["frozen_ms_m200"] = t200;
    rep.scalars["time_ratio"] = t200 / t100;
    return rep;
}

// ---------------------------------------------------------------------------
// Sparse-grid study: concentrated-mass fixture solved on the uniform grid and
// on the refinement-tree grid; compares the lower bounds and the wall time.
// ---------------------------------------------------------------------------

struct SparseStudyConfig {
    int uniform_points = 200;
    int n_periods = 3;
    double epsilon = 0.1;
    double tol = 1e-9;
    double threshold = 2e-3;
    int max_depth = 9;
    std::uint64_t seed = 37;
};

inline MarginalSequence concentrated_fixture(std::shared_ptr<const Grid> grid, int n_periods,
                                             std::uint64_t seed) {
    Rng rng(seed);
    const Grid& g = *grid;
    const int m = g.size();
    const double center = 0.5 * (g.lo() + g.hi());
    VectorXd w(m);
    double narrow = 0.012 * g.diameter(), wide = 0.45 * g.diameter();
    for (int i = 0; i < m; ++i) {
        double zn = (g[i] - center) / narrow;
        double zw = (g[i] - center) / wide;
        w[i] = (0.95 * std::exp(-0.5 * zn * zn) / narrow +
                0.05 * std::exp(-0.5 * zw * zw) / wide) *
               g.cell_width(i);
    }
    w /= w.sum();
    std::vector<Marginal> ms;
    std::vector<double> ts;
    ms.push_back(Marginal(grid, w).tilted_to_mean(center));
    ts.push_back(0.0);
    for (int t = 1; t <= n_periods; ++t) {
        const VectorXd& cur = ms.back().weights();
        VectorXd next = VectorXd::Zero(m);
        for (int i = 0; i < m; ++i) {
            double mass = cur[i];
            if (mass <= 0.0) continue;
            int reach = std::min(i, m - 1 - i);
            int k = std::min(reach, 2 + static_cast<int>(rng.next_u64() % 3));
            if (k < 1) {
                next[i] += mass;
                continue;
            }
            double dl = g[i] - g[i - k], dr = g[i + k] - g[i];
            double q = 0.25;
            double wl = q * dr / (dl + dr), wr = q * dl / (dl + dr);
            next[i - k] += mass * wl;
            next[i + k] += mass * wr;
            next[i] += mass * (1.0 - wl - wr);
        }
        ms.emplace_back(grid, next);
        ts.push_back(0.1 * t);
    }
    return MarginalSequence(std::move(ms), std::move(ts));
}

inline StudyReport study_sparse(const SparseStudyConfig& sc = {}) {
    auto grid_u = std::make_shared<Grid>(make_uniform(0.5, 1.5, sc.uniform_points));
    MarginalSequence seq_u = concentrated_fixture(grid_u, sc.n_periods, sc.seed);
    ReferenceChain ref_u = build_reference(grid_u, seq_u.times(), 0.2);
    CostSpec cost_u = CostSpec::pairwise_abs(*grid_u, sc.n_periods);
    SolverConfig cfg;
    cfg.epsilon = sc.epsilon;
    cfg.tol = sc.tol;
    cfg.max_iters = 4000;

    auto t0 = std::chrono::steady_clock::now();
    SolveResult res_u = solve(seq_u, ref_u, cost_u, cfg);
    double ms_u =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    SparseGridConfig sgc{sc.threshold, sc.max_depth};
    Grid leaves = make_sparse(seq_u, sgc);
    // pad with the domain endpoints so every atom rebins inside the hull
    std::vector<double> pts = leaves.points();
    if (pts.front() > grid_u->lo()) pts.insert(pts.begin(), grid_u->lo());
    if (pts.back() < grid_u->hi()) pts.push_back(grid_u->hi());
    auto grid_s = std::make_shared<Grid>(pts);

    std::vector<Marginal> ms;
    for (int t = 0; t <= sc.n_periods; ++t) ms.push_back(rebin(seq_u.at(t), grid_s));
    MarginalSequence seq_s(std::move(ms), seq_u.times());
    ReferenceChain ref_s = build_reference(grid_s, seq_s.times(), 0.2);
    CostSpec cost_s = CostSpec::pairwise_abs(*grid_s, sc.n_periods);

    auto t1 = std::chrono::steady_clock::now();
    SolveResult res_s = solve(seq_s, ref_s, cost_s, cfg);
    double ms_s =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t1).count();

    StudyReport rep;
    rep.kind = "sparse";
    rep.columns = {"variant", "points", "value", "wall_ms", "iters"};
    rep.rows.push_back({0.0, static_cast<double>(sc.uniform_points), res_u.report.primal_cost,
                        ms_u, static_cast<double>(res_u.report.iters)});
    rep.rows.push_back({1.0, static_cast<double>(grid_s->size()), res_s.report.primal_cost, ms_s,
                        static_cast<double>(res_s.report.iters)});
    rep.scalars["point_fraction"] =
        static_cast<double>(grid_s->size()) / static_cast<double>(sc.uniform_points);
    rep.scalars["rel_value_gap"] =
        std::abs(res_s.report.primal_cost - res_u.report.primal_cost) /
        std::max(1e-12, std::abs(res_u.report.primal_cost));
    rep.scalars["speedup"] = ms_u / std::max(1e-9, ms_s);
    return rep;
}

inline void write_study_csv(const StudyReport& rep, const std::string& path) {
    save_csv(path, rep.columns, rep.rows);
}

}  // namespace mmot
