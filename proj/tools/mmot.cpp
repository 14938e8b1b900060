// Command-line surface: generation, calibration, solving, pricing, hedging,
// and the study harness. All file formats are JSON/CSV as documented in the
// README; every subcommand takes --seed and is deterministic given its
// inputs.

#include "mmot/calibrate.hpp"
#include "mmot/hedging.hpp"
#include "mmot/incremental.hpp"
#include "mmot/io.hpp"
#include "mmot/models.hpp"
#include "mmot/oracle.hpp"
#include "mmot/parallel.hpp"
#include "mmot/pricing.hpp"
#include "mmot/solver.hpp"
#include "mmot/sparse_grid.hpp"
#include "mmot/studies.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace mmot;

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (cell.empty()) continue;
        try {
            out.push_back(std::stod(cell));
        } catch (const std::exception&) {
            throw ValidationError("bad number in list: " + cell);
        }
    }
    if (out.empty()) throw ValidationError("empty list");
    return out;
}

PayoffSpec parse_payoff(const std::string& s, int buckets) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ':')) parts.push_back(cell);
    if (parts.empty()) throw ValidationError("empty payoff spec");
    const std::string& kind = parts[0];
    auto num = [&](size_t i) {
        if (parts.size() <= i) throw ValidationError("payoff spec needs a parameter: " + s);
        return std::stod(parts[i]);
    };
    if (kind == "asian") return PayoffSpec::asian_call(num(1), buckets);
    if (kind == "forward_start") return PayoffSpec::forward_start(num(1));
    if (kind == "vanilla") {
        int t = parts.size() > 2 ? static_cast<int>(std::stod(parts[2])) : -1;
        return PayoffSpec::vanilla_call(num(1), t);
    }
    if (kind == "spread_abs") return PayoffSpec::spread_abs();
    throw ValidationError("unknown payoff kind: " + kind);
}

CostSpec parse_cost(const std::string& s, const Grid& g, int n) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ':')) parts.push_back(cell);
    if (parts[0] == "pairwise_abs") return CostSpec::pairwise_abs(g, n);
    if (parts[0] == "pairwise_square") return CostSpec::pairwise_square(g, n);
    if (parts[0] == "forward_start") {
        if (parts.size() < 2) throw ValidationError("forward_start cost needs a strike ratio");
        return CostSpec::forward_start_call(g, n, std::stod(parts[1]));
    }
    throw ValidationError("unknown cost kind: " + s);
}

struct SolveOpts {
    double epsilon = 0.1;
    double tol = 1e-10;
    double drift_tol = 1e-6;
    int max_iters = 5000;
    double sigma_ref = 0.2;
    double floor = 1e-9;

    SolverConfig config() const {
        SolverConfig cfg;
        cfg.epsilon = epsilon;
        cfg.tol = tol;
        cfg.drift_tol = drift_tol;
        cfg.max_iters = max_iters;
        return cfg;
    }

    void attach(CLI::App* cmd) {
        cmd->add_option("--epsilon", epsilon, "entropic regularization");
        cmd->add_option("--tol", tol, "stopping tolerance on potential change");
        cmd->add_option("--drift-tol", drift_tol, "conditional drift tolerance");
        cmd->add_option("--max-iters", max_iters, "iteration cap");
        cmd->add_option("--sigma-ref", sigma_ref, "reference chain volatility");
        cmd->add_option("--floor", floor, "reference kernel floor");
    }
};

void emit_gnuplot(const std::string& dir, const std::string& kind,
                  const std::vector<std::string>& cols) {
    std::ofstream out(dir + "/" + kind + ".gp");
    out << "set datafile separator ','\n";
    out << "set key autotitle columnhead\n";
    if (kind == "convergence") out << "set logscale y\n";
    if (kind == "donsker") out << "set logscale xy\n";
    out << "plot '" << kind << ".csv' using 1:2 with linespoints\n";
}

int run(int argc, char** argv) {
    CLI::App app{"entropic multi-period martingale transport toolkit"};
    app.require_subcommand(1);

    std::uint64_t seed = 42;
    int threads = 0;
    app.add_option("--seed", seed, "random seed")->capture_default_str();
    app.add_option("--threads", threads, "worker thread cap (default: MMOT_THREADS or 1)");

    // ---- gen ----
    auto* gen = app.add_subcommand("gen", "generate synthetic marginals");
    std::string gen_model = "gbm", gen_times, gen_out = "marginals.json";
    double gen_s0 = 100.0, gen_rate = 0.0, gen_sigma = 0.2;
    double gen_lo = 0.0, gen_hi = 0.0;
    int gen_points = 100, gen_paths = 10000;
    ModelParams mp;
    gen->add_option("--model", gen_model, "gbm | merton | heston");
    gen->add_option("--s0", gen_s0, "spot");
    gen->add_option("--rate", gen_rate, "risk-free rate (marginals are forward-discounted)");
    gen->add_option("--sigma", gen_sigma, "diffusion volatility");
    gen->add_option("--times", gen_times, "comma list of maturities in years")->required();
    gen->add_option("--grid-lo", gen_lo, "grid lower bound (0: auto)");
    gen->add_option("--grid-hi", gen_hi, "grid upper bound (0: auto)");
    gen->add_option("--grid-points", gen_points, "grid size");
    gen->add_option("--paths", gen_paths, "simulation paths for merton/heston");
    gen->add_option("--jump-intensity", mp.jump_intensity, "jumps per year");
    gen->add_option("--jump-mean", mp.jump_mean, "mean log jump");
    gen->add_option("--jump-sd", mp.jump_sd, "log jump standard deviation");
    gen->add_option("--kappa", mp.kappa, "variance mean-reversion speed");
    gen->add_option("--theta", mp.theta, "long-run variance");
    gen->add_option("--sigma-v", mp.sigma_v, "volatility of variance");
    gen->add_option("--rho", mp.rho_corr, "spot-variance correlation");
    gen->add_option("--v0", mp.v0, "initial variance");
    gen->add_option("--out", gen_out, "output marginal file");

    // ---- calibrate ----
    auto* cal = app.add_subcommand("calibrate", "fit marginals to option quotes");
    std::string cal_quotes, cal_out = "calibrated.json";
    double cal_lo = 0.0, cal_hi = 0.0, cal_forward = 0.0;
    int cal_points = 100;
    CalibrationConfig ccfg;
    bool cal_no_spot = false;
    cal->add_option("--quotes", cal_quotes, "quote CSV (maturity,strike,mid,spread)")->required();
    cal->add_option("--grid-lo", cal_lo)->required();
    cal->add_option("--grid-hi", cal_hi)->required();
    cal->add_option("--grid-points", cal_points);
    cal->add_option("--forward", cal_forward, "common forward pinning every mean")->required();
    cal->add_option("--tv-weight", ccfg.tv_weight, "total-variation penalty weight");
    cal->add_option("--alpha", ccfg.alpha, "confidence level for quote-noise radii");
    cal->add_option("--max-iters", ccfg.max_iters);
    cal->add_option("--step-tol", ccfg.step_tol);
    cal->add_flag("--no-spot", cal_no_spot, "do not pin a time-zero spot marginal");
    cal->add_option("--out", cal_out);

    // ---- solve ----
    auto* sol = app.add_subcommand("solve", "solve the coupled transport problem");
    std::string sol_marg, sol_cost = "pairwise_abs", sol_out = "solution.json", sol_warm,
                sol_dump_ref;
    SolveOpts sopt;
    sol->add_option("--marginals", sol_marg)->required();
    sol->add_option("--cost", sol_cost, "pairwise_abs | pairwise_square | forward_start:K");
    sopt.attach(sol);
    sol->add_option("--warm", sol_warm, "warm-start solution file");
    sol->add_option("--dump-reference", sol_dump_ref, "debug dump of the reference chain");
    sol->add_option("--out", sol_out);

    // ---- append ----
    auto* app_cmd = app.add_subcommand("append", "append one maturity to a solved instance");
    std::string ap_prev, ap_marg, ap_out = "solution.json";
    SolveOpts aopt;
    int ap_kwarm = 50, ap_krefine = 100;
    app_cmd->add_option("--prev", ap_prev, "previous solution file")->required();
    app_cmd->add_option("--marginals", ap_marg, "marginal file with one extra maturity")
        ->required();
    aopt.attach(app_cmd);
    app_cmd->add_option("--k-warm", ap_kwarm, "frozen-phase iteration budget");
    app_cmd->add_option("--k-refine", ap_krefine, "joint refinement budget");
    app_cmd->add_option("--out", ap_out);

    // ---- price ----
    auto* pr = app.add_subcommand("price", "robust price bounds with widenings");
    std::string pr_marg, pr_payoff, pr_out = "price.json", pr_tc, pr_delta;
    int pr_buckets = 40;
    SolveOpts popt;
    pr->add_option("--marginals", pr_marg)->required();
    pr->add_option("--payoff", pr_payoff, "asian:K | forward_start:K | vanilla:K[:t] | spread_abs")
        ->required();
    pr->add_option("--buckets", pr_buckets, "running-average buckets for asian");
    popt.attach(pr);
    pr->add_option("--tc", pr_tc, "proportional transaction cost (single rate or per step)");
    pr->add_option("--delta-cal", pr_delta,
                   "per-maturity calibration radii (default: from the marginal file)");
    pr->add_option("--out", pr_out);

    // ---- hedge ----
    auto* hg = app.add_subcommand("hedge", "plan-derived deltas and tracking error");
    std::string hg_marg, hg_payoff, hg_csv = "hedge.csv", hg_json = "hedge.json",
                hg_side = "lower";
    int hg_paths = 20000, hg_buckets = 40;
    double hg_bound_c = 1.0;
    SolveOpts hopt;
    hg->add_option("--marginals", hg_marg)->required();
    hg->add_option("--payoff", hg_payoff)->required();
    hg->add_option("--buckets", hg_buckets);
    hopt.attach(hg);
    hg->add_option("--side", hg_side, "lower | upper bound plan");
    hg->add_option("--paths", hg_paths);
    hg->add_option("--bound-constant", hg_bound_c, "fitted refinement-study constant");
    hg->add_option("--out-csv", hg_csv);
    hg->add_option("--out-json", hg_json);

    // ---- study ----
    auto* stu = app.add_subcommand("study", "reproduce the numerical studies");
    std::string stu_kind, stu_dir = ".";
    bool stu_gnuplot = false;
    stu->add_option("kind", stu_kind, "convergence | donsker | epsilon | incremental | sparse")
        ->required();
    stu->add_option("--out-dir", stu_dir);
    stu->add_flag("--gnuplot", stu_gnuplot, "emit a gnuplot script next to the csv");

    // ---- oracle (debugging aid) ----
    auto* orc = app.add_subcommand("oracle", "exact bounds on a tiny instance");
    orc->group("");  // hidden
    std::string orc_in, orc_out = "oracle.json";
    orc->add_option("--instance", orc_in)->required();
    orc->add_option("--out", orc_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    }
    if (threads > 0) set_thread_cap(threads);

    if (*gen) {
        mp.spot = gen_s0;
        mp.rate = gen_rate;
        mp.sigma = gen_sigma;
        mp.paths = gen_paths;
        mp.seed = seed;
        if (gen_model == "gbm")
            mp.model = Model::GBM;
        else if (gen_model == "merton")
            mp.model = Model::Merton;
        else if (gen_model == "heston")
            mp.model = Model::Heston;
        else
            throw ValidationError("unknown model: " + gen_model);
        auto times = parse_list(gen_times);
        mp.horizon = times.back();
        double lo = gen_lo, hi = gen_hi;
        if (lo == 0.0 && hi == 0.0) {
            double span = 4.5 * gen_sigma * std::sqrt(times.back()) * gen_s0;
            lo = gen_s0 - span;
            hi = gen_s0 + span;
        }
        auto grid = std::make_shared<Grid>(make_uniform(lo, hi, gen_points));
        std::vector<std::string> warnings;
        MarginalSequence seq = generate(mp, times, grid, &warnings);
        for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
        save_marginals(gen_out, seq);
        std::cout << "wrote " << gen_out << " (" << times.size() << " maturities, "
                  << grid->size() << " grid points)\n";
        return 0;
    }

    if (*cal) {
        auto quotes = load_quotes(cal_quotes);
        auto grid = std::make_shared<Grid>(make_uniform(cal_lo, cal_hi, cal_points));
        CalibrationResult res = calibrate(quotes, grid, ccfg, cal_forward);
        MarginalSequence seq =
            cal_no_spot ? MarginalSequence(res.marginals, res.times) : res.to_sequence(cal_forward);
        std::vector<double> deltas = res.delta_cal;
        if (!cal_no_spot) deltas.insert(deltas.begin(), 0.0);
        save_marginals(cal_out, seq, deltas);
        std::cout << "wrote " << cal_out << " (" << res.marginals.size() << " maturities)\n";
        return 0;
    }

    if (*sol) {
        MarginalFile mf = load_marginals(sol_marg);
        const MarginalSequence& seq = mf.seq;
        ReferenceChain ref =
            build_reference(seq.grid_ptr(), seq.times(), sopt.sigma_ref, sopt.floor);
        if (!sol_dump_ref.empty()) {
            json jr;
            jr["init"] = std::vector<double>(ref.init.data(), ref.init.data() + ref.init.size());
            json ks = json::array();
            for (const auto& k : ref.kernels) {
                json rows = json::array();
                for (Eigen::Index r = 0; r < k.rows(); ++r) {
                    std::vector<double> row(static_cast<size_t>(k.cols()));
                    for (Eigen::Index c = 0; c < k.cols(); ++c) row[static_cast<size_t>(c)] = k(r, c);
                    rows.push_back(row);
                }
                ks.push_back(rows);
            }
            jr["kernels"] = ks;
            save_json(sol_dump_ref, jr);
        }
        CostSpec cost = parse_cost(sol_cost, seq.grid(), seq.periods());
        SolverConfig cfg = sopt.config();
        DualPotentials warm;
        bool have_warm = false;
        if (!sol_warm.empty()) {
            SolutionFile sf = load_solution(sol_warm);
            if (sf.grid_points != seq.grid().points() || sf.times != seq.times())
                throw ValidationError("warm start does not match the instance");
            warm = sf.potentials;
            have_warm = true;
        }
        SolveResult res = solve(seq, ref, cost, cfg, have_warm ? &warm : nullptr);
        save_solution(sol_out, res, seq, cfg.epsilon);
        std::cout << "converged in " << res.report.iters << " iterations; drift "
                  << format_double(res.report.max_drift) << ", gap "
                  << format_double(res.report.duality_gap) << "\n";
        return 0;
    }

    if (*app_cmd) {
        SolutionFile prev = load_solution(ap_prev);
        MarginalFile mf = load_marginals(ap_marg);
        const MarginalSequence& seq = mf.seq;
        if (prev.grid_points != seq.grid().points())
            throw ValidationError("append: grids differ between solution and marginals");
        if (prev.times.size() + 1 != seq.times().size())
            throw ValidationError("append: marginal file must add exactly one maturity");
        for (size_t i = 0; i < prev.times.size(); ++i)
            if (std::abs(prev.times[i] - seq.times()[i]) > 1e-12)
                throw ValidationError("append: maturity prefix must match the previous solution");
        std::vector<Marginal> pm;
        std::vector<double> pt;
        for (int t = 0; t + 1 <= seq.periods(); ++t)
            if (t < seq.periods()) {
                pm.push_back(seq.at(t));
                pt.push_back(seq.times()[static_cast<size_t>(t)]);
            }
        MarginalSequence prefix(std::move(pm), std::move(pt));
        ReferenceChain ref =
            build_reference(seq.grid_ptr(), seq.times(), aopt.sigma_ref, aopt.floor);
        CostSpec cost = parse_cost(sol_cost, seq.grid(), seq.periods());
        IncrementalConfig icfg;
        icfg.k_warm = ap_kwarm;
        icfg.k_refine = ap_krefine;
        icfg.solver = aopt.config();
        icfg.solver.epsilon = (prev.epsilon > 0.0) ? prev.epsilon : icfg.solver.epsilon;
        SolveResult res = append_period(prefix, prev.potentials, seq.at(seq.periods()),
                                        seq.times().back(), ref, cost, icfg);
        save_solution(ap_out, res, seq, icfg.solver.epsilon);
        std::cout << "appended maturity: " << res.report.frozen_iters << " frozen + "
                  << res.report.refine_iters << " refine iterations\n";
        return 0;
    }

    if (*pr) {
        MarginalFile mf = load_marginals(pr_marg);
        const MarginalSequence& seq = mf.seq;
        ReferenceChain ref =
            build_reference(seq.grid_ptr(), seq.times(), popt.sigma_ref, popt.floor);
        PayoffSpec payoff = parse_payoff(pr_payoff, pr_buckets);
        SolverConfig cfg = popt.config();
        PriceBoundsResult res = price_bounds(seq, ref, payoff, cfg);
        PriceBounds b = res.bounds;
        if (!pr_tc.empty()) {
            TransactionCostSpec tc{parse_list(pr_tc)};
            b = widen_transaction(b, res.lower_solve.plan, tc);
        }
        std::vector<double> deltas =
            pr_delta.empty() ? mf.delta_cal : parse_list(pr_delta);
        if (!deltas.empty())
            b = widen_calibration(b, deltas, payoff.lipschitz, payoff.lipschitz, cfg.epsilon,
                                  seq.grid().diameter());
        json j = {{"lower", b.lower},
                  {"upper", b.upper},
                  {"gamma", b.gamma},
                  {"delta", b.delta_cal},
                  {"widened", {b.widened_lo, b.widened_hi}},
                  {"mid", b.mid()}};
        save_json(pr_out, j);
        std::cout << "bounds [" << format_double(b.lower) << ", " << format_double(b.upper)
                  << "] widened [" << format_double(b.widened_lo) << ", "
                  << format_double(b.widened_hi) << "] mid " << format_double(b.mid()) << "\n";
        return 0;
    }

    if (*hg) {
        MarginalFile mf = load_marginals(hg_marg);
        const MarginalSequence& seq = mf.seq;
        ReferenceChain ref =
            build_reference(seq.grid_ptr(), seq.times(), hopt.sigma_ref, hopt.floor);
        PayoffSpec payoff = parse_payoff(hg_payoff, hg_buckets);
        SolverConfig cfg = hopt.config();
        CompiledPayoff cp = compile_payoff(payoff, seq.grid(), seq.periods());
        if (hg_side == "upper") {
            for (auto& t : cp.cost.tables) t = -t;
            if (cp.chain.terminal_cost.size() > 0) cp.chain.terminal_cost = -cp.chain.terminal_cost;
        } else if (hg_side != "lower") {
            throw ValidationError("hedge: --side must be lower or upper");
        }
        SolveResult res = solve_chain(seq, ref, &cp.cost, cp.chain, cfg);
        HedgePolicy pol = build_policy(res.plan, payoff);
        double dt = (seq.times().back() - seq.times().front()) / seq.periods();
        HedgeReport hrep = simulate_hedge(res.plan, pol, hg_paths, seed, dt, hg_bound_c);
        std::vector<std::vector<double>> rows;
        for (size_t p = 0; p < hrep.terminal_errors.size(); ++p)
            rows.push_back({static_cast<double>(p), hrep.terminal_errors[p]});
        save_csv(hg_csv, {"path_id", "terminal_error"}, rows);
        json j = {{"rmse", hrep.rmse},
                  {"bound", hrep.bound},
                  {"frac_within", hrep.frac_within},
                  {"unhedged_std", hrep.unhedged_std},
                  {"mean_payoff", hrep.mean_payoff},
                  {"price", pol.price},
                  {"delta_lipschitz", pol.delta_lipschitz}};
        save_json(hg_json, j);
        std::cout << "hedge rmse " << format_double(hrep.rmse) << " (unhedged std "
                  << format_double(hrep.unhedged_std) << ")\n";
        return 0;
    }

    if (*stu) {
        StudyReport rep;
        if (stu_kind == "convergence") {
            ConvergenceStudyConfig c;
            c.seed = seed;
            rep = study_convergence(c);
        } else if (stu_kind == "donsker") {
            DonskerStudyConfig c;
            c.seed = seed;
            rep = study_donsker(c);
        } else if (stu_kind == "epsilon") {
            EpsilonStudyConfig c;
            c.seed = seed;
            rep = study_epsilon(c);
        } else if (stu_kind == "incremental") {
            IncrementalStudyConfig c;
            c.seed = seed;
            rep = study_incremental(c);
        } else if (stu_kind == "sparse") {
            SparseStudyConfig c;
            c.seed = seed;
            rep = study_sparse(c);
        } else {
            throw ValidationError("unknown study kind: " + stu_kind);
        }
        std::string csv = stu_dir + "/" + rep.kind + ".csv";
        write_study_csv(rep, csv);
        json j;
        j["kind"] = rep.kind;
        if (std::isfinite(rep.fitted_slope)) j["fitted_slope"] = rep.fitted_slope;
        if (std::isfinite(rep.fitted_constant)) j["fitted_constant"] = rep.fitted_constant;
        for (const auto& [k, v] : rep.scalars) j[k] = v;
        save_json(stu_dir + "/" + rep.kind + "_summary.json", j);
        if (stu_gnuplot) emit_gnuplot(stu_dir, rep.kind, rep.columns);
        std::cout << "study " << rep.kind << ": wrote " << csv;
        if (std::isfinite(rep.fitted_slope))
            std::cout << " (fitted slope " << format_double(rep.fitted_slope) << ")";
        std::cout << "\n";
        return 0;
    }

    if (*orc) {
        json j = load_json(orc_in);
        auto grid = std::make_shared<Grid>(j.at("grid").get<std::vector<double>>());
        auto times = j.at("times").get<std::vector<double>>();
        auto rows = j.at("weights").get<std::vector<std::vector<double>>>();
        std::vector<Marginal> ms;
        for (const auto& r : rows)
            ms.emplace_back(grid, Eigen::Map<const VectorXd>(
                                      r.data(), static_cast<Eigen::Index>(r.size())));
        TinyInstance inst{MarginalSequence(std::move(ms), times),
                          j.at("cost").get<std::vector<double>>()};
        LpBounds b = lp_bounds(inst);
        json out = {{"min", b.min_value}, {"max", b.max_value}};
        save_json(orc_out, out);
        std::cout << "lp bounds [" << format_double(b.min_value) << ", "
                  << format_double(b.max_value) << "]\n";
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const mmot::ValidationError& e) {
        std::cerr << "error: validation: " << e.what() << "\n";
        return 2;
    } catch (const mmot::MaxItersExceeded& e) {
        std::cerr << "error: numerical: " << e.what() << "\n";
        return 3;
    } catch (const mmot::NumericalError& e) {
        std::cerr << "error: numerical: " << e.what() << "\n";
        return 3;
    } catch (const mmot::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
