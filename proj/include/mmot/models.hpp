#pragma once

#include "mmot/common.hpp"
#include "mmot/grid.hpp"
#include "mmot/marginal.hpp"
#include "mmot/parallel.hpp"
#include "mmot/rng.hpp"

#include <memory>
#include <string>
#include <vector>

namespace mmot {

enum class Model { GBM, Merton, Heston };

struct ModelParams {
    Model model = Model::GBM;
    double spot = 100.0;
    double rate = 0.0;
    double sigma = 0.2;

    // jump diffusion
    double jump_intensity = 5.0;
    double jump_mean = -0.1;
    double jump_sd = 0.1;

    // stochastic volatility
    double kappa = 2.0;
    double theta = 0.04;
    double sigma_v = 0.3;
    double rho_corr = -0.5;
    double v0 = 0.04;

    double horizon = 1.0;
    int paths = 10000;
    std::uint64_t seed = 1;

    void validate(std::vector<std::string>* warnings = nullptr) const {
        if (spot <= 0.0) throw ValidationError("model params: spot must be > 0");
        if (sigma <= 0.0) throw ValidationError("model params: sigma must be > 0");
        if (v0 <= 0.0) throw ValidationError("model params: v0 must be > 0");
        if (std::abs(rho_corr) > 1.0) throw ValidationError("model params: |rho| must be <= 1");
        if (paths < 1) throw ValidationError("model params: paths must be >= 1");
        if (warnings && (sigma < 0.15 || sigma > 0.35))
            warnings->push_back("sigma outside the validated range [0.15, 0.35]");
    }
};

namespace detail {

// two-point bracket so a degenerate marginal keeps an exact mean on the grid
inline VectorXd point_mass_weights(const Grid& g, double x) {
    VectorXd w = VectorXd::Zero(g.size());
    if (x <= g.lo()) {
        w[0] = 1.0;
        return w;
    }
    if (x >= g.hi()) {
        w[g.size() - 1] = 1.0;
        return w;
    }
    int j = int(std::upper_bound(g.points().begin(), g.points().end(), x) - g.points().begin());
    double fr = (x - g[j - 1]) / (g[j] - g[j - 1]);
    w[j - 1] = 1.0 - fr;
    w[j] = fr;
    return w;
}

}  // namespace detail

// kernel bandwidth rule: one twentieth of the sample standard deviation
inline double kde_bandwidth(const std::vector<double>& sample) {
    const int n = static_cast<int>(sample.size());
    double mean = 0.0;
    for (double s : sample) mean += s;
    mean /= n;
    double var = 0.0;
    for (double s : sample) var += (s - mean) * (s - mean);
    var /= n;
    return 0.05 * std::sqrt(var);
}

namespace detail {

inline Marginal kde_marginal(std::shared_ptr<const Grid> grid, const std::vector<double>& sample,
                             double target_mean) {
    const double h = kde_bandwidth(sample);
    const Grid& g = *grid;
    VectorXd w = VectorXd::Zero(g.size());
    if (h <= 0.0) {
        for (double s : sample) w += point_mass_weights(g, s);
        w /= w.sum();
    } else {
        const double inv2h2 = 1.0 / (2.0 * h * h);
        for (int i = 0; i < g.size(); ++i) {
            double acc = 0.0;
            for (double s : sample) {
                double d = g[i] - s;
                acc += std::exp(-d * d * inv2h2);
            }
            w[i] = acc * g.cell_width(i);
        }
        double sum = w.sum();
        if (sum <= 0.0) throw NumericalError("kde: all mass fell outside the grid");
        w /= sum;
    }
    Marginal m(std::move(grid), w);
    return m.tilted_to_mean(target_mean);
}

}  // namespace detail

// Marginals of the forward-discounted price X_t = S_t e^{-rt} at the given
// times, on the given grid. X is a martingale with mean spot; discretization
// bias is removed by exponential tilting so all means match exactly.
inline MarginalSequence generate(const ModelParams& params, const std::vector<double>& times,
                                 std::shared_ptr<const Grid> grid,
                                 std::vector<std::string>* warnings = nullptr) {
    params.validate(warnings);
    if (times.empty()) throw ValidationError("generate: empty time list");
    for (size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1])) throw ValidationError("generate: times must be increasing");
    if (times.back() > params.horizon + 1e-12)
        throw ValidationError("generate: last time exceeds the model horizon");

    const Grid& g = *grid;
    const double s0 = params.spot;
    std::vector<Marginal> out;
    out.reserve(times.size());

    if (params.model == Model::GBM) {
        for (double t : times) {
            if (t < 1e-14) {
                out.emplace_back(grid, detail::point_mass_weights(g, s0));
                continue;
            }
            // lognormal density of s0 * exp(-sigma^2 t / 2 + sigma sqrt(t) Z)
            const double sig = params.sigma * std::sqrt(t);
            const double mu = std::log(s0) - 0.5 * sig * sig;
            VectorXd w(g.size());
            for (int i = 0; i < g.size(); ++i) {
                double x = g[i];
                if (x <= 0.0) {
                    w[i] = 0.0;
                    continue;
                }
                double z = (std::log(x) - mu) / sig;
                w[i] = std::exp(-0.5 * z * z) / x * g.cell_width(i);
            }
            double sum = w.sum();
            if (sum <= 0.0) throw NumericalError("generate: grid misses the distribution");
            w /= sum;
            out.push_back(Marginal(grid, w).tilted_to_mean(s0));
        }
    } else {
        // simulate forward-discounted paths at the requested times
        const int P = params.paths;
        const int T = static_cast<int>(times.size());
        std::vector<std::vector<double>> obs(static_cast<size_t>(T),
                                             std::vector<double>(static_cast<size_t>(P)));
        const int chunk = 512;
        parallel_chunks(P, chunk, [&](int c, int begin, int end) {
            Rng rng(params.seed, static_cast<std::uint64_t>(c));
            for (int p = begin; p < end; ++p) {
                double x = s0;  // forward-discounted price
                double v = params.v0;
                double t_prev = 0.0;
                for (int k = 0; k < T; ++k) {
                    double dt = times[static_cast<size_t>(k)] - t_prev;
                    t_prev = times[static_cast<size_t>(k)];
                    if (dt > 1e-14) {
                        if (params.model == Model::Merton) {
                            // exact compensator keeps E[X_{t+dt} | X_t] = X_t
                            const double comp =
                                params.jump_intensity *
                                (std::exp(params.jump_mean + 0.5 * params.jump_sd * params.jump_sd) -
                                 1.0);
                            double z = rng.normal();
                            int nj = rng.poisson(params.jump_intensity * dt);
                            double jump = 0.0;
                            if (nj > 0)
                                jump = nj * params.jump_mean +
                                       std::sqrt(static_cast<double>(nj)) * params.jump_sd *
                                           rng.normal();
                            x *= std::exp((-0.5 * params.sigma * params.sigma - comp) * dt +
                                          params.sigma * std::sqrt(dt) * z + jump);
                        } else {
                            // variance by moment-matched quadratic/exponential sampling
                            double zv = rng.normal();
                            double zp = rng.normal();
                            double ekt = std::exp(-params.kappa * dt);
                            double m = params.theta + (v - params.theta) * ekt;
                            double s2 = v * params.sigma_v * params.sigma_v * ekt *
                                            (1.0 - ekt) / params.kappa +
                                        params.theta * params.sigma_v * params.sigma_v *
                                            (1.0 - ekt) * (1.0 - ekt) / (2.0 * params.kappa);
                            double psi = s2 / (m * m);
                            double v_next;
                            if (psi <= 1.5) {
                                double two_over = 2.0 / psi;
                                double b2 = two_over - 1.0 +
                                            std::sqrt(two_over) * std::sqrt(two_over - 1.0);
                                double a = m / (1.0 + b2);
                                double bz = std::sqrt(b2) + zv;
                                v_next = a * bz * bz;
                            } else {
                                double pr = (psi - 1.0) / (psi + 1.0);
                                double beta = (1.0 - pr) / m;
                                double u = 0.5 * std::erfc(-zv / std::sqrt(2.0));
                                v_next = (u <= pr) ? 0.0 : std::log((1.0 - pr) / (1.0 - u)) / beta;
                            }
                            double zs = params.rho_corr * zv +
                                        std::sqrt(1.0 - params.rho_corr * params.rho_corr) * zp;
                            x *= std::exp(-0.5 * v * dt + std::sqrt(std::max(v, 0.0) * dt) * zs);
                            v = v_next;
                        }
                    }
                    obs[static_cast<size_t>(k)][static_cast<size_t>(p)] = x;
                }
            }
        });
        for (int k = 0; k < T; ++k) {
            if (times[static_cast<size_t>(k)] < 1e-14)
                out.emplace_back(grid, detail::point_mass_weights(g, s0));
            else
                out.push_back(detail::kde_marginal(grid, obs[static_cast<size_t>(k)], s0));
        }
    }

    MarginalSequence seq(std::move(out), times);
    ConvexOrderReport rep = check_convex_order(seq, 1e-6);
    if (!rep.ok)
        throw ConvexOrderViolation("generate: marginals break convex order (worst violation " +
                                   std::to_string(rep.worst_violation) + " at strike " +
                                   std::to_string(rep.worst_strike) + ")");
    return seq;
}

}  // namespace mmot
