#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmot {

using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Error hierarchy. Validation errors (bad inputs, broken preconditions) and
// numerical errors (solver-side failures) are separated so callers can map
// them to distinct exit codes.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
    using Error::Error;
};
struct NumericalError : Error {
    using Error::Error;
};

struct InvalidBounds : ValidationError {
    using ValidationError::ValidationError;
};
struct EmptyGrid : ValidationError {
    using ValidationError::ValidationError;
};
struct GridMismatch : ValidationError {
    using ValidationError::ValidationError;
};
struct ConvexOrderViolation : ValidationError {
    using ValidationError::ValidationError;
};
struct Infeasible : ValidationError {
    using ValidationError::ValidationError;
};
struct UnsupportedPayoff : ValidationError {
    using ValidationError::ValidationError;
};
struct InfeasibleLP : ValidationError {
    using ValidationError::ValidationError;
};

struct NotConverged : NumericalError {
    using NumericalError::NumericalError;
};
struct TiltDiverged : NumericalError {
    using NumericalError::NumericalError;
};
struct NumericalOverflow : NumericalError {
    using NumericalError::NumericalError;
};

// ---------------------------------------------------------------------------
// log-sum-exp with max subtraction; -inf entries drop out naturally.
// ---------------------------------------------------------------------------

inline double log_sum_exp(const double* data, Eigen::Index n) {
    double m = kNegInf;
    for (Eigen::Index i = 0; i < n; ++i)
        if (data[i] > m) m = data[i];
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += std::exp(data[i] - m);
    return m + std::log(s);
}

inline double log_sum_exp(const ArrayXd& x) { return log_sum_exp(x.data(), x.size()); }

inline double log_sum_exp(const VectorXd& x) { return log_sum_exp(x.data(), x.size()); }

// lse of two scalars, used when scattering messages across layers
inline double lse2(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// column-wise lse of (mat.col(j) + add), written into out[j]
inline void log_sum_exp_colwise(const MatrixXd& mat, const VectorXd& add, VectorXd& out) {
    const Eigen::Index m = mat.cols();
    out.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        double best = kNegInf;
        const double* cj = mat.col(j).data();
        const double* av = add.data();
        const Eigen::Index n = mat.rows();
        for (Eigen::Index i = 0; i < n; ++i) {
            double v = cj[i] + av[i];
            if (v > best) best = v;
        }
        if (best == kNegInf) {
            out[j] = kNegInf;
            continue;
        }
        double s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) s += std::exp(cj[i] + av[i] - best);
        out[j] = best + std::log(s);
    }
}

// row-wise lse of (mat.row(i) + add^T), written into out[i]
inline void log_sum_exp_rowwise(const MatrixXd& mat, const VectorXd& add, VectorXd& out) {
    const Eigen::Index n = mat.rows();
    out.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = kNegInf;
        const Eigen::Index m = mat.cols();
        for (Eigen::Index j = 0; j < m; ++j) {
            double v = mat(i, j) + add[j];
            if (v > best) best = v;
        }
        if (best == kNegInf) {
            out[i] = kNegInf;
            continue;
        }
        double s = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) s += std::exp(mat(i, j) + add[j] - best);
        out[i] = best + std::log(s);
    }
}

// ---------------------------------------------------------------------------
// Exponential tilt: given log-weights lw_k over deviations d_k, find theta
// such that the tilted mean  sum_k w_k e^{theta d_k} d_k / sum_k w_k e^{theta d_k}
// equals zero.  The tilted mean is strictly increasing in theta, so the root
// is unique whenever 0 lies strictly inside the hull of {d_k : w_k > 0}.
// Newton with a bisection safeguard; theta capped so exponents stay finite.
// ---------------------------------------------------------------------------

struct TiltResult {
    double theta = 0.0;
    double residual = 0.0;  // tilted mean at returned theta
    bool clamped = false;   // target outside (or at the edge of) the support hull
    int iters = 0;
};

namespace detail {

inline double tilted_mean(const ArrayXd& d, const ArrayXd& lw, double theta, double* var = nullptr) {
    const Eigen::Index n = d.size();
    double m = kNegInf;
    for (Eigen::Index k = 0; k < n; ++k) {
        double s = lw[k] + theta * d[k];
        if (s > m) m = s;
    }
    double sw = 0.0, swd = 0.0, swd2 = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        double p = std::exp(lw[k] + theta * d[k] - m);
        sw += p;
        swd += p * d[k];
        swd2 += p * d[k] * d[k];
    }
    double mean = swd / sw;
    if (var) *var = std::max(0.0, swd2 / sw - mean * mean);
    return mean;
}

}  // namespace detail

inline TiltResult solve_exponential_tilt(const ArrayXd& d, const ArrayXd& lw, double tol = 1e-12,
                                         int max_iters = 100, double exponent_budget = 600.0) {
    TiltResult res;
    double dmin = std::numeric_limits<double>::infinity();
    double dmax = -std::numeric_limits<double>::infinity();
    double dabs = 0.0;
    for (Eigen::Index k = 0; k < d.size(); ++k) {
        if (lw[k] == kNegInf) continue;
        dmin = std::min(dmin, d[k]);
        dmax = std::max(dmax, d[k]);
        dabs = std::max(dabs, std::abs(d[k]));
    }
    if (!(dmin < std::numeric_limits<double>::infinity()))
        throw TiltDiverged("exponential tilt: empty support");
    if (dabs == 0.0) return res;  // single support point at the target
    const double cap = exponent_budget / dabs;

    // Degenerate hull: all deviations on one side of zero. The root sits at
    // infinity; walk toward it until the residual is inside tolerance or the
    // exponent budget runs out, and report the row as clamped.
    if (dmin >= 0.0 || dmax <= 0.0) {
        double sign = (dmin >= 0.0) ? -1.0 : 1.0;
        double theta = sign;
        double g = detail::tilted_mean(d, lw, theta);
        int it = 0;
        while (std::abs(g) > tol && std::abs(theta) < cap && it < 200) {
            theta *= 2.0;
            if (std::abs(theta) > cap) theta = sign * cap;
            g = detail::tilted_mean(d, lw, theta);
            ++it;
        }
        res.theta = theta;
        res.residual = g;
        res.clamped = true;
        res.iters = it;
        return res;
    }

    double lo = -1.0, hi = 1.0;
    double glo = detail::tilted_mean(d, lw, lo);
    double ghi = detail::tilted_mean(d, lw, hi);
    int expand = 0;
    while (glo > 0.0 && lo > -cap && expand < 80) {
        lo = std::max(-cap, lo * 2.0);
        glo = detail::tilted_mean(d, lw, lo);
        ++expand;
    }
    while (ghi < 0.0 && hi < cap && expand < 160) {
        hi = std::min(cap, hi * 2.0);
        ghi = detail::tilted_mean(d, lw, hi);
        ++expand;
    }
    if (glo > 0.0 || ghi < 0.0) {
        // root unreachable within the exponent budget: clamp to the nearer end
        res.theta = (glo > 0.0) ? lo : hi;
        res.residual = (glo > 0.0) ? glo : ghi;
        res.clamped = true;
        return res;
    }

    double theta = 0.0;
    if (theta < lo || theta > hi) theta = 0.5 * (lo + hi);
    double g, var;
    for (int it = 0; it < max_iters; ++it) {
        g = detail::tilted_mean(d, lw, theta, &var);
        res.iters = it + 1;
        if (std::abs(g) <= tol) {
            res.theta = theta;
            res.residual = g;
            return res;
        }
        if (g > 0.0)
            hi = theta;
        else
            lo = theta;
        double step = (var > 0.0) ? g / var : 0.0;
        double cand = theta - step;
        if (!(cand > lo && cand < hi)) cand = 0.5 * (lo + hi);
        theta = cand;
    }
    g = detail::tilted_mean(d, lw, theta);
    if (std::abs(g) <= tol * 100.0) {  // accept a slightly loose root rather than fail
        res.theta = theta;
        res.residual = g;
        return res;
    }
    throw TiltDiverged("exponential tilt: Newton failed to reach tolerance");
}

// ---------------------------------------------------------------------------
// Least-squares line fit y ~ a + b x; returns slope b.
// ---------------------------------------------------------------------------

inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y,
                        double* intercept = nullptr) {
    if (x.size() != y.size() || x.size() < 2)
        throw ValidationError("fit_slope: need at least two points");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw ValidationError("fit_slope: degenerate abscissae");
    double b = (n * sxy - sx * sy) / denom;
    if (intercept) *intercept = (sy - b * sx) / n;
    return b;
}

}  // namespace mmot
