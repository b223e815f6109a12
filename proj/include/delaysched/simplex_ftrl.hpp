#pragma once

// Per-round FTRL step over the probability simplex with the hybrid regularizer
//
//     F(x) = inv_alpha * (-2 sum_i sqrt(x_i)) + inv_beta * sum_i x_i log x_i,
//
// i.e. a weighted sum of 1/2-Tsallis entropy and negative entropy, each with
// its own learning rate. solve() returns the unique minimizer of
// <x, L> + F(x) over the open simplex.
//
// Method: the coordinate map f'(x) = -inv_alpha * x^{-1/2} + inv_beta *
// (log x + 1) is strictly increasing on (0, inf), so each coordinate is
// recovered by safeguarded one-dimensional root finding (Newton in log-space,
// started from a point provably below the root), and the simplex multiplier
// lambda is found by outer bisection on the monotone map
// lambda -> sum_i f'^{-1}(lambda - L_i).
//
// The solver certifies its output: the KKT residual spread
// max_i (f'(x_i) + L_i) - min_i (f'(x_i) + L_i) must not exceed 1e-8 and the
// simplex sum must be within 1e-10 of one, otherwise it throws instead of
// returning a bad point.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "delaysched/rng.hpp"

namespace delaysched {

struct RegWeights {
    double inv_alpha = 0.0;  // alpha_t^{-1} >= 0; zero disables the Tsallis part
    double inv_beta = 0.0;   // beta_t^{-1} >= 0; zero (pure Tsallis) needs inv_alpha > 0
};

struct SimplexPoint {
    std::vector<double> probs;
    int size() const { return static_cast<int>(probs.size()); }
};

struct CumEstimate {
    std::vector<double> values;  // nonnegative cumulative loss estimates
};

struct SolveInfo {
    double lambda = 0.0;
    double kkt_residual = 0.0;
    double sum_error = 0.0;
    int outer_iterations = 0;
};

class SolveError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline constexpr double kKktTol = 1e-8;
inline constexpr double kSumTol = 1e-10;
inline constexpr double kBisectTarget = 1e-11;

// Root of -a*exp(-u/2) + b*(u+1) = y in u = log x. The function is increasing
// and concave in u, and both starting points below sit under the root, so
// Newton ascends monotonically. Requires a > 0, b > 0.
inline double invert_fprime_log(double a, double b, double y) {
    double u = y / b - 1.0;  // entropy-only solution; always below the root
    double cap = std::fabs(y) + 800.0 * b + a + 1.0;
    double u_ts = 2.0 * (std::log(a) - std::log(cap));  // Tsallis-dominated start
    if (u_ts > u) u = u_ts;
    for (int it = 0; it < 120; ++it) {
        double e = std::exp(-0.5 * u);
        double h = -a * e + b * (u + 1.0) - y;
        double hp = 0.5 * a * e + b;
        double du = -h / hp;
        u += du;
        if (std::fabs(du) <= 1e-15 * (1.0 + std::fabs(u))) break;
    }
    return u;
}

// sum_i x_i(lambda) for the general hybrid case; fills log-coordinates.
inline double simplex_sum_hybrid(const std::vector<double>& L, double a, double b, double lambda,
                                 std::vector<double>& log_x) {
    double s = 0.0;
    for (std::size_t i = 0; i < L.size(); ++i) {
        log_x[i] = invert_fprime_log(a, b, lambda - L[i]);
        s += std::exp(log_x[i]);
    }
    return s;
}

// Pure-Tsallis coordinates: x = (a / (L_i - lambda))^2, defined for lambda < L_i.
inline double simplex_sum_tsallis(const std::vector<double>& L, double a, double lambda,
                                  std::vector<double>& log_x) {
    double s = 0.0;
    for (std::size_t i = 0; i < L.size(); ++i) {
        double gap = L[i] - lambda;
        if (!(gap > 0.0)) return std::numeric_limits<double>::infinity();
        log_x[i] = 2.0 * (std::log(a) - std::log(gap));
        s += std::exp(log_x[i]);
    }
    return s;
}

inline double fprime(double a, double b, double log_x) {
    return -a * std::exp(-0.5 * log_x) + b * (log_x + 1.0);
}

}  // namespace detail

// Closed-form minimizer when the Tsallis part is disabled: softmax(-L / inv_beta).
inline SimplexPoint softmax_point(const std::vector<double>& L, double inv_beta) {
    SimplexPoint x;
    x.probs.resize(L.size());
    double lmin = *std::min_element(L.begin(), L.end());
    double s = 0.0;
    for (std::size_t i = 0; i < L.size(); ++i) {
        x.probs[i] = std::exp(-(L[i] - lmin) / inv_beta);
        s += x.probs[i];
    }
    for (auto& p : x.probs) {
        p /= s;
        if (p < std::numeric_limits<double>::min()) p = std::numeric_limits<double>::min();
    }
    return x;
}

inline SimplexPoint solve(const CumEstimate& L, const RegWeights& w, SolveInfo* info = nullptr,
                          int outer_budget = 200, const double* warm_lambda = nullptr) {
    const std::vector<double>& vals = L.values;
    const int K = static_cast<int>(vals.size());
    const double a = w.inv_alpha;
    const double b = w.inv_beta;
    if (K < 2) throw std::invalid_argument("solve: need K >= 2");
    if (!(a >= 0.0) || !std::isfinite(a) || !(b >= 0.0) || !std::isfinite(b) || a + b <= 0.0)
        throw std::invalid_argument("solve: invalid regularizer weights");
    for (double v : vals)
        if (!std::isfinite(v)) throw std::invalid_argument("solve: non-finite loss estimate");

    if (a == 0.0) {
        SimplexPoint x = softmax_point(vals, b);
        if (info) {
            info->lambda = 0.0;
            info->kkt_residual = 0.0;
            double s = 0.0;
            for (double p : x.probs) s += p;
            info->sum_error = std::fabs(s - 1.0);
            info->outer_iterations = 0;
        }
        return x;
    }

    double lmin = *std::min_element(vals.begin(), vals.end());
    double lmax = *std::max_element(vals.begin(), vals.end());
    // Provable initial bracket: lambda* = f'(x_i) + L_i with max_i x_i in
    // [1/K, 1], widened geometrically below until the sum map changes sign.
    double lo = detail::fprime(a, b, std::log(1.0 / K)) - lmax - 1.0;
    double hi = detail::fprime(a, b, 0.0) + lmax + 1.0;
    if (b == 0.0) hi = std::min(hi, lmin);  // pure Tsallis needs lambda < min L
    if (warm_lambda && std::isfinite(*warm_lambda)) {
        lo = std::max(lo, *warm_lambda - 2.0);
        hi = (b == 0.0) ? std::min(*warm_lambda + 2.0, lmin) : (*warm_lambda + 2.0);
    }

    std::vector<double> log_x(static_cast<std::size_t>(K));
    auto sum_at = [&](double lambda) {
        return b == 0.0 ? detail::simplex_sum_tsallis(vals, a, lambda, log_x)
                        : detail::simplex_sum_hybrid(vals, a, b, lambda, log_x);
    };

    double width = std::max(1.0, hi - lo);
    int expansions = 0;
    while (sum_at(lo) > 1.0) {
        lo -= width;
        width *= 2.0;
        if (++expansions > 200) throw SolveError("solve: cannot bracket lambda from below");
    }
    width = std::max(1.0, hi - lo);
    while (sum_at(hi) < 1.0) {
        if (b == 0.0) {
            hi = 0.5 * (hi + lmin);  // approach the pole at min L
        } else {
            hi += width;
            width *= 2.0;
        }
        if (++expansions > 400) throw SolveError("solve: cannot bracket lambda from above");
    }

    double lambda = 0.5 * (lo + hi);
    double s = 0.0;
    int iters = 0;
    bool converged = false;
    for (; iters < outer_budget; ++iters) {
        lambda = 0.5 * (lo + hi);
        s = sum_at(lambda);
        if (std::fabs(s - 1.0) <= detail::kBisectTarget) {
            converged = true;
            break;
        }
        if (s < 1.0)
            lo = lambda;
        else
            hi = lambda;
        if (hi - lo <= 4e-16 * std::max(1.0, std::fabs(lambda))) {
            converged = std::fabs(s - 1.0) <= detail::kSumTol;
            break;
        }
    }
    if (!converged) throw SolveError("solve: outer bisection did not converge in budget");

    SimplexPoint x;
    x.probs.resize(static_cast<std::size_t>(K));
    double rmin = std::numeric_limits<double>::infinity();
    double rmax = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < K; ++i) {
        x.probs[static_cast<std::size_t>(i)] = std::exp(log_x[static_cast<std::size_t>(i)]);
        double r = detail::fprime(a, b, log_x[static_cast<std::size_t>(i)]) +
                   vals[static_cast<std::size_t>(i)];
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
    }
    double resid = rmax - rmin;
    double sum_err = std::fabs(s - 1.0);
    if (!(resid <= detail::kKktTol) || !(sum_err <= detail::kSumTol))
        throw SolveError("solve: certificate failed (kkt residual " + std::to_string(resid) +
                         ", sum error " + std::to_string(sum_err) + ")");
    if (info) {
        info->lambda = lambda;
        info->kkt_residual = resid;
        info->sum_error = sum_err;
        info->outer_iterations = iters + 1;
    }
    return x;
}

// Draws i with probability x_i from the caller-owned stream.
inline int sample_action(const SimplexPoint& x, RngStream& rng) {
    double u = rng.u01();
    double c = 0.0;
    int K = x.size();
    for (int i = 0; i < K; ++i) {
        c += x.probs[static_cast<std::size_t>(i)];
        if (u < c) return i;
    }
    return K - 1;
}

// Probabilities are floored at 1e-15 only when forming estimators; the stored
// simplex point is never modified.
inline constexpr double kEstimatorProbFloor = 1e-15;

inline double importance_weighted_value(double loss, double prob, double p) {
    return loss / (std::max(prob, kEstimatorProbFloor) * p);
}

// Bandit estimator: single spike loss / (x_a * p) at the played coordinate.
inline std::vector<double> bandit_estimator(double loss, int action, const SimplexPoint& x_at_play,
                                            double p) {
    if (!(loss >= 0.0 && loss <= 1.0))
        throw std::invalid_argument("bandit_estimator: loss must lie in [0, 1]");
    if (!(p > 0.0 && p <= 1.0))
        throw std::invalid_argument("bandit_estimator: p must lie in (0, 1]");
    if (action < 0 || action >= x_at_play.size())
        throw std::invalid_argument("bandit_estimator: action index out of range");
    std::vector<double> est(x_at_play.probs.size(), 0.0);
    est[static_cast<std::size_t>(action)] =
        importance_weighted_value(loss, x_at_play.probs[static_cast<std::size_t>(action)], p);
    return est;
}

// Full-information estimator: elementwise loss vector / p.
inline std::vector<double> fullinfo_estimator(const std::vector<double>& loss_vec, double p) {
    if (!(p > 0.0 && p <= 1.0))
        throw std::invalid_argument("fullinfo_estimator: p must lie in (0, 1]");
    std::vector<double> est(loss_vec.size());
    for (std::size_t i = 0; i < loss_vec.size(); ++i) est[i] = loss_vec[i] / p;
    return est;
}

}  // namespace delaysched
