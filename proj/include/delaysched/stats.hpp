#pragma once

// Small statistics helpers shared by the tests and the experiment harness.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace delaysched {

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;  // sample std / sqrt(n)
    std::size_t n = 0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
    MeanSe out;
    out.n = xs.size();
    if (xs.empty()) return out;
    double sum = 0.0;
    for (double x : xs) sum += x;
    out.mean = sum / static_cast<double>(xs.size());
    if (xs.size() < 2) return out;
    double ss = 0.0;
    for (double x : xs) {
        double d = x - out.mean;
        ss += d * d;
    }
    double var = ss / static_cast<double>(xs.size() - 1);
    out.se = std::sqrt(var / static_cast<double>(xs.size()));
    return out;
}

struct WilsonInterval {
    double lo = 0.0;
    double hi = 1.0;
};

// Wilson score interval for a binomial proportion. Preferred over the normal
// approximation because overflow rates live very close to zero.
inline WilsonInterval wilson_interval(std::int64_t successes, std::int64_t trials,
                                      double z = 1.959963984540054) {
    if (trials <= 0) return {0.0, 1.0};
    double n = static_cast<double>(trials);
    double phat = static_cast<double>(successes) / n;
    double z2 = z * z;
    double denom = 1.0 + z2 / n;
    double center = phat + z2 / (2.0 * n);
    double spread = z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n));
    WilsonInterval w;
    w.lo = (center - spread) / denom;
    w.hi = (center + spread) / denom;
    if (successes == 0) w.lo = 0.0;
    if (successes == trials) w.hi = 1.0;
    if (w.lo < 0.0) w.lo = 0.0;
    if (w.hi > 1.0) w.hi = 1.0;
    return w;
}

// Standard error of a binomial frequency estimate at probability p.
inline double binomial_sigma(double p, std::int64_t n) {
    if (n <= 0) return 0.0;
    return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

// Least-squares slope of y against x.
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("ls_slope: need >= 2 paired points");
    double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw std::invalid_argument("ls_slope: degenerate x values");
    return (n * sxy - sx * sy) / denom;
}

}  // namespace delaysched
