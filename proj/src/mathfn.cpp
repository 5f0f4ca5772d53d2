#include "mmsb/mathfn.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mmsb {

// Recurrence up to x >= 10, then the asymptotic (Bernoulli) expansion.
double digamma(double x) {
    if (!(x > 0.0)) throw std::domain_error("digamma: argument must be positive");
    double acc = 0.0;
    while (x < 10.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // psi(x) ~ ln x - 1/(2x) - sum B_{2n} / (2n x^{2n})
    double series = std::log(x) - 0.5 * inv -
                    inv2 * (1.0 / 12.0 -
                            inv2 * (1.0 / 120.0 -
                                    inv2 * (1.0 / 252.0 -
                                            inv2 * (1.0 / 240.0 -
                                                    inv2 * (1.0 / 132.0 -
                                                            inv2 * (691.0 / 32760.0))))));
    return acc + series;
}

double trigamma(double x) {
    if (!(x > 0.0)) throw std::domain_error("trigamma: argument must be positive");
    double acc = 0.0;
    while (x < 10.0) {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // psi'(x) ~ 1/x + 1/(2x^2) + sum B_{2n} / x^{2n+1}
    double series = inv + 0.5 * inv2 +
                    inv * inv2 * (1.0 / 6.0 -
                                  inv2 * (1.0 / 30.0 -
                                          inv2 * (1.0 / 42.0 -
                                                  inv2 * (1.0 / 30.0 -
                                                          inv2 * (5.0 / 66.0 -
                                                                  inv2 * (691.0 / 2730.0))))));
    return acc + series;
}

double log_sum_exp(const double* v, std::size_t n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
        if (v[i] > mx) mx = v[i];
    if (!std::isfinite(mx)) return mx;  // empty, all -inf, or contains +inf/nan
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - mx);
    return mx + std::log(s);
}

bool softmax_inplace(double* v, std::size_t n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
        if (v[i] > mx) mx = v[i];
    if (mx == -std::numeric_limits<double>::infinity()) return false;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = std::exp(v[i] - mx);
        s += v[i];
    }
    for (std::size_t i = 0; i < n; ++i) v[i] /= s;
    return true;
}

}  // namespace mmsb
