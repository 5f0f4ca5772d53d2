#pragma once

#include <cstddef>

namespace mmsb {

// First derivative of log-gamma. Requires x > 0.
double digamma(double x);

// Second derivative of log-gamma. Requires x > 0.
double trigamma(double x);

// log(sum(exp(v[i]))) with max subtraction; returns -inf for an empty or
// all -inf input.
double log_sum_exp(const double* v, std::size_t n);

// Normalizes log weights in place into probabilities. Returns false when
// every entry is -inf (nothing to normalize).
bool softmax_inplace(double* v, std::size_t n);

}  // namespace mmsb
