#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>

namespace esmask {

// Upper regularized incomplete gamma Q(a, x) by series / continued fraction.
inline double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    // P(a,x) by series, Q = 1 - P
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - gln);
  }
  // Q(a,x) by Lentz continued fraction
  double b = x + 1.0 - a;
  double c = 1e300;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - gln) * h;
}

// p-value of a chi-square statistic with `dof` degrees of freedom.
inline double chi_square_pvalue(double stat, std::size_t dof) {
  return gamma_q(static_cast<double>(dof) / 2.0, stat / 2.0);
}

// Pearson statistic of observed counts against expected probabilities.
inline double chi_square_stat(std::span<const std::uint64_t> observed,
                              std::span<const double> expected_probs,
                              std::uint64_t total) {
  double stat = 0.0;
  for (std::size_t j = 0; j < observed.size(); ++j) {
    const double expected = expected_probs[j] * static_cast<double>(total);
    if (expected <= 0.0) continue;
    const double diff = static_cast<double>(observed[j]) - expected;
    stat += diff * diff / expected;
  }
  return stat;
}

}  // namespace esmask
