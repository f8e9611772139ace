#pragma once

#include <cmath>
#include <limits>

namespace infrel {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct GammaParams {
  double shape;
  double rate;
};
struct BetaParams {
  double a;
  double b;
};

// Gamma(shape, rate) log pdf.
inline double log_gamma_pdf(double x, double shape, double rate) {
  if (x <= 0.0) return kNegInf;
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

inline double log_beta_pdf(double x, double a, double b) {
  if (x <= 0.0 || x >= 1.0) return kNegInf;
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
         (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x);
}

inline double log_normal_pdf(double x, double mean, double sd) {
  double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * M_PI);
}

inline double log_poisson_pmf(long e, double rate) {
  if (e < 0) return kNegInf;
  if (rate <= 0.0) return e == 0 ? 0.0 : kNegInf;
  return static_cast<double>(e) * std::log(rate) - rate - std::lgamma(static_cast<double>(e) + 1.0);
}

inline double sigmoid(double w) {
  if (w >= 0.0) {
    double z = std::exp(-w);
    return 1.0 / (1.0 + z);
  }
  double z = std::exp(w);
  return z / (1.0 + z);
}

// log(sigma(w)) and log(1-sigma(w)) without overflow.
inline double log_sigmoid(double w) { return w >= 0.0 ? -std::log1p(std::exp(-w)) : w - std::log1p(std::exp(w)); }

}  // namespace infrel
