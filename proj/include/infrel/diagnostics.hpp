#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace infrel {

// Biased-normalized sample autocorrelation, rho[0] == 1.
inline std::vector<double> autocorr(std::span<const double> series, int max_lag) {
  long n = static_cast<long>(series.size());
  if (n < 2) throw std::invalid_argument("series too short");
  double mean = 0.0;
  for (double x : series) mean += x;
  mean /= static_cast<double>(n);
  double denom = 0.0;
  for (double x : series) denom += (x - mean) * (x - mean);
  if (denom == 0.0) throw std::invalid_argument("zero-variance series");
  if (max_lag >= n) max_lag = static_cast<int>(n) - 1;
  std::vector<double> rho(max_lag + 1, 0.0);
  for (int l = 0; l <= max_lag; ++l) {
    double acc = 0.0;
    for (long t = 0; t + l < n; ++t) acc += (series[t] - mean) * (series[t + l] - mean);
    rho[l] = acc / denom;
  }
  return rho;
}

struct DiagnosticsReport {
  double tau_hat = 0.0;
  double ess = 0.0;           // 2M / (1 + tau_hat)
  double ess_standard = 0.0;  // conventional M / (1 + 2 sum rho), for reference
  int cutoff_c = 0;
  long m = 0;                 // half the series length; diagnostics run on the second half
  std::vector<double> rho;
};

// Integrated autocorrelation time and effective sample size of a trace:
//   tau_hat = 1/2 + sum_{l=1}^{C-1} rho_l,  ESS = 2M / (1 + tau_hat),
//   C = min{ l : |rho_l| < 2/sqrt(M) }  (C = M when no lag qualifies).
// The first half of the series counts as burn-in; M is half the length.
inline DiagnosticsReport iat_ess(std::span<const double> series) {
  long n = static_cast<long>(series.size());
  if (n < 4) throw std::invalid_argument("series must have at least 4 points");
  long m = n / 2;
  std::span<const double> tail = series.subspan(series.size() - static_cast<std::size_t>(m));
  DiagnosticsReport rep;
  rep.m = m;
  rep.rho = autocorr(tail, static_cast<int>(m) - 1);
  double threshold = 2.0 / std::sqrt(static_cast<double>(m));
  int c = static_cast<int>(m);
  for (int l = 1; l < static_cast<int>(rep.rho.size()); ++l) {
    if (std::fabs(rep.rho[l]) < threshold) {
      c = l;
      break;
    }
  }
  rep.cutoff_c = c;
  double acc = 0.0;
  for (int l = 1; l < c && l < static_cast<int>(rep.rho.size()); ++l) acc += rep.rho[l];
  rep.tau_hat = 0.5 + acc;
  rep.ess = 2.0 * static_cast<double>(m) / (1.0 + rep.tau_hat);
  rep.ess_standard = static_cast<double>(m) / (1.0 + 2.0 * acc);
  return rep;
}

}  // namespace infrel
