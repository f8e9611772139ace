#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "infrel/densities.hpp"
#include "infrel/grid.hpp"
#include "infrel/netdata.hpp"
#include "infrel/rng.hpp"

namespace infrel {

struct EtaHyper {
  double alpha_eta = 1.0;
  double beta_eta = 1.0;
};

// Importance indicators are kept inside [1e-8, 1e8]; products over a binary
// phi row then stay finite for any realistic attribute count.
inline constexpr double kEtaFloor = 1e-8;
inline constexpr double kEtaCeil = 1e8;

inline double clamp_eta(double v) {
  if (v < kEtaFloor) return kEtaFloor;
  if (v > kEtaCeil) return kEtaCeil;
  return v;
}

// prod_f eta_fk^{phi_if} for binary phi: the product of eta entries whose
// attribute the entity holds. Empty product (no metadata, or all-zero row)
// is 1. Computed as a direct product, so a single-attribute entity gets its
// eta value back bit-for-bit.
inline double eta_product(std::span<const std::uint8_t> phi_row, std::span<const double> eta_col) {
  if (phi_row.size() != eta_col.size()) throw std::invalid_argument("phi/eta length mismatch");
  double prod = 1.0;
  for (std::size_t f = 0; f < phi_row.size(); ++f) {
    if (!phi_row[f]) continue;
    if (eta_col[f] <= 0.0) throw std::invalid_argument("eta entries must be positive");
    prod *= eta_col[f];
  }
  return prod;
}

inline double eta_product(const MetadataMatrix& meta, int i, const Grid<double>& eta, int k) {
  double prod = 1.0;
  for (int f = 0; f < meta.F(); ++f) {
    if (!meta.phi(i, f)) continue;
    double v = eta(f, k);
    if (v <= 0.0) throw std::invalid_argument("eta entries must be positive");
    prod *= v;
  }
  return prod;
}

// --- eta conjugate posterior (InfMM side) -----------------------------------
//
// psi_ik ~ Beta(1, prod_f eta_fk^{phi_if}) gives
//   eta_fk | rest ~ Gamma(alpha_eta + sum_i phi_if,
//                         beta_eta - sum_i phi_if ln(1-psi_ik) prod_{F!=f} eta_Fk^{phi_iF})
// The log term is negative, so the rate only grows. The update consumes the
// exact ln(1-psi) values carried alongside the sticks: psi itself saturates
// in double near 1 long before the log does, and a truncated log skews eta.

inline GammaParams eta_posterior_infmm(int f, int k, const MetadataMatrix& meta,
                                       const Grid<double>& log1m_psi, const Grid<double>& eta,
                                       const EtaHyper& h) {
  double shape = h.alpha_eta;
  double rate = h.beta_eta;
  for (int i = 0; i < meta.n(); ++i) {
    if (!meta.phi(i, f)) continue;
    double lv = log1m_psi(i, k);
    if (!(lv < 0.0)) throw std::invalid_argument("ln(1-psi) must be negative");
    double others = eta_product(meta, i, eta, k) / eta(f, k);
    shape += 1.0;
    rate -= lv * others;
  }
  return {shape, rate};
}

// InfLF mirror: psi_ik ~ Beta(prod eta^phi, 1) gives the same Gamma form with
// ln psi_ik in place of ln(1-psi_ik).
inline GammaParams eta_posterior_inflf(int f, int k, const MetadataMatrix& meta,
                                       const Grid<double>& log_psi, const Grid<double>& eta,
                                       const EtaHyper& h) {
  double shape = h.alpha_eta;
  double rate = h.beta_eta;
  for (int i = 0; i < meta.n(); ++i) {
    if (!meta.phi(i, f)) continue;
    double lv = log_psi(i, k);
    if (!(lv < 0.0)) throw std::invalid_argument("ln(psi) must be negative");
    double others = eta_product(meta, i, eta, k) / eta(f, k);
    shape += 1.0;
    rate -= lv * others;
  }
  return {shape, rate};
}

inline double sample_eta_infmm(Rng& rng, int f, int k, const MetadataMatrix& meta,
                               const Grid<double>& log1m_psi, const Grid<double>& eta,
                               const EtaHyper& h) {
  auto p = eta_posterior_infmm(f, k, meta, log1m_psi, eta, h);
  return clamp_eta(rng.gamma(p.shape, p.rate));
}

inline double sample_eta_inflf(Rng& rng, int f, int k, const MetadataMatrix& meta,
                               const Grid<double>& log_psi, const Grid<double>& eta,
                               const EtaHyper& h) {
  auto p = eta_posterior_inflf(f, k, meta, log_psi, eta, h);
  return clamp_eta(rng.gamma(p.shape, p.rate));
}

// --- InfMM sticks ------------------------------------------------------------

// N_ik counts entity i's sender indicators equal to k plus its receiver
// indicators equal to k; tail is the same count summed over l > k.
inline BetaParams psi_posterior_infmm(long n_ik, long tail, double eta_prod) {
  if (n_ik < 0 || tail < 0) throw std::invalid_argument("negative indicator counts");
  if (eta_prod <= 0.0) throw std::invalid_argument("eta product must be positive");
  return {static_cast<double>(n_ik) + 1.0, static_cast<double>(tail) + eta_prod};
}

inline double sample_psi_infmm(Rng& rng, long n_ik, long tail, double eta_prod) {
  auto p = psi_posterior_infmm(n_ik, tail, eta_prod);
  return rng.beta(p.a, p.b);
}

// pi_ik = psi_ik prod_{l<k}(1-psi_il); the leftover stick mass is returned.
// Telescoping gives sum_k pi_ik + residual == 1.
inline double pi_from_sticks_infmm(std::span<const double> psi_row, std::span<double> pi_row) {
  if (psi_row.size() != pi_row.size()) throw std::invalid_argument("length mismatch");
  double remaining = 1.0;
  for (std::size_t k = 0; k < psi_row.size(); ++k) {
    double psi = psi_row[k];
    if (psi <= 0.0 || psi >= 1.0) throw std::invalid_argument("psi outside (0,1)");
    pi_row[k] = psi * remaining;
    remaining *= 1.0 - psi;
  }
  return remaining;
}

// --- InfLF sticks ------------------------------------------------------------

// pi_ik = prod_{l<=k} psi_il; non-increasing in k.
inline void pi_from_sticks_inflf(std::span<const double> psi_row, std::span<double> pi_row) {
  if (psi_row.size() != pi_row.size()) throw std::invalid_argument("length mismatch");
  double prod = 1.0;
  for (std::size_t k = 0; k < psi_row.size(); ++k) {
    double psi = psi_row[k];
    if (psi <= 0.0 || psi >= 1.0) throw std::invalid_argument("psi outside (0,1)");
    prod *= psi;
    pi_row[k] = prod;
  }
}

namespace detail {

// ln(1 - e^{la}) for la <= 0.
inline double log1m_exp(double la) {
  if (la >= 0.0) return kNegInf;
  if (la > -0.6931471805599453) return std::log(-std::expm1(la));
  return std::log1p(-std::exp(la));
}

// log conditional of u = ln(psi_ik), up to a constant:
//   a*u + sum_{l>=k} [ z_il ln pi_il + (1-z_il) ln(1-pi_il) ]
// with ln pi_il = prefix + sum_{k<=m<=l} ln psi_im and u substituted at m=k.
// (The density of psi is psi^{a-1} L(psi); the e^u Jacobian makes the u-slope
// exactly a.)
inline double psi_inflf_logcond_u(double u, int k, std::span<const double> log_psi_row,
                                  std::span<const std::uint8_t> z_row, double a,
                                  double log_prefix) {
  double lp = a * u;
  double lnpi = log_prefix;
  for (std::size_t l = k; l < log_psi_row.size(); ++l) {
    lnpi += (static_cast<int>(l) == k) ? u : log_psi_row[l];
    lp += z_row[l] ? lnpi : log1m_exp(lnpi);
  }
  return lp;
}

}  // namespace detail

struct StickDraw {
  double value;      // representable-range psi
  double log_value;  // exact ln(psi)
};

// One slice-sampling update of psi_ik targeting its full conditional. The
// conditional couples every stick l >= k through the cumulative products, so
// there is no conjugate form. Runs on u = ln(psi) with stepping-out plus
// shrinkage: the conditional's left tail decays like e^{a u}, far beyond
// where psi itself is representable.
inline StickDraw sample_psi_inflf(Rng& rng, int k, std::span<const double> log_psi_row,
                                  std::span<const std::uint8_t> z_row, double eta_prod) {
  if (log_psi_row.size() != z_row.size()) throw std::invalid_argument("length mismatch");
  for (std::size_t l = 0; l < z_row.size(); ++l)
    if (z_row[l] > 1) throw std::invalid_argument("z entries must be 0/1");
  if (eta_prod <= 0.0) throw std::invalid_argument("eta product must be positive");
  double log_prefix = 0.0;
  for (int m = 0; m < k; ++m) log_prefix += log_psi_row[m];
  auto g = [&](double u) {
    return detail::psi_inflf_logcond_u(u, k, log_psi_row, z_row, eta_prod, log_prefix);
  };
  double u0 = log_psi_row[k];
  double ly = g(u0) - rng.exponential();
  double w = 2.0 + 4.0 / std::max(eta_prod, 0.05);
  double r = rng.uniform();
  double lo = u0 - w * r;
  double hi = std::min(0.0, u0 + w * (1.0 - r));
  for (int step = 0; step < 64 && g(lo) > ly; ++step) lo -= w;
  for (int step = 0; step < 64 && hi < 0.0 && g(hi) > ly; ++step) hi = std::min(0.0, hi + w);
  for (int iter = 0; iter < 100; ++iter) {
    double u = rng.uniform_range(lo, hi);
    if (u >= 0.0) {
      hi = u;
      continue;
    }
    if (g(u) > ly) {
      double v = std::exp(u);
      if (v < 1e-300) v = 1e-300;
      if (v > 1.0 - 1e-16) v = 1.0 - 1e-16;
      return {v, u};
    }
    if (u < u0) lo = u; else hi = u;
  }
  double v0 = std::exp(u0);
  if (v0 < 1e-300) v0 = 1e-300;
  if (v0 > 1.0 - 1e-16) v0 = 1.0 - 1e-16;
  return {v0, u0};
}

// Geometric mean of each attribute's row over the active communities.
// In InfMM smaller means stronger influence; InfLF is the opposite.
inline std::vector<double> importance_summary(const Grid<double>& eta) {
  if (eta.cols() == 0) throw std::invalid_argument("no active communities");
  std::vector<double> out(eta.rows());
  for (int f = 0; f < eta.rows(); ++f) {
    double acc = 0.0;
    for (int k = 0; k < eta.cols(); ++k) acc += std::log(eta(f, k));
    out[f] = std::exp(acc / eta.cols());
  }
  return out;
}

}  // namespace infrel
