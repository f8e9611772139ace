#pragma once

#include <cmath>
#include <stdexcept>

#include "infrel/densities.hpp"
#include "infrel/netdata.hpp"
#include "infrel/rng.hpp"

namespace infrel {

// Edge likelihood family. The first three close the MMSB-style generative
// step e ~ g(B_sr) over binary/count/unit data; SigmoidGaussian drives the
// latent-feature models through e ~ Bernoulli(sigma(z_i B z_j^T)).
enum class Family { BernoulliBeta, PoissonGamma, BetaUnitGamma, SigmoidGaussian };

inline Family default_family(LinkKind kind, bool latent_feature) {
  switch (kind) {
    case LinkKind::Binary: return latent_feature ? Family::SigmoidGaussian : Family::BernoulliBeta;
    case LinkKind::Count: return Family::PoissonGamma;
    default: return Family::BetaUnitGamma;
  }
}

struct BHyper {
  double alpha_B = 1.0;  // Gamma families (Poisson rate, Beta(B,1) shape)
  double beta_B = 1.0;
  double a_B = 1.0;      // Beta prior for the Bernoulli family
  double b_B = 1.0;
  double sigma_B = 1.0;  // Normal(0, sigma^2) prior for the sigmoid family
};

// --- conjugate posteriors -------------------------------------------------

// Poisson edges assigned to (k,l): B_kl | data ~ Gamma(sum e + alpha_B, m + beta_B).
inline GammaParams b_posterior_poisson(double edge_sum, long m_kl, const BHyper& h) {
  if (edge_sum < 0.0 || m_kl < 0) throw std::invalid_argument("negative counts");
  return {edge_sum + h.alpha_B, static_cast<double>(m_kl) + h.beta_B};
}

inline double sample_B_poisson(Rng& rng, double edge_sum, long m_kl, const BHyper& h) {
  auto p = b_posterior_poisson(edge_sum, m_kl, h);
  return rng.gamma(p.shape, p.rate);
}

// Beta(B,1) unit edges: B_kl | data ~ Gamma(m + alpha_B, beta_B - sum ln e).
// All assigned edges live in (0,1], so the accumulated log sum is <= 0.
inline GammaParams b_posterior_unit(double log_edge_sum, long m_kl, const BHyper& h) {
  if (m_kl < 0) throw std::invalid_argument("negative counts");
  if (log_edge_sum > 0.0) throw std::invalid_argument("unit log edge sum must be <= 0");
  return {static_cast<double>(m_kl) + h.alpha_B, h.beta_B - log_edge_sum};
}

inline double sample_B_unit(Rng& rng, double log_edge_sum, long m_kl, const BHyper& h) {
  auto p = b_posterior_unit(log_edge_sum, m_kl, h);
  return rng.gamma(p.shape, p.rate);
}

// Bernoulli edges with a Beta(a_B, b_B) prior: B_kl | data ~ Beta(a+n1, b+n0).
inline BetaParams b_posterior_bernoulli(long n1, long n0, const BHyper& h) {
  if (n1 < 0 || n0 < 0) throw std::invalid_argument("negative counts");
  return {h.a_B + static_cast<double>(n1), h.b_B + static_cast<double>(n0)};
}

inline double sample_B_bernoulli(Rng& rng, long n1, long n0, const BHyper& h) {
  auto p = b_posterior_bernoulli(n1, n0, h);
  return rng.beta(p.a, p.b);
}

// --- marginal predictives for an undiscovered community --------------------

// Count edge with B integrated out:
//   Pr(e) = beta^alpha / (e! (beta+1)^{alpha+e}) * prod_{q=0..e}(alpha+q) / (alpha+e)
// which is the NegativeBinomial(alpha, beta/(beta+1)) pmf. The rising product
// is evaluated through log-gamma differences so large e cannot overflow.
inline double marginal_count(long e, const BHyper& h) {
  if (e < 0) throw std::invalid_argument("count edge must be non-negative");
  double a = h.alpha_B, b = h.beta_B;
  double de = static_cast<double>(e);
  double log_rising = std::lgamma(a + de + 1.0) - std::lgamma(a);  // prod_{q=0..e}(a+q)
  double logp = a * std::log(b) - std::lgamma(de + 1.0) - (a + de) * std::log(b + 1.0) +
                log_rising - std::log(a + de);
  return std::exp(logp);
}

// Unit edge with B integrated out: p(e) = (alpha/e) beta^alpha / (beta - ln e)^{alpha+1}.
inline double marginal_unit(double e, const BHyper& h) {
  if (!(e > 0.0 && e <= 1.0)) throw std::invalid_argument("unit edge must lie in (0,1]");
  double a = h.alpha_B, b = h.beta_B;
  return (a / e) * std::exp(a * std::log(b) - (a + 1.0) * std::log(b - std::log(e)));
}

// Binary edge with B integrated against Beta(a_B, b_B): Pr(e=1) = a/(a+b).
inline double marginal_binary(double e, const BHyper& h) {
  double p1 = h.a_B / (h.a_B + h.b_B);
  return e > 0.0 ? p1 : 1.0 - p1;
}

// Family-dispatching marginal, used when scoring the K+1 option.
inline double marginal_edge(double e, Family family, const BHyper& h) {
  switch (family) {
    case Family::BernoulliBeta: return marginal_binary(e, h);
    case Family::PoissonGamma: return marginal_count(static_cast<long>(std::llround(e)), h);
    case Family::BetaUnitGamma: return marginal_unit(e, h);
    default: return 0.5;  // sigmoid of a Normal(0, s^2) weight is symmetric around 1/2
  }
}

// --- likelihoods ------------------------------------------------------------

// Exact log pmf/pdf of one edge given its compatibility value. For the
// sigmoid family `b` is the aggregate weight z_i B z_j^T.
inline double loglik_edge(double e, double b, Family family) {
  switch (family) {
    case Family::BernoulliBeta: {
      if (e != 0.0 && e != 1.0) throw std::invalid_argument("binary edge must be 0 or 1");
      if (b <= 0.0 || b >= 1.0) throw std::invalid_argument("Bernoulli parameter outside (0,1)");
      return e > 0.0 ? std::log(b) : std::log1p(-b);
    }
    case Family::PoissonGamma: {
      if (e < 0.0 || e != std::floor(e)) throw std::invalid_argument("count edge must be a non-negative integer");
      return log_poisson_pmf(static_cast<long>(std::llround(e)), b);
    }
    case Family::BetaUnitGamma: {
      if (!(e > 0.0 && e <= 1.0)) throw std::invalid_argument("unit edge must lie in (0,1]");
      if (b <= 0.0) throw std::invalid_argument("Beta(B,1) shape must be positive");
      return std::log(b) + (b - 1.0) * std::log(e);
    }
    default: {
      if (e != 0.0 && e != 1.0) throw std::invalid_argument("binary edge must be 0 or 1");
      return e > 0.0 ? log_sigmoid(b) : log_sigmoid(-b);
    }
  }
}

}  // namespace infrel
