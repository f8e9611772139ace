#pragma once

#include <optional>
#include <vector>

#include "infrel/grid.hpp"
#include "infrel/linkmodels.hpp"
#include "infrel/model.hpp"
#include "infrel/netdata.hpp"
#include "infrel/priors.hpp"
#include "infrel/rng.hpp"

namespace infrel {

// Forward-simulation plan. The infinite stick-breaking constructions are
// truncated at k_max; for InfMM the leftover stick mass is folded into the
// last community (equivalently, the last stick is pinned to 1).
struct SyntheticSpec {
  Model model = Model::InfMM;
  LinkKind kind = LinkKind::Binary;
  Family family = Family::BernoulliBeta;
  int n = 2;
  int F = 0;
  int k_max = 5;
  std::uint64_t seed = 1;
  EtaHyper eta_hyper;
  BHyper b_hyper;
  std::optional<Grid<double>> fixed_eta;  // F x k_max; bypasses the eta prior
  std::optional<Grid<double>> fixed_B;    // k_max x k_max; bypasses the B prior
};

struct SyntheticTruth {
  Grid<double> eta;  // F x K
  Grid<double> psi;  // n x K (InfMM: last column pinned to 1; cInfMM: empty)
  Grid<double> psi_log;  // exact logs: InfMM ln(1-psi), InfLF ln(psi)
  Grid<double> pi;   // n x K
  Grid<int> s, r;    // n x n membership indicators (InfMM/cInfMM), -1 on diagonal
  Grid<std::uint8_t> z;  // n x K latent features (InfLF)
  Grid<double> B;    // K x K
};

struct SyntheticData {
  NetworkData net;
  SyntheticTruth truth;
};

namespace detail {

inline void validate_spec(const SyntheticSpec& spec, const MetadataMatrix& phi) {
  if (spec.n < 2) throw DataError("simulation needs n >= 2");
  if (spec.k_max < 1) throw DataError("k_max must be >= 1");
  if (phi.n() != spec.n || phi.F() != spec.F)
    throw DataError("metadata dimensions do not match the simulation spec");
  if (spec.fixed_eta && (spec.fixed_eta->rows() != spec.F || spec.fixed_eta->cols() != spec.k_max))
    throw DataError("fixed eta must be F x k_max");
  if (spec.fixed_B && (spec.fixed_B->rows() != spec.k_max || spec.fixed_B->cols() != spec.k_max))
    throw DataError("fixed B must be k_max x k_max");
  if (spec.model == Model::InfLF && spec.family == Family::BetaUnitGamma)
    throw DataError("unit link data is not supported for InfLF");
}

inline Grid<double> draw_eta(Rng& rng, const SyntheticSpec& spec) {
  if (spec.fixed_eta) return *spec.fixed_eta;
  Grid<double> eta(spec.F, spec.k_max);
  for (int f = 0; f < spec.F; ++f)
    for (int k = 0; k < spec.k_max; ++k)
      eta(f, k) = clamp_eta(rng.gamma(spec.eta_hyper.alpha_eta, spec.eta_hyper.beta_eta));
  return eta;
}

inline Grid<double> draw_B(Rng& rng, const SyntheticSpec& spec) {
  if (spec.fixed_B) return *spec.fixed_B;
  int K = spec.k_max;
  Grid<double> B(K, K);
  for (int k = 0; k < K; ++k) {
    for (int l = 0; l < K; ++l) {
      switch (spec.family) {
        case Family::BernoulliBeta: B(k, l) = rng.beta(spec.b_hyper.a_B, spec.b_hyper.b_B); break;
        case Family::SigmoidGaussian: B(k, l) = rng.normal(0.0, spec.b_hyper.sigma_B); break;
        default: B(k, l) = rng.gamma(spec.b_hyper.alpha_B, spec.b_hyper.beta_B); break;
      }
    }
  }
  return B;
}

}  // namespace detail

// One edge draw from g(. | b); for the sigmoid family b is the aggregate
// weight z_i B z_j^T.
inline double draw_edge(Rng& rng, Family family, double b) {
  switch (family) {
    case Family::BernoulliBeta: return rng.bernoulli(b) ? 1.0 : 0.0;
    case Family::PoissonGamma: return static_cast<double>(rng.poisson(b));
    case Family::BetaUnitGamma: {
      // Beta(B,1) via inverse cdf F(x) = x^B.
      double e = std::exp(std::log(rng.uniform_pos()) / b);
      return e < 1e-300 ? 1e-300 : e;
    }
    default: return rng.bernoulli(sigmoid(b)) ? 1.0 : 0.0;
  }
}

// Samples eta -> psi -> pi -> indicators/features -> B -> edges in generative
// order and returns the data together with every latent drawn.
inline SyntheticData simulate(const SyntheticSpec& spec, const MetadataMatrix& phi) {
  detail::validate_spec(spec, phi);
  Rng rng(spec.seed);
  int n = spec.n, K = spec.k_max;

  SyntheticData out;
  out.net.n = n;
  out.net.kind = spec.kind;
  out.net.edges = Grid<double>(n, n, 0.0);
  out.net.mask = Grid<std::uint8_t>(n, n, static_cast<std::uint8_t>(MaskState::Train));
  for (int i = 0; i < n; ++i) out.net.set_state(i, i, MaskState::Unobserved);

  SyntheticTruth& t = out.truth;
  t.eta = detail::draw_eta(rng, spec);
  t.pi = Grid<double>(n, K);

  if (spec.model == Model::InfLF) {
    t.psi = Grid<double>(n, K);
    t.psi_log = Grid<double>(n, K);
    t.z = Grid<std::uint8_t>(n, K);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < K; ++k) {
        double a = eta_product(phi, i, t.eta, k);
        auto d = rng.beta_log(a, 1.0);
        t.psi(i, k) = d.value;
        t.psi_log(i, k) = d.log_value;
      }
      pi_from_sticks_inflf({t.psi.row(i), static_cast<std::size_t>(K)},
                           {t.pi.row(i), static_cast<std::size_t>(K)});
      for (int k = 0; k < K; ++k) t.z(i, k) = rng.bernoulli(t.pi(i, k)) ? 1 : 0;
    }
    t.B = detail::draw_B(rng, spec);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        double w = 0.0;
        for (int k = 0; k < K; ++k) {
          if (!t.z(i, k)) continue;
          for (int l = 0; l < K; ++l)
            if (t.z(j, l)) w += t.B(k, l);
        }
        out.net.edges(i, j) = draw_edge(rng, spec.family, w);
      }
    }
    return out;
  }

  // Mixed-membership branches.
  if (spec.model == Model::InfMM) {
    t.psi = Grid<double>(n, K);
    t.psi_log = Grid<double>(n, K);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < K - 1; ++k) {
        double a = eta_product(phi, i, t.eta, k);
        auto d = rng.beta_log(1.0, a);
        t.psi(i, k) = d.value;
        t.psi_log(i, k) = d.log_complement;
      }
      t.psi(i, K - 1) = 1.0;  // leftover mass folds into the last community
      t.psi_log(i, K - 1) = 0.0;
      double remaining = 1.0;
      for (int k = 0; k < K; ++k) {
        double p = t.psi(i, k);
        t.pi(i, k) = (k == K - 1) ? remaining : p * remaining;
        remaining *= 1.0 - p;
      }
    }
  } else {  // cInfMM: finite Dirichlet with metadata-informed pseudo-counts
    std::vector<double> alpha(K);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < K; ++k) alpha[k] = eta_product(phi, i, t.eta, k);
      rng.dirichlet(alpha, {t.pi.row(i), static_cast<std::size_t>(K)});
    }
  }

  t.s = Grid<int>(n, n, -1);
  t.r = Grid<int>(n, n, -1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      t.s(i, j) = rng.discrete({t.pi.row(i), static_cast<std::size_t>(K)});
      t.r(i, j) = rng.discrete({t.pi.row(j), static_cast<std::size_t>(K)});
    }
  }
  t.B = detail::draw_B(rng, spec);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      out.net.edges(i, j) = draw_edge(rng, spec.family, t.B(t.s(i, j), t.r(i, j)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

struct PlantedData {
  NetworkData net;
  std::vector<int> labels;
  Grid<double> B;
};

// Block-structured benchmark network with hard memberships. `separation`
// controls how diagonal-dominant B is:
//   binary:      within = min(0.95, 0.5 + s/2), between = max(0.05, 0.5 - s/2)
//   count/unit:  within = exp(s),               between = exp(-s)
inline PlantedData plant_communities(int n, int K, double separation, LinkKind kind,
                                     std::uint64_t seed) {
  if (K < 1 || K > n) throw DataError("plant_communities requires 1 <= K <= n");
  Rng rng(seed);
  PlantedData out;
  out.net.n = n;
  out.net.kind = kind;
  out.net.edges = Grid<double>(n, n, 0.0);
  out.net.mask = Grid<std::uint8_t>(n, n, static_cast<std::uint8_t>(MaskState::Train));
  for (int i = 0; i < n; ++i) out.net.set_state(i, i, MaskState::Unobserved);

  double within, between;
  if (kind == LinkKind::Binary) {
    within = std::min(0.95, 0.5 + separation / 2.0);
    between = std::max(0.05, 0.5 - separation / 2.0);
  } else {
    within = std::exp(separation);
    between = std::exp(-separation);
  }
  out.B = Grid<double>(K, K, between);
  for (int k = 0; k < K; ++k) out.B(k, k) = within;

  out.labels.resize(n);
  for (int i = 0; i < n; ++i) out.labels[i] = static_cast<int>(static_cast<long>(i) * K / n);

  Family family = default_family(kind, /*latent_feature=*/false);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      out.net.edges(i, j) =
          draw_edge(rng, family, out.B(out.labels[i], out.labels[j]));
    }
  }
  return out;
}

}  // namespace infrel
