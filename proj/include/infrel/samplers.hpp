#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "infrel/densities.hpp"
#include "infrel/genmodel.hpp"
#include "infrel/grid.hpp"
#include "infrel/linkmodels.hpp"
#include "infrel/model.hpp"
#include "infrel/netdata.hpp"
#include "infrel/priors.hpp"
#include "infrel/rng.hpp"

namespace infrel {

struct RunConfig {
  long iterations = 10000;
  long burn_in = 5000;
  long thinning = 1;
  int chains = 30;
  int k_max = 20;   // truncation level for cInfMM/InfLF, fixed K when truncated
  int k_init = 4;   // starting K for the uncollapsed infinite sampler
  std::uint64_t seed = 42;
  bool infmm_truncated = false;   // pin the last stick to 1 and disable birth/prune
  bool eta_frozen = false;        // iMMM/LFRM reductions: eta fixed at alpha^{1/F}
  double alpha = 1.0;             // concentration used when eta is frozen
  bool resample_hypers = false;
  bool random_scan = false;
  EtaHyper eta_hyper;
  BHyper b_hyper;
  long checkpoint_every = 0;  // iterations between checkpoints, 0 = off
  std::string checkpoint_path;
};

struct TraceRecord {
  long iteration = 0;
  int k_active = 0;
  double log_joint = 0.0;
  double heldout_auc = std::numeric_limits<double>::quiet_NaN();
  double heldout_loglik = std::numeric_limits<double>::quiet_NaN();
};

// Everything needed to score edges from one retained posterior draw.
struct Sample {
  Model model = Model::InfMM;
  Family family = Family::BernoulliBeta;
  int K = 0;
  Grid<double> pi;               // n x K (InfMM explicit; cInfMM posterior mean)
  std::vector<double> residual;  // per-row leftover stick mass (InfMM only)
  Grid<std::uint8_t> z;          // n x K (InfLF)
  Grid<double> B;                // K x K
  Grid<double> eta;              // F x K
  BHyper b_hyper;
};

struct SweepStats {
  long nontrain_lik_evals = 0;  // likelihood reads outside Train cells; must stay 0
  long births = 0;
  long prunes = 0;
};

// Optional per-update instrumentation (conditional parameters as used).
struct UpdateLog {
  struct PsiRec {
    int i, k;
    long n_ik, tail;
    double a, b;
  };
  struct IndRec {
    int i, j;
    bool sender;
    std::vector<double> probs;
  };
  struct BRec {
    int k, l;
    double p1, p2;  // Gamma shape/rate or Beta a/b
  };
  bool record_indicators = false;
  std::vector<PsiRec> psi;
  std::vector<IndRec> indicators;
  std::vector<BRec> b;
  void clear() {
    psi.clear();
    indicators.clear();
    b.clear();
  }
};

// All latent variables of one chain. One chain owns one state and its RNG;
// chains never share mutable data.
struct SamplerState {
  Model model = Model::InfMM;
  Family family = Family::BernoulliBeta;
  int n = 0, F = 0;
  int k_active = 0;
  long iteration = 0;
  Grid<double> psi;              // n x K sticks (empty for cInfMM)
  Grid<double> psi_log;          // exact companion: InfMM ln(1-psi), InfLF ln(psi);
                                 // 0.0 sentinel on the pinned truncated stick
  Grid<double> pi;               // n x K (empty for cInfMM; derived there)
  std::vector<double> residual;  // n (InfMM)
  Grid<int> s, r;                // n x n indicators (InfMM/cInfMM), -1 off-support
  Grid<std::uint8_t> z;          // n x K features (InfLF)
  Grid<double> B;                // K x K
  Grid<double> eta;              // F x K
  EtaHyper eta_hyper;
  BHyper b_hyper;
  bool truncated = false;   // fixed K; InfMM last stick pinned to 1
  bool eta_frozen = false;
  Rng rng{1};

  // Scratch space; never serialized, rebuilt on demand.
  struct Workspace {
    Grid<double> a;        // n x K eta products
    Grid<long> counts;     // n x K indicator counts
    std::vector<long> c_total;  // per-entity indicator totals (cInfMM)
    Grid<double> v;        // n x K: V(j,m) = sum_l B(m,l) z(j,l) (InfLF)
    Grid<double> w;        // n x n aggregate weights (InfLF)
    std::vector<double> probs;
    std::vector<std::pair<int, int>> train_cells;
    bool cells_valid = false;
  } ws;
};

namespace smp {

inline std::span<const double> row_span(const Grid<double>& g, int i) {
  return {g.row(i), static_cast<std::size_t>(g.cols())};
}
inline std::span<double> row_span(Grid<double>& g, int i) {
  return {g.row(i), static_cast<std::size_t>(g.cols())};
}

// pi row from sticks, tolerating the pinned last stick (psi == 1) used by the
// truncated InfMM representation.
inline double stick_to_pi(std::span<const double> psi_row, std::span<double> pi_row) {
  double remaining = 1.0;
  for (std::size_t k = 0; k < psi_row.size(); ++k) {
    double p = psi_row[k];
    if (p >= 1.0) {
      pi_row[k] = remaining;
      remaining = 0.0;
    } else {
      pi_row[k] = p * remaining;
      remaining *= 1.0 - p;
    }
  }
  return remaining;
}

inline void refresh_eta_cache(SamplerState& st, const MetadataMatrix& meta) {
  st.ws.a = Grid<double>(st.n, st.k_active);
  for (int i = 0; i < st.n; ++i)
    for (int k = 0; k < st.k_active; ++k) st.ws.a(i, k) = eta_product(meta, i, st.eta, k);
}

inline void refresh_train_cells(SamplerState& st, const NetworkData& data) {
  if (st.ws.cells_valid) return;
  st.ws.train_cells.clear();
  for (int i = 0; i < data.n; ++i)
    for (int j = 0; j < data.n; ++j)
      if (data.is_train(i, j)) st.ws.train_cells.emplace_back(i, j);
  st.ws.cells_valid = true;
}

// N_ik = #{j : s_ij = k} + #{j : r_ji = k}, over Train cells only.
inline void count_indicators(SamplerState& st, const NetworkData& data) {
  st.ws.counts = Grid<long>(st.n, st.k_active, 0);
  refresh_train_cells(st, data);
  for (auto [i, j] : st.ws.train_cells) {
    ++st.ws.counts(i, st.s(i, j));
    ++st.ws.counts(j, st.r(i, j));
  }
}

inline double edge_loglik_checked(const SamplerState& st, const NetworkData& data, int i, int j,
                                  double b, SweepStats* stats) {
  if (stats && !data.is_train(i, j)) ++stats->nontrain_lik_evals;
  return loglik_edge(data.edges(i, j), b, st.family);
}

// Adds a freshly instantiated community K+1: prior eta column (or the frozen
// value), prior sticks, prior B row/column, incremental pi extension.
inline void infmm_birth(SamplerState& st, const MetadataMatrix& meta, SweepStats* stats) {
  int K = st.k_active;
  st.eta.append_col();
  for (int f = 0; f < st.F; ++f) {
    st.eta(f, K) = st.eta_frozen
                       ? (st.F > 0 ? st.eta(f, 0) : 1.0)
                       : clamp_eta(st.rng.gamma(st.eta_hyper.alpha_eta, st.eta_hyper.beta_eta));
  }
  st.ws.a.append_col();
  for (int i = 0; i < st.n; ++i) st.ws.a(i, K) = eta_product(meta, i, st.eta, K);

  st.psi.append_col();
  st.psi_log.append_col();
  st.pi.append_col();
  for (int i = 0; i < st.n; ++i) {
    auto d = st.rng.beta_log(1.0, st.ws.a(i, K));
    st.psi(i, K) = d.value;
    st.psi_log(i, K) = d.log_complement;
    st.pi(i, K) = d.value * st.residual[i];
    st.residual[i] *= 1.0 - d.value;
  }

  Grid<double> B2(K + 1, K + 1);
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < K; ++l) B2(k, l) = st.B(k, l);
  auto prior_b = [&]() {
    switch (st.family) {
      case Family::BernoulliBeta: return st.rng.beta(st.b_hyper.a_B, st.b_hyper.b_B);
      case Family::SigmoidGaussian: return st.rng.normal(0.0, st.b_hyper.sigma_B);
      default: return st.rng.gamma(st.b_hyper.alpha_B, st.b_hyper.beta_B);
    }
  };
  for (int l = 0; l <= K; ++l) B2(K, l) = prior_b();  // new row first, then new column
  for (int k = 0; k < K; ++k) B2(k, K) = prior_b();
  st.B = std::move(B2);

  st.k_active = K + 1;
  if (stats) ++stats->births;
}

inline void infmm_prune_empty(SamplerState& st, const NetworkData& data, SweepStats* stats) {
  count_indicators(st, data);
  std::vector<long> usage(st.k_active, 0);
  long total = 0;
  for (int i = 0; i < st.n; ++i)
    for (int k = 0; k < st.k_active; ++k) {
      usage[k] += st.ws.counts(i, k);
      total += st.ws.counts(i, k);
    }
  if (total == 0) return;  // no indicators at all; nothing to anchor K

  std::vector<int> keep;
  for (int k = 0; k < st.k_active; ++k)
    if (usage[k] > 0) keep.push_back(k);
  if (static_cast<int>(keep.size()) == st.k_active) return;

  std::vector<int> relabel(st.k_active, -1);
  for (std::size_t t = 0; t < keep.size(); ++t) relabel[keep[t]] = static_cast<int>(t);

  int K2 = static_cast<int>(keep.size());
  Grid<double> psi2(st.n, K2), psi_log2(st.n, K2), pi2(st.n, K2), eta2(st.F, K2), B2(K2, K2),
      a2(st.n, K2);
  for (int t = 0; t < K2; ++t) {
    int k = keep[t];
    for (int i = 0; i < st.n; ++i) {
      psi2(i, t) = st.psi(i, k);
      psi_log2(i, t) = st.psi_log(i, k);
      a2(i, t) = st.ws.a(i, k);
    }
    for (int f = 0; f < st.F; ++f) eta2(f, t) = st.eta(f, k);
    for (int u = 0; u < K2; ++u) B2(t, u) = st.B(k, keep[u]);
  }
  for (auto [i, j] : st.ws.train_cells) {
    st.s(i, j) = relabel[st.s(i, j)];
    st.r(i, j) = relabel[st.r(i, j)];
  }
  st.psi = std::move(psi2);
  st.psi_log = std::move(psi_log2);
  st.eta = std::move(eta2);
  st.B = std::move(B2);
  st.ws.a = std::move(a2);
  st.pi = std::move(pi2);
  for (int i = 0; i < st.n; ++i)
    st.residual[i] = stick_to_pi(row_span(std::as_const(st.psi), i), row_span(st.pi, i));
  if (stats) stats->prunes += st.k_active - K2;
  st.k_active = K2;
}

}  // namespace smp

// ---------------------------------------------------------------------------
// InfMM (uncollapsed, dynamic K unless truncated)

// Full conditional of one membership indicator: entry k < K is
// pi_k * g(e | B) with the partner indicator held fixed; in infinite mode the
// last entry scores the undiscovered community via residual mass times the
// prior-marginal edge probability.
inline std::vector<double> indicator_conditional_infmm(const SamplerState& st,
                                                       const NetworkData& data, int i, int j,
                                                       bool sender) {
  int K = st.k_active;
  bool open = !st.truncated;
  std::vector<double> p(K + (open ? 1 : 0));
  int self = sender ? i : j;
  double e = data.edges(i, j);
  for (int k = 0; k < K; ++k) {
    double b = sender ? st.B(k, st.r(i, j)) : st.B(st.s(i, j), k);
    p[k] = st.pi(self, k) * std::exp(loglik_edge(e, b, st.family));
  }
  if (open) p[K] = st.residual[self] * marginal_edge(e, st.family, st.b_hyper);
  double total = 0.0;
  for (double x : p) total += x;
  if (!(total > 0.0)) throw std::runtime_error("indicator conditional has zero mass");
  for (double& x : p) x /= total;
  return p;
}

namespace smp {

// Unnormalized version used inside the sweep; returns the sampled index.
inline int draw_indicator_infmm(SamplerState& st, const NetworkData& data, int i, int j,
                                bool sender, SweepStats* stats, UpdateLog* log) {
  int K = st.k_active;
  bool open = !st.truncated;
  auto& p = st.ws.probs;
  p.resize(K + (open ? 1 : 0));
  int self = sender ? i : j;
  double e = data.edges(i, j);
  for (int k = 0; k < K; ++k) {
    double b = sender ? st.B(k, st.r(i, j)) : st.B(st.s(i, j), k);
    p[k] = st.pi(self, k) * std::exp(edge_loglik_checked(st, data, i, j, b, stats));
  }
  if (open) p[K] = st.residual[self] * marginal_edge(e, st.family, st.b_hyper);
  if (log && log->record_indicators) {
    UpdateLog::IndRec rec{i, j, sender, {p.begin(), p.end()}};
    double tot = 0.0;
    for (double x : rec.probs) tot += x;
    for (double& x : rec.probs) x /= tot;
    log->indicators.push_back(std::move(rec));
  }
  return st.rng.discrete(p);
}

inline void update_B_mixed(SamplerState& st, const NetworkData& data, UpdateLog* log) {
  int K = st.k_active;
  refresh_train_cells(st, data);
  // Sufficient statistics per (k,l) assignment block.
  Grid<double> sum(K, K, 0.0);
  Grid<long> m(K, K, 0);
  Grid<long> ones(K, K, 0);
  for (auto [i, j] : st.ws.train_cells) {
    int k = st.s(i, j), l = st.r(i, j);
    double e = data.edges(i, j);
    ++m(k, l);
    if (st.family == Family::BernoulliBeta) {
      if (e > 0.0) ++ones(k, l);
    } else if (st.family == Family::PoissonGamma) {
      sum(k, l) += e;
    } else {
      sum(k, l) += std::log(e);
    }
  }
  for (int k = 0; k < K; ++k) {
    for (int l = 0; l < K; ++l) {
      switch (st.family) {
        case Family::BernoulliBeta: {
          auto p = b_posterior_bernoulli(ones(k, l), m(k, l) - ones(k, l), st.b_hyper);
          if (log) log->b.push_back({k, l, p.a, p.b});
          st.B(k, l) = st.rng.beta(p.a, p.b);
          break;
        }
        case Family::PoissonGamma: {
          auto p = b_posterior_poisson(sum(k, l), m(k, l), st.b_hyper);
          if (log) log->b.push_back({k, l, p.shape, p.rate});
          st.B(k, l) = st.rng.gamma(p.shape, p.rate);
          break;
        }
        default: {
          auto p = b_posterior_unit(sum(k, l), m(k, l), st.b_hyper);
          if (log) log->b.push_back({k, l, p.shape, p.rate});
          st.B(k, l) = st.rng.gamma(p.shape, p.rate);
          break;
        }
      }
    }
  }
}

// Generic log random-walk Metropolis step on a positive scalar.
template <typename LogTarget>
inline double mh_log_walk(Rng& rng, double cur, double step, LogTarget&& lt) {
  double prop = cur * std::exp(step * rng.normal());
  double la = lt(prop) - lt(cur) + std::log(prop) - std::log(cur);
  if (std::log(rng.uniform_pos()) < la) return prop;
  return cur;
}

inline void resample_hypers_mixed(SamplerState& st) {
  // Gamma(1,1) hyperprior on every hyperparameter, per-parameter MH.
  if (!st.eta_frozen && st.F > 0) {
    auto target_a = [&](double a) {
      if (a <= 0.0) return kNegInf;
      double lp = log_gamma_pdf(a, 1.0, 1.0);
      for (int f = 0; f < st.F; ++f)
        for (int k = 0; k < st.k_active; ++k)
          lp += log_gamma_pdf(st.eta(f, k), a, st.eta_hyper.beta_eta);
      return lp;
    };
    st.eta_hyper.alpha_eta = mh_log_walk(st.rng, st.eta_hyper.alpha_eta, 0.2, target_a);
    auto target_b = [&](double b) {
      if (b <= 0.0) return kNegInf;
      double lp = log_gamma_pdf(b, 1.0, 1.0);
      for (int f = 0; f < st.F; ++f)
        for (int k = 0; k < st.k_active; ++k)
          lp += log_gamma_pdf(st.eta(f, k), st.eta_hyper.alpha_eta, b);
      return lp;
    };
    st.eta_hyper.beta_eta = mh_log_walk(st.rng, st.eta_hyper.beta_eta, 0.2, target_b);
  }
  auto b_prior_ll = [&](const BHyper& h) {
    double lp = 0.0;
    for (int k = 0; k < st.k_active; ++k) {
      for (int l = 0; l < st.k_active; ++l) {
        switch (st.family) {
          case Family::BernoulliBeta: lp += log_beta_pdf(st.B(k, l), h.a_B, h.b_B); break;
          case Family::SigmoidGaussian: lp += log_normal_pdf(st.B(k, l), 0.0, h.sigma_B); break;
          default: lp += log_gamma_pdf(st.B(k, l), h.alpha_B, h.beta_B); break;
        }
      }
    }
    return lp;
  };
  auto step_field = [&](double BHyper::* field) {
    auto target = [&](double v) {
      if (v <= 0.0) return kNegInf;
      BHyper h = st.b_hyper;
      h.*field = v;
      return log_gamma_pdf(v, 1.0, 1.0) + b_prior_ll(h);
    };
    st.b_hyper.*field = mh_log_walk(st.rng, st.b_hyper.*field, 0.2, target);
  };
  switch (st.family) {
    case Family::BernoulliBeta:
      step_field(&BHyper::a_B);
      step_field(&BHyper::b_B);
      break;
    case Family::SigmoidGaussian:
      step_field(&BHyper::sigma_B);
      break;
    default:
      step_field(&BHyper::alpha_B);
      step_field(&BHyper::beta_B);
      break;
  }
}

}  // namespace smp

// One full InfMM Gibbs scan: all indicators (with lazy community birth in
// infinite mode), prune, then sticks, eta, B, and the pi rebuild.
inline void infmm_sweep(SamplerState& st, const NetworkData& data, const MetadataMatrix& meta,
                        SweepStats* stats = nullptr, UpdateLog* log = nullptr,
                        bool random_scan = false, bool resample_hypers = false) {
  smp::refresh_train_cells(st, data);
  if (st.ws.a.rows() != st.n || st.ws.a.cols() != st.k_active) smp::refresh_eta_cache(st, meta);

  auto cells = st.ws.train_cells;  // copy: birth/prune invalidate nothing here, order fixed
  if (random_scan) st.rng.shuffle(cells);
  for (auto [i, j] : cells) {
    int snew = smp::draw_indicator_infmm(st, data, i, j, /*sender=*/true, stats, log);
    if (snew == st.k_active) smp::infmm_birth(st, meta, stats);
    st.s(i, j) = snew;
    int rnew = smp::draw_indicator_infmm(st, data, i, j, /*sender=*/false, stats, log);
    if (rnew == st.k_active) smp::infmm_birth(st, meta, stats);
    st.r(i, j) = rnew;
  }
  if (!st.truncated) smp::infmm_prune_empty(st, data, stats);

  // Sticks: Beta(N_ik + 1, tail counts + eta product). The pinned last stick
  // of the truncated representation is not a free variable.
  smp::count_indicators(st, data);
  int free_k = st.truncated ? st.k_active - 1 : st.k_active;
  for (int i = 0; i < st.n; ++i) {
    long tail = 0;
    for (int k = 0; k < st.k_active; ++k) tail += st.ws.counts(i, k);
    for (int k = 0; k < free_k; ++k) {
      tail -= st.ws.counts(i, k);
      auto p = psi_posterior_infmm(st.ws.counts(i, k), tail, st.ws.a(i, k));
      if (log) log->psi.push_back({i, k, st.ws.counts(i, k), tail, p.a, p.b});
      auto d = st.rng.beta_log(p.a, p.b);
      st.psi(i, k) = d.value;
      st.psi_log(i, k) = d.log_complement;
    }
    if (st.truncated) {
      st.psi(i, st.k_active - 1) = 1.0;
      st.psi_log(i, st.k_active - 1) = 0.0;
    }
    st.residual[i] = smp::stick_to_pi(smp::row_span(std::as_const(st.psi), i),
                                      smp::row_span(st.pi, i));
  }

  // Importance indicators, row-major (f,k) scan; the conditional for one
  // entry depends on the current values of the others.
  if (!st.eta_frozen) {
    int eta_k = st.truncated ? st.k_active - 1 : st.k_active;
    for (int f = 0; f < st.F; ++f) {
      for (int k = 0; k < eta_k; ++k) {
        double nu = sample_eta_infmm(st.rng, f, k, meta, st.psi_log, st.eta, st.eta_hyper);
        double old = st.eta(f, k);
        st.eta(f, k) = nu;
        for (int i = 0; i < st.n; ++i)
          if (meta.phi(i, f)) st.ws.a(i, k) *= nu / old;
      }
      if (st.truncated) {
        // The pinned stick contributes no likelihood; prior draw.
        int k = st.k_active - 1;
        double nu = clamp_eta(st.rng.gamma(st.eta_hyper.alpha_eta, st.eta_hyper.beta_eta));
        double old = st.eta(f, k);
        st.eta(f, k) = nu;
        for (int i = 0; i < st.n; ++i)
          if (meta.phi(i, f)) st.ws.a(i, k) *= nu / old;
      }
    }
  }

  smp::update_B_mixed(st, data, log);
  if (resample_hypers) smp::resample_hypers_mixed(st);
}

// ---------------------------------------------------------------------------
// cInfMM (finite K, membership distributions collapsed)

// Collapsed conditional: Pr(s_ij = k | rest) prop to
// (N_ik^{minus this draw} + prod_f eta_fk^{phi_if}) * g(e_ij | B_{k, r_ij}).
// Callers must pass counts that already exclude the indicator being drawn.
inline std::vector<double> cinfmm_indicator_conditional(const SamplerState& st,
                                                        const NetworkData& data,
                                                        std::span<const long> counts_minus,
                                                        int i, int j, bool sender) {
  int K = st.k_active;
  if (st.model != Model::CInfMM) throw std::runtime_error("collapsed conditional needs cInfMM");
  std::vector<double> p(K);
  int self = sender ? i : j;
  double e = data.edges(i, j);
  for (int k = 0; k < K; ++k) {
    double b = sender ? st.B(k, st.r(i, j)) : st.B(st.s(i, j), k);
    p[k] = (static_cast<double>(counts_minus[k]) + st.ws.a(self, k)) *
           std::exp(loglik_edge(e, b, st.family));
  }
  double total = 0.0;
  for (double x : p) total += x;
  if (!(total > 0.0)) throw std::runtime_error("indicator conditional has zero mass");
  for (double& x : p) x /= total;
  return p;
}

namespace smp {

inline int draw_indicator_cinfmm(SamplerState& st, const NetworkData& data, int i, int j,
                                 bool sender, SweepStats* stats) {
  int K = st.k_active;
  auto& p = st.ws.probs;
  p.resize(K);
  int self = sender ? i : j;
  for (int k = 0; k < K; ++k) {
    double b = sender ? st.B(k, st.r(i, j)) : st.B(st.s(i, j), k);
    p[k] = (static_cast<double>(st.ws.counts(self, k)) + st.ws.a(self, k)) *
           std::exp(edge_loglik_checked(st, data, i, j, b, stats));
  }
  return st.rng.discrete(p);
}

// Collapsed Dirichlet-multinomial log marginal terms touched by eta_fk for a
// single entity: lgamma(A_i) - lgamma(C_i + A_i) + lgamma(N_ik + a_ik) - lgamma(a_ik).
inline double cinfmm_eta_logtarget(const SamplerState& st, const MetadataMatrix& meta, int f,
                                   int k, double value) {
  double lp = log_gamma_pdf(value, st.eta_hyper.alpha_eta, st.eta_hyper.beta_eta);
  for (int i = 0; i < st.n; ++i) {
    if (!meta.phi(i, f)) continue;
    double a_ik = st.ws.a(i, k) / st.eta(f, k) * value;
    double A_i = a_ik;
    for (int l = 0; l < st.k_active; ++l)
      if (l != k) A_i += st.ws.a(i, l);
    double C_i = static_cast<double>(st.ws.c_total[i]);
    lp += std::lgamma(A_i) - std::lgamma(C_i + A_i) + std::lgamma(st.ws.counts(i, k) + a_ik) -
          std::lgamma(a_ik);
  }
  return lp;
}

}  // namespace smp

// One collapsed Gibbs scan: indicators against Dirichlet-multinomial
// conditionals, Metropolis eta on the collapsed joint, conjugate B.
inline void cinfmm_sweep(SamplerState& st, const NetworkData& data, const MetadataMatrix& meta,
                         SweepStats* stats = nullptr, UpdateLog* log = nullptr,
                         bool random_scan = false, bool resample_hypers = false) {
  smp::refresh_train_cells(st, data);
  if (st.ws.a.rows() != st.n || st.ws.a.cols() != st.k_active) smp::refresh_eta_cache(st, meta);
  smp::count_indicators(st, data);
  st.ws.c_total.assign(st.n, 0);
  for (int i = 0; i < st.n; ++i)
    for (int k = 0; k < st.k_active; ++k) st.ws.c_total[i] += st.ws.counts(i, k);

  auto cells = st.ws.train_cells;
  if (random_scan) st.rng.shuffle(cells);
  for (auto [i, j] : cells) {
    --st.ws.counts(i, st.s(i, j));
    st.s(i, j) = smp::draw_indicator_cinfmm(st, data, i, j, /*sender=*/true, stats);
    ++st.ws.counts(i, st.s(i, j));
    --st.ws.counts(j, st.r(i, j));
    st.r(i, j) = smp::draw_indicator_cinfmm(st, data, i, j, /*sender=*/false, stats);
    ++st.ws.counts(j, st.r(i, j));
  }

  if (!st.eta_frozen) {
    for (int f = 0; f < st.F; ++f) {
      for (int k = 0; k < st.k_active; ++k) {
        double cur = st.eta(f, k);
        double nu = smp::mh_log_walk(st.rng, cur, 0.3, [&](double v) {
          if (v < kEtaFloor || v > kEtaCeil) return kNegInf;
          return smp::cinfmm_eta_logtarget(st, meta, f, k, v);
        });
        if (nu != cur) {
          st.eta(f, k) = nu;
          for (int i = 0; i < st.n; ++i)
            if (meta.phi(i, f)) st.ws.a(i, k) *= nu / cur;
        }
      }
    }
  }

  smp::update_B_mixed(st, data, log);
  if (resample_hypers) smp::resample_hypers_mixed(st);
}

// ---------------------------------------------------------------------------
// InfLF (truncated latent feature model)

namespace smp {

// V(j,m) = sum_l B(m,l) z(j,l); w(i,j) = sum_m z(i,m) V(j,m) = z_i B z_j^T.
inline void refresh_feature_weights(SamplerState& st) {
  int K = st.k_active;
  st.ws.v = Grid<double>(st.n, K, 0.0);
  for (int j = 0; j < st.n; ++j)
    for (int m = 0; m < K; ++m) {
      double acc = 0.0;
      for (int l = 0; l < K; ++l)
        if (st.z(j, l)) acc += st.B(m, l);
      st.ws.v(j, m) = acc;
    }
  st.ws.w = Grid<double>(st.n, st.n, 0.0);
  for (int i = 0; i < st.n; ++i)
    for (int j = 0; j < st.n; ++j) {
      if (i == j) continue;
      double acc = 0.0;
      for (int m = 0; m < K; ++m)
        if (st.z(i, m)) acc += st.ws.v(j, m);
      st.ws.w(i, j) = acc;
    }
}

inline double loglik_diff_guarded(double ll1, double ll0) {
  bool inf1 = ll1 == kNegInf, inf0 = ll0 == kNegInf;
  if (inf1 && inf0) return 0.0;
  if (inf1) return -1e300;
  if (inf0) return 1e300;
  return ll1 - ll0;
}

}  // namespace smp

// One InfLF scan: feature flips from their Bernoulli conditionals, slice
// updates for the coupled sticks, conjugate eta, then B (per-entry Metropolis
// for the sigmoid family, Poisson superposition augmentation for counts).
inline void inflf_sweep(SamplerState& st, const NetworkData& data, const MetadataMatrix& meta,
                        SweepStats* stats = nullptr, UpdateLog* log = nullptr,
                        bool random_scan = false, bool resample_hypers = false) {
  (void)log;
  int K = st.k_active;
  smp::refresh_train_cells(st, data);
  if (st.ws.a.rows() != st.n || st.ws.a.cols() != K) smp::refresh_eta_cache(st, meta);
  smp::refresh_feature_weights(st);

  std::vector<double> delta_in(st.n);
  std::vector<int> entity_order(st.n);
  for (int i = 0; i < st.n; ++i) entity_order[i] = i;
  if (random_scan) st.rng.shuffle(entity_order);

  for (int i : entity_order) {
    for (int k = 0; k < K; ++k) {
      // Weight deltas if z_ik were on vs off.
      for (int j = 0; j < st.n; ++j) {
        double acc = 0.0;
        for (int m = 0; m < K; ++m)
          if (st.z(j, m)) acc += st.B(m, k);
        delta_in[j] = acc;  // change of w(j,i)
      }
      bool cur = st.z(i, k);
      double diff = 0.0;  // loglik(z_ik=1) - loglik(z_ik=0)
      for (int j = 0; j < st.n; ++j) {
        if (j == i) continue;
        if (data.is_train(i, j)) {
          double w = st.ws.w(i, j);
          double w1 = cur ? w : w + st.ws.v(j, k);
          double w0 = cur ? w - st.ws.v(j, k) : w;
          diff += smp::loglik_diff_guarded(
              smp::edge_loglik_checked(st, data, i, j, w1, stats),
              smp::edge_loglik_checked(st, data, i, j, w0, stats));
        }
        if (data.is_train(j, i)) {
          double w = st.ws.w(j, i);
          double w1 = cur ? w : w + delta_in[j];
          double w0 = cur ? w - delta_in[j] : w;
          diff += smp::loglik_diff_guarded(
              smp::edge_loglik_checked(st, data, j, i, w1, stats),
              smp::edge_loglik_checked(st, data, j, i, w0, stats));
        }
      }
      double pi_ik = st.pi(i, k);
      double logit = std::log(pi_ik) - std::log1p(-pi_ik) + diff;
      bool nu = st.rng.bernoulli(sigmoid(logit));
      if (nu != cur) {
        double sgn = nu ? 1.0 : -1.0;
        st.z(i, k) = nu ? 1 : 0;
        for (int j = 0; j < st.n; ++j) {
          if (j == i) continue;
          st.ws.w(i, j) += sgn * st.ws.v(j, k);
          st.ws.w(j, i) += sgn * delta_in[j];
        }
        for (int m = 0; m < K; ++m) st.ws.v(i, m) += sgn * st.B(m, k);
      }
    }
  }

  // Sticks via slice steps (the cumulative products couple every l >= k).
  for (int i = 0; i < st.n; ++i) {
    for (int k = 0; k < K; ++k) {
      auto d = sample_psi_inflf(st.rng, k, smp::row_span(std::as_const(st.psi_log), i),
                                {st.z.row(i), static_cast<std::size_t>(K)}, st.ws.a(i, k));
      st.psi(i, k) = d.value;
      st.psi_log(i, k) = d.log_value;
    }
    pi_from_sticks_inflf(smp::row_span(std::as_const(st.psi), i), smp::row_span(st.pi, i));
  }

  if (!st.eta_frozen) {
    for (int f = 0; f < st.F; ++f) {
      for (int k = 0; k < K; ++k) {
        double nu = sample_eta_inflf(st.rng, f, k, meta, st.psi_log, st.eta, st.eta_hyper);
        double old = st.eta(f, k);
        st.eta(f, k) = nu;
        for (int i = 0; i < st.n; ++i)
          if (meta.phi(i, f)) st.ws.a(i, k) *= nu / old;
      }
    }
  }

  if (st.family == Family::SigmoidGaussian) {
    // Random-walk Metropolis on each compatibility weight, proposal sd 0.1.
    for (int k = 0; k < K; ++k) {
      for (int l = 0; l < K; ++l) {
        double cur = st.B(k, l);
        double prop = cur + 0.1 * st.rng.normal();
        double la = log_normal_pdf(prop, 0.0, st.b_hyper.sigma_B) -
                    log_normal_pdf(cur, 0.0, st.b_hyper.sigma_B);
        double delta = prop - cur;
        for (auto [i, j] : st.ws.train_cells) {
          if (!st.z(i, k) || !st.z(j, l)) continue;
          double w = st.ws.w(i, j);
          la += smp::loglik_diff_guarded(
              smp::edge_loglik_checked(st, data, i, j, w + delta, stats),
              smp::edge_loglik_checked(st, data, i, j, w, stats));
        }
        if (std::log(st.rng.uniform_pos()) < la) {
          st.B(k, l) = prop;
          for (auto [i, j] : st.ws.train_cells)
            if (st.z(i, k) && st.z(j, l)) st.ws.w(i, j) += delta;
          for (int j = 0; j < st.n; ++j)
            if (st.z(j, l)) st.ws.v(j, k) += delta;
        }
      }
    }
  } else {
    // Poisson superposition: split each positive count across its active
    // (k,l) pairs, then every B_kl keeps an exact Gamma update.
    Grid<double> csum(K, K, 0.0);
    Grid<long> m(K, K, 0);
    std::vector<double> pair_w;
    std::vector<std::pair<int, int>> pairs;
    for (auto [i, j] : st.ws.train_cells) {
      pairs.clear();
      pair_w.clear();
      for (int k = 0; k < K; ++k) {
        if (!st.z(i, k)) continue;
        for (int l = 0; l < K; ++l) {
          if (!st.z(j, l)) continue;
          ++m(k, l);
          pairs.emplace_back(k, l);
          pair_w.push_back(st.B(k, l));
        }
      }
      long e = static_cast<long>(std::llround(data.edges(i, j)));
      if (e > 0 && !pairs.empty()) {
        for (long t = 0; t < e; ++t) {
          int idx = st.rng.discrete(pair_w);
          csum(pairs[idx].first, pairs[idx].second) += 1.0;
        }
      }
    }
    for (int k = 0; k < K; ++k)
      for (int l = 0; l < K; ++l)
        st.B(k, l) = st.rng.gamma(st.b_hyper.alpha_B + csum(k, l),
                                  st.b_hyper.beta_B + static_cast<double>(m(k, l)));
    smp::refresh_feature_weights(st);
  }
  if (resample_hypers) smp::resample_hypers_mixed(st);
}

// ---------------------------------------------------------------------------

inline void sweep(SamplerState& st, const NetworkData& data, const MetadataMatrix& meta,
                  SweepStats* stats = nullptr, UpdateLog* log = nullptr,
                  bool random_scan = false, bool resample_hypers = false) {
  switch (st.model) {
    case Model::InfMM: infmm_sweep(st, data, meta, stats, log, random_scan, resample_hypers); break;
    case Model::CInfMM: cinfmm_sweep(st, data, meta, stats, log, random_scan, resample_hypers); break;
    default: inflf_sweep(st, data, meta, stats, log, random_scan, resample_hypers); break;
  }
}

// ---------------------------------------------------------------------------
// Chain orchestration.

inline SamplerState init_state(Model model, Family family, const NetworkData& data,
                               const MetadataMatrix& meta, const RunConfig& cfg,
                               std::uint64_t seed) {
  if (meta.n() != data.n) throw DataError("metadata entity count does not match network");
  SamplerState st;
  st.model = model;
  st.family = family;
  st.n = data.n;
  st.F = meta.F();
  st.eta_hyper = cfg.eta_hyper;
  st.b_hyper = cfg.b_hyper;
  st.eta_frozen = cfg.eta_frozen;
  st.truncated = model != Model::InfMM || cfg.infmm_truncated;
  st.rng = Rng(seed);
  int K = (model == Model::InfMM && !cfg.infmm_truncated) ? cfg.k_init : cfg.k_max;
  if (K < 1) throw DataError("need at least one community");
  st.k_active = K;

  st.eta = Grid<double>(st.F, K);
  double frozen = st.F > 0 ? std::pow(cfg.alpha, 1.0 / st.F) : 1.0;
  for (int f = 0; f < st.F; ++f)
    for (int k = 0; k < K; ++k)
      st.eta(f, k) = st.eta_frozen
                         ? frozen
                         : clamp_eta(st.rng.gamma(st.eta_hyper.alpha_eta, st.eta_hyper.beta_eta));
  smp::refresh_eta_cache(st, meta);

  auto prior_b = [&]() {
    switch (family) {
      case Family::BernoulliBeta: return st.rng.beta(st.b_hyper.a_B, st.b_hyper.b_B);
      case Family::SigmoidGaussian: return st.rng.normal(0.0, st.b_hyper.sigma_B);
      default: return st.rng.gamma(st.b_hyper.alpha_B, st.b_hyper.beta_B);
    }
  };

  if (model == Model::InfLF) {
    st.psi = Grid<double>(st.n, K);
    st.psi_log = Grid<double>(st.n, K);
    st.pi = Grid<double>(st.n, K);
    for (int i = 0; i < st.n; ++i) {
      for (int k = 0; k < K; ++k) {
        auto d = st.rng.beta_log(st.ws.a(i, k), 1.0);
        st.psi(i, k) = d.value;
        st.psi_log(i, k) = d.log_value;
      }
      pi_from_sticks_inflf(smp::row_span(std::as_const(st.psi), i), smp::row_span(st.pi, i));
    }
    st.z = Grid<std::uint8_t>(st.n, K, 0);
    for (int i = 0; i < st.n; ++i)
      for (int k = 0; k < K; ++k) st.z(i, k) = st.rng.bernoulli(0.5) ? 1 : 0;
    if (family == Family::PoissonGamma)
      for (int i = 0; i < st.n; ++i) st.z(i, 0) = 1;  // keep positive counts explainable
    st.B = Grid<double>(K, K);
    for (int k = 0; k < K; ++k)
      for (int l = 0; l < K; ++l) st.B(k, l) = prior_b();
    return st;
  }

  st.s = Grid<int>(data.n, data.n, -1);
  st.r = Grid<int>(data.n, data.n, -1);
  if (model == Model::InfMM) {
    st.psi = Grid<double>(st.n, K);
    st.psi_log = Grid<double>(st.n, K);
    st.pi = Grid<double>(st.n, K);
    st.residual.assign(st.n, 0.0);
    int free_k = st.truncated ? K - 1 : K;
    for (int i = 0; i < st.n; ++i) {
      for (int k = 0; k < free_k; ++k) {
        auto d = st.rng.beta_log(1.0, st.ws.a(i, k));
        st.psi(i, k) = d.value;
        st.psi_log(i, k) = d.log_complement;
      }
      if (st.truncated) {
        st.psi(i, K - 1) = 1.0;
        st.psi_log(i, K - 1) = 0.0;
      }
      st.residual[i] = smp::stick_to_pi(smp::row_span(std::as_const(st.psi), i),
                                        smp::row_span(st.pi, i));
    }
    for (int i = 0; i < data.n; ++i)
      for (int j = 0; j < data.n; ++j) {
        if (!data.is_train(i, j)) continue;
        st.s(i, j) = st.rng.discrete(smp::row_span(std::as_const(st.pi), i));
        st.r(i, j) = st.rng.discrete(smp::row_span(std::as_const(st.pi), j));
      }
  } else {  // cInfMM: random hidden labels
    for (int i = 0; i < data.n; ++i)
      for (int j = 0; j < data.n; ++j) {
        if (!data.is_train(i, j)) continue;
        st.s(i, j) = st.rng.uniform_int(K);
        st.r(i, j) = st.rng.uniform_int(K);
      }
  }
  st.B = Grid<double>(K, K);
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < K; ++l) st.B(k, l) = prior_b();
  if (model == Model::InfMM && !st.truncated) smp::infmm_prune_empty(st, data, nullptr);
  return st;
}

// Number of distinct communities/features actually in use.
inline int active_count(const SamplerState& st, const NetworkData& data) {
  if (st.model == Model::InfLF) {
    int used = 0;
    for (int k = 0; k < st.k_active; ++k) {
      long tot = 0;
      for (int i = 0; i < st.n; ++i) tot += st.z(i, k);
      if (tot > 0) ++used;
    }
    return used;
  }
  std::vector<char> seen(st.k_active, 0);
  for (int i = 0; i < data.n; ++i)
    for (int j = 0; j < data.n; ++j) {
      if (!data.is_train(i, j)) continue;
      seen[st.s(i, j)] = 1;
      seen[st.r(i, j)] = 1;
    }
  int used = 0;
  for (char c : seen) used += c;
  return used;
}

inline double log_prior_B(const SamplerState& st) {
  double lp = 0.0;
  for (int k = 0; k < st.k_active; ++k)
    for (int l = 0; l < st.k_active; ++l) {
      double b = st.B(k, l);
      switch (st.family) {
        case Family::BernoulliBeta: lp += log_beta_pdf(b, st.b_hyper.a_B, st.b_hyper.b_B); break;
        case Family::SigmoidGaussian: lp += log_normal_pdf(b, 0.0, st.b_hyper.sigma_B); break;
        default: lp += log_gamma_pdf(b, st.b_hyper.alpha_B, st.b_hyper.beta_B); break;
      }
    }
  return lp;
}

// Joint log density of the current state and the training data, truncated at
// the active community count.
inline double log_joint(const SamplerState& st, const NetworkData& data,
                        const MetadataMatrix& meta) {
  double lp = 0.0;
  for (int f = 0; f < st.F; ++f)
    for (int k = 0; k < st.k_active; ++k)
      lp += log_gamma_pdf(st.eta(f, k), st.eta_hyper.alpha_eta, st.eta_hyper.beta_eta);
  lp += log_prior_B(st);

  if (st.model == Model::InfLF) {
    for (int i = 0; i < st.n; ++i)
      for (int k = 0; k < st.k_active; ++k) {
        double a = eta_product(meta, i, st.eta, k);
        lp += std::log(a) + (a - 1.0) * st.psi_log(i, k);  // Beta(a,1) density
        lp += st.z(i, k) ? std::log(st.pi(i, k)) : std::log1p(-st.pi(i, k));
      }
    for (int i = 0; i < st.n; ++i)
      for (int j = 0; j < st.n; ++j) {
        if (!data.is_train(i, j)) continue;
        double w = 0.0;
        for (int k = 0; k < st.k_active; ++k) {
          if (!st.z(i, k)) continue;
          for (int l = 0; l < st.k_active; ++l)
            if (st.z(j, l)) w += st.B(k, l);
        }
        lp += loglik_edge(data.edges(i, j), w, st.family);
      }
    return lp;
  }

  if (st.model == Model::InfMM) {
    int free_k = st.truncated ? st.k_active - 1 : st.k_active;
    for (int i = 0; i < st.n; ++i)
      for (int k = 0; k < free_k; ++k) {
        double a = eta_product(meta, i, st.eta, k);
        lp += std::log(a) + (a - 1.0) * st.psi_log(i, k);  // Beta(1,a) density
      }
    for (int i = 0; i < st.n; ++i)
      for (int j = 0; j < st.n; ++j) {
        if (!data.is_train(i, j)) continue;
        lp += std::log(st.pi(i, st.s(i, j))) + std::log(st.pi(j, st.r(i, j)));
        lp += loglik_edge(data.edges(i, j), st.B(st.s(i, j), st.r(i, j)), st.family);
      }
    return lp;
  }

  // cInfMM: Dirichlet-multinomial marginal per entity.
  Grid<long> counts(st.n, st.k_active, 0);
  std::vector<long> totals(st.n, 0);
  for (int i = 0; i < st.n; ++i)
    for (int j = 0; j < st.n; ++j) {
      if (!data.is_train(i, j)) continue;
      ++counts(i, st.s(i, j));
      ++counts(j, st.r(i, j));
      ++totals[i];
      ++totals[j];
      lp += loglik_edge(data.edges(i, j), st.B(st.s(i, j), st.r(i, j)), st.family);
    }
  for (int i = 0; i < st.n; ++i) {
    double A = 0.0;
    for (int k = 0; k < st.k_active; ++k) A += eta_product(meta, i, st.eta, k);
    lp += std::lgamma(A) - std::lgamma(static_cast<double>(totals[i]) + A);
    for (int k = 0; k < st.k_active; ++k) {
      double a = eta_product(meta, i, st.eta, k);
      lp += std::lgamma(static_cast<double>(counts(i, k)) + a) - std::lgamma(a);
    }
  }
  return lp;
}

// Posterior-mean membership profile of the collapsed sampler:
// (N_ik + a_ik) / (C_i + A_i).
inline Grid<double> cinfmm_mean_pi(const SamplerState& st, const NetworkData& data,
                                   const MetadataMatrix& meta) {
  Grid<long> counts(st.n, st.k_active, 0);
  std::vector<long> totals(st.n, 0);
  for (int i = 0; i < st.n; ++i)
    for (int j = 0; j < st.n; ++j) {
      if (!data.is_train(i, j)) continue;
      ++counts(i, st.s(i, j));
      ++counts(j, st.r(i, j));
      ++totals[i];
      ++totals[j];
    }
  Grid<double> pi(st.n, st.k_active);
  for (int i = 0; i < st.n; ++i) {
    double A = 0.0;
    for (int k = 0; k < st.k_active; ++k) A += eta_product(meta, i, st.eta, k);
    for (int k = 0; k < st.k_active; ++k) {
      double a = eta_product(meta, i, st.eta, k);
      pi(i, k) = (static_cast<double>(counts(i, k)) + a) / (static_cast<double>(totals[i]) + A);
    }
  }
  return pi;
}

inline Sample snapshot(const SamplerState& st, const NetworkData& data,
                       const MetadataMatrix& meta) {
  Sample s;
  s.model = st.model;
  s.family = st.family;
  s.K = st.k_active;
  s.B = st.B;
  s.eta = st.eta;
  s.b_hyper = st.b_hyper;
  if (st.model == Model::InfLF) {
    s.z = st.z;
  } else if (st.model == Model::InfMM) {
    s.pi = st.pi;
    s.residual = st.residual;
  } else {
    s.pi = cinfmm_mean_pi(st, data, meta);
    s.residual.assign(st.n, 0.0);
  }
  return s;
}

// Redraws every Train edge from the current latents (posterior predictive
// replication; also the data step of the joint-consistency tests).
inline void resimulate_train_edges(SamplerState& st, NetworkData& data) {
  smp::refresh_train_cells(st, data);
  if (st.model == Model::InfLF) smp::refresh_feature_weights(st);
  for (auto [i, j] : st.ws.train_cells) {
    double b;
    if (st.model == Model::InfLF) {
      b = st.ws.w(i, j);
    } else {
      b = st.B(st.s(i, j), st.r(i, j));
    }
    data.edges(i, j) = draw_edge(st.rng, st.family, b);
  }
}

using TraceMetricFn =
    std::function<std::pair<double, double>(const Sample&, const NetworkData&)>;

struct ChainResult {
  std::vector<TraceRecord> trace;
  std::vector<Sample> samples;
  SamplerState final_state;
  SweepStats stats;
};

// Checkpoint writer hook; wired to the JSON serializer in checkpoint.hpp so
// this header stays light.
using CheckpointWriteFn = std::function<void(const SamplerState&, const std::string&)>;

inline ChainResult continue_chain(SamplerState st, const NetworkData& data,
                                  const MetadataMatrix& meta, const RunConfig& cfg,
                                  TraceMetricFn metrics = nullptr,
                                  CheckpointWriteFn checkpoint_writer = nullptr) {
  ChainResult out;
  for (long it = st.iteration; it < cfg.iterations; ++it) {
    sweep(st, data, meta, &out.stats, nullptr, cfg.random_scan, cfg.resample_hypers);
    st.iteration = it + 1;
    bool retained = st.iteration > cfg.burn_in &&
                    (st.iteration - cfg.burn_in - 1) % std::max<long>(1, cfg.thinning) == 0;
    if (retained) {
      Sample sample = snapshot(st, data, meta);
      TraceRecord rec;
      rec.iteration = st.iteration;
      rec.k_active = active_count(st, data);
      rec.log_joint = log_joint(st, data, meta);
      if (metrics) {
        auto [auc, ll] = metrics(sample, data);
        rec.heldout_auc = auc;
        rec.heldout_loglik = ll;
      }
      out.trace.push_back(rec);
      out.samples.push_back(std::move(sample));
    }
    if (cfg.checkpoint_every > 0 && checkpoint_writer && !cfg.checkpoint_path.empty() &&
        st.iteration % cfg.checkpoint_every == 0) {
      checkpoint_writer(st, cfg.checkpoint_path);
    }
  }
  out.final_state = std::move(st);
  return out;
}

inline ChainResult run_chain(Model model, Family family, const NetworkData& data,
                             const MetadataMatrix& meta, const RunConfig& cfg,
                             TraceMetricFn metrics = nullptr,
                             CheckpointWriteFn checkpoint_writer = nullptr) {
  SamplerState st = init_state(model, family, data, meta, cfg, cfg.seed);
  return continue_chain(std::move(st), data, meta, cfg, std::move(metrics),
                        std::move(checkpoint_writer));
}

}  // namespace infrel
