#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <span>
#include <thread>
#include <vector>

#include "infrel/netdata.hpp"
#include "infrel/samplers.hpp"

namespace infrel {

// Per-cell scores from retained posterior draws. `scores` is a
// classification score in [0,1] (binary: Pr(e=1); count: Pr(e>0); unit:
// predictive mean of e); `means` is the predictive mean of the edge value.
struct PredictionMatrix {
  Grid<double> scores;
  Grid<double> means;
};

namespace evx {

// Mixture weights of one cell under a mixed-membership sample: active pairs
// pi_ik pi_jl with B_kl, plus the leftover mass paired with the prior
// marginal so the per-sample predictive normalizes.
struct CellMix {
  double active_p1 = 0.0;   // binary: sum pi pi B
  double active_mean = 0.0; // count: sum pi pi B; unit: sum pi pi B/(B+1)
  double active_pos = 0.0;  // count: sum pi pi (1 - exp(-B))
  double rest = 0.0;        // residual-involving weight
};

inline CellMix cell_mix(const Sample& s, int i, int j) {
  CellMix m;
  double wi = 0.0, wj = 0.0;
  for (int k = 0; k < s.K; ++k) wi += s.pi(i, k);
  for (int l = 0; l < s.K; ++l) wj += s.pi(j, l);
  for (int k = 0; k < s.K; ++k) {
    double pik = s.pi(i, k);
    if (pik == 0.0) continue;
    for (int l = 0; l < s.K; ++l) {
      double w = pik * s.pi(j, l);
      if (w == 0.0) continue;
      double b = s.B(k, l);
      switch (s.family) {
        case Family::BernoulliBeta:
          m.active_p1 += w * b;
          break;
        case Family::PoissonGamma:
          m.active_mean += w * b;
          m.active_pos += w * (1.0 - std::exp(-b));
          break;
        default:
          m.active_mean += w * (b / (b + 1.0));
          break;
      }
    }
  }
  m.rest = 1.0 - wi * wj;
  if (m.rest < 0.0) m.rest = 0.0;
  return m;
}

inline double inflf_weight(const Sample& s, int i, int j) {
  double w = 0.0;
  for (int k = 0; k < s.K; ++k) {
    if (!s.z(i, k)) continue;
    for (int l = 0; l < s.K; ++l)
      if (s.z(j, l)) w += s.B(k, l);
  }
  return w;
}

}  // namespace evx

// Classification score of one cell under one sample.
inline double sample_score(const Sample& s, int i, int j) {
  if (s.model == Model::InfLF) {
    double w = evx::inflf_weight(s, i, j);
    if (s.family == Family::SigmoidGaussian) return sigmoid(w);
    return 1.0 - std::exp(-w);  // count: Pr(e > 0)
  }
  auto m = evx::cell_mix(s, i, j);
  switch (s.family) {
    case Family::BernoulliBeta:
      return m.active_p1 + m.rest * (s.b_hyper.a_B / (s.b_hyper.a_B + s.b_hyper.b_B));
    case Family::PoissonGamma:
      return m.active_pos + m.rest * (1.0 - marginal_count(0, s.b_hyper));
    default: {
      // Unit family: predictive mean; residual part scored at the prior
      // plug-in mean (alpha/beta)/((alpha/beta)+1).
      double pm = s.b_hyper.alpha_B / s.b_hyper.beta_B;
      return m.active_mean + m.rest * (pm / (pm + 1.0));
    }
  }
}

// Predictive mean of the edge value under one sample.
inline double sample_mean(const Sample& s, int i, int j) {
  if (s.model == Model::InfLF) {
    double w = evx::inflf_weight(s, i, j);
    return s.family == Family::SigmoidGaussian ? sigmoid(w) : w;
  }
  auto m = evx::cell_mix(s, i, j);
  switch (s.family) {
    case Family::BernoulliBeta:
      return m.active_p1 + m.rest * (s.b_hyper.a_B / (s.b_hyper.a_B + s.b_hyper.b_B));
    case Family::PoissonGamma:
      return m.active_mean + m.rest * (s.b_hyper.alpha_B / s.b_hyper.beta_B);
    default: {
      double pm = s.b_hyper.alpha_B / s.b_hyper.beta_B;
      return m.active_mean + m.rest * (pm / (pm + 1.0));
    }
  }
}

// Log predictive density/pmf of one observed cell under one sample.
inline double sample_cell_loglik(const Sample& s, const NetworkData& data, int i, int j) {
  double e = data.edges(i, j);
  if (s.model == Model::InfLF) {
    return loglik_edge(e, evx::inflf_weight(s, i, j), s.family);
  }
  double acc = 0.0;
  for (int k = 0; k < s.K; ++k) {
    double pik = s.pi(i, k);
    if (pik == 0.0) continue;
    for (int l = 0; l < s.K; ++l) {
      double w = pik * s.pi(j, l);
      if (w == 0.0) continue;
      acc += w * std::exp(loglik_edge(e, s.B(k, l), s.family));
    }
  }
  double wi = 0.0, wj = 0.0;
  for (int k = 0; k < s.K; ++k) wi += s.pi(i, k);
  for (int l = 0; l < s.K; ++l) wj += s.pi(j, l);
  double rest = std::max(0.0, 1.0 - wi * wj);
  acc += rest * marginal_edge(e, s.family, s.b_hyper);
  return std::log(std::max(acc, 1e-300));
}

// Posterior-averaged scores over the retained samples.
inline PredictionMatrix predictive_scores(std::span<const Sample> samples,
                                          const NetworkData& data) {
  if (samples.empty()) throw std::invalid_argument("no retained samples");
  int n = data.n;
  PredictionMatrix out{Grid<double>(n, n, 0.0), Grid<double>(n, n, 0.0)};
  for (const auto& s : samples) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        out.scores(i, j) += sample_score(s, i, j);
        out.means(i, j) += sample_mean(s, i, j);
      }
  }
  double inv = 1.0 / static_cast<double>(samples.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      out.scores(i, j) *= inv;
      out.means(i, j) *= inv;
    }
  return out;
}

// Fraction of cells in the given mask state where thresholded score and
// binarized truth disagree.
inline double zero_one_error(const Grid<double>& scores, const NetworkData& data,
                             MaskState state) {
  long cells = 0, wrong = 0;
  for (int i = 0; i < data.n; ++i)
    for (int j = 0; j < data.n; ++j) {
      if (data.state(i, j) != state) continue;
      ++cells;
      bool pred = scores(i, j) > 0.5;
      bool truth = data.edges(i, j) > 0.0;
      if (pred != truth) ++wrong;
    }
  if (cells == 0) throw std::invalid_argument("no cells in the requested mask state");
  return static_cast<double>(wrong) / static_cast<double>(cells);
}

// Mann-Whitney AUC with ties counted 1/2, computed from average ranks.
inline double auc_from_pairs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("length mismatch");
  std::vector<int> order(scores.size());
  for (std::size_t t = 0; t < order.size(); ++t) order[t] = static_cast<int>(t);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] < scores[b]; });
  long pos = 0, neg = 0;
  for (int l : labels) (l ? pos : neg)++;
  if (pos == 0 || neg == 0)
    throw std::invalid_argument("AUC needs both positive and negative cells");
  double rank_sum_pos = 0.0;
  std::size_t t = 0;
  while (t < order.size()) {
    std::size_t u = t;
    while (u + 1 < order.size() && scores[order[u + 1]] == scores[order[t]]) ++u;
    double avg_rank = 0.5 * (static_cast<double>(t + 1) + static_cast<double>(u + 1));
    for (std::size_t v = t; v <= u; ++v)
      if (labels[order[v]]) rank_sum_pos += avg_rank;
    t = u + 1;
  }
  return (rank_sum_pos - 0.5 * static_cast<double>(pos) * (pos + 1)) /
         (static_cast<double>(pos) * static_cast<double>(neg));
}

inline double auc(const Grid<double>& scores, const NetworkData& data, MaskState state) {
  std::vector<double> sc;
  std::vector<int> lab;
  for (int i = 0; i < data.n; ++i)
    for (int j = 0; j < data.n; ++j) {
      if (data.state(i, j) != state) continue;
      sc.push_back(scores(i, j));
      lab.push_back(data.edges(i, j) > 0.0 ? 1 : 0);
    }
  if (sc.empty()) throw std::invalid_argument("no cells in the requested mask state");
  return auc_from_pairs(sc, lab);
}

// Posterior predictive log likelihood of the Test cells: average the
// per-sample likelihood first, take the log after.
inline double test_loglik(std::span<const Sample> samples, const NetworkData& data) {
  if (samples.empty()) throw std::invalid_argument("no retained samples");
  long cells = 0;
  double total = 0.0;
  std::vector<double> ll(samples.size());
  for (int i = 0; i < data.n; ++i)
    for (int j = 0; j < data.n; ++j) {
      if (!data.is_test(i, j)) continue;
      ++cells;
      for (std::size_t sdx = 0; sdx < samples.size(); ++sdx)
        ll[sdx] = sample_cell_loglik(samples[sdx], data, i, j);
      double mx = *std::max_element(ll.begin(), ll.end());
      double acc = 0.0;
      for (double v : ll) acc += std::exp(v - mx);
      total += mx + std::log(acc / static_cast<double>(samples.size()));
    }
  if (cells == 0) throw std::invalid_argument("no Test cells");
  return total;
}

// Per-iteration held-out metrics recorded in the trace (single current
// sample, not the posterior average).
inline TraceMetricFn heldout_trace_metrics() {
  return [](const Sample& s, const NetworkData& data) {
    double a = std::numeric_limits<double>::quiet_NaN();
    double ll = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> sc;
    std::vector<int> lab;
    double acc = 0.0;
    long cells = 0;
    for (int i = 0; i < data.n; ++i)
      for (int j = 0; j < data.n; ++j) {
        if (!data.is_test(i, j)) continue;
        sc.push_back(sample_score(s, i, j));
        lab.push_back(data.edges(i, j) > 0.0 ? 1 : 0);
        acc += sample_cell_loglik(s, data, i, j);
        ++cells;
      }
    if (cells > 0) {
      ll = acc;
      bool has_pos = std::find(lab.begin(), lab.end(), 1) != lab.end();
      bool has_neg = std::find(lab.begin(), lab.end(), 0) != lab.end();
      if (has_pos && has_neg) a = auc_from_pairs(sc, lab);
    }
    return std::make_pair(a, ll);
  };
}

// ---------------------------------------------------------------------------
// Cross-validation driver.

struct MetricRow {
  int fold = 0;
  int chain = 0;
  double train_error = 0.0;
  double test_error = 0.0;
  double test_loglik = 0.0;
  double auc = 0.0;
};

struct Aggregate {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
};

struct MetricsReport {
  std::vector<MetricRow> rows;
  Aggregate train_error, test_error, test_loglik, auc;
};

namespace evx {

inline Aggregate aggregate(std::span<const MetricRow> rows, double MetricRow::* field) {
  std::vector<double> vals;
  for (const auto& r : rows)
    if (!std::isnan(r.*field)) vals.push_back(r.*field);
  Aggregate a;
  if (vals.empty()) return a;
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= static_cast<double>(vals.size());
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  a.mean = mean;
  a.sd = vals.size() > 1 ? std::sqrt(var / static_cast<double>(vals.size() - 1)) : 0.0;
  return a;
}

}  // namespace evx

inline void finalize_report(MetricsReport& rep) {
  rep.train_error = evx::aggregate(rep.rows, &MetricRow::train_error);
  rep.test_error = evx::aggregate(rep.rows, &MetricRow::test_error);
  rep.test_loglik = evx::aggregate(rep.rows, &MetricRow::test_loglik);
  rep.auc = evx::aggregate(rep.rows, &MetricRow::auc);
}

inline MetricRow compute_metrics(std::span<const Sample> samples, const NetworkData& data) {
  MetricRow row;
  auto pred = predictive_scores(samples, data);
  row.train_error = zero_one_error(pred.scores, data, MaskState::Train);
  double nan = std::numeric_limits<double>::quiet_NaN();
  row.test_error = nan;
  row.test_loglik = nan;
  row.auc = nan;
  if (data.count_state(MaskState::Test) > 0) {
    row.test_error = zero_one_error(pred.scores, data, MaskState::Test);
    row.test_loglik = test_loglik(samples, data);
    try {
      row.auc = auc(pred.scores, data, MaskState::Test);
    } catch (const std::invalid_argument&) {
      // single-class holdout (e.g. unit data): AUC undefined
    }
  }
  return row;
}

// Ten-fold protocol: each fold's cells become Test, `cfg.chains` independent
// chains run per fold, one metric row per (fold, chain). Jobs are isolated,
// deterministically seeded from the master seed, and may run on `jobs`
// threads with identical results.
inline MetricsReport crossvalidate(Model model, Family family, const NetworkData& data,
                                   const MetadataMatrix& meta, const RunConfig& cfg,
                                   int jobs = 1) {
  HoldoutPlan plan = make_cv_folds(data, cfg.seed);
  int total = HoldoutPlan::kFolds * cfg.chains;
  MetricsReport rep;
  rep.rows.assign(total, {});
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      int idx = next.fetch_add(1);
      if (idx >= total) return;
      int fold = idx / cfg.chains;
      int chain = idx % cfg.chains;
      NetworkData fold_data = apply_fold(data, plan, fold);
      RunConfig job_cfg = cfg;
      job_cfg.seed = Rng::mix(cfg.seed, static_cast<std::uint64_t>(fold) + 1,
                              static_cast<std::uint64_t>(chain) + 1);
      auto res = run_chain(model, family, fold_data, meta, job_cfg);
      MetricRow row = compute_metrics(res.samples, fold_data);
      row.fold = fold;
      row.chain = chain;
      rep.rows[idx] = row;
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  finalize_report(rep);
  return rep;
}

}  // namespace infrel
