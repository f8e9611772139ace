#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace infrel {

// All randomness flows through one mt19937_64 engine with hand-rolled
// transforms (no std::*_distribution state), so serializing the engine
// captures the whole sampling stream. Checkpoint/resume and cross-platform
// reproducibility depend on this.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0x9e3779b97f4a7c15ULL) : state_(seed) {}

  // splitmix64 mix for deriving independent per-job seeds.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0x94d049bb133111ebULL * (b + 1);
    x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27; x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
  }

  std::uint64_t next_u64() { return mt_next(); }

  // Uniform on [0,1).
  double uniform() { return static_cast<double>(mt_next() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1); safe under log().
  double uniform_pos() { return (static_cast<double>(mt_next() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int n) {  // 0..n-1
    assert(n > 0);
    return static_cast<int>(mt_next() % static_cast<std::uint64_t>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  double exponential() { return -std::log(uniform_pos()); }

  // Box-Muller, second variate discarded so no state is carried.
  double normal() {
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Marsaglia-Tsang; shape<1 boosted via Gamma(shape+1) * U^{1/shape}.
  // Rate parameterization: mean = shape/rate.
  double gamma(double shape, double rate = 1.0) {
    assert(shape > 0.0 && rate > 0.0);
    if (shape < 1.0) {
      double u = uniform_pos();
      double g = gamma(shape + 1.0, 1.0) * std::pow(u, 1.0 / shape);
      return clamp_pos(g / rate);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      double v = t * t * t;
      double u = uniform_pos();
      double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return clamp_pos(d * v / rate);
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return clamp_pos(d * v / rate);
    }
  }

  // Strictly inside (0,1).
  double beta(double a, double b) {
    double x = gamma(a, 1.0);
    double y = gamma(b, 1.0);
    double r = x / (x + y);
    const double eps = 1e-12;
    if (r < eps) r = eps;
    if (r > 1.0 - eps) r = 1.0 - eps;
    return r;
  }

  // ln of a Gamma(shape, 1) draw, exact even when the draw itself would
  // underflow (tiny shapes push mass to e^{-1/shape} scales).
  double log_gamma_draw(double shape) {
    assert(shape > 0.0);
    if (shape >= 1.0) return std::log(gamma(shape, 1.0));
    double boosted = gamma(shape + 1.0, 1.0);
    return std::log(boosted) + std::log(uniform_pos()) / shape;
  }

  struct BetaDraw {
    double value;           // representable-range value in (0,1)
    double log_value;       // exact ln(draw)
    double log_complement;  // exact ln(1 - draw)
  };

  // Beta(a,b) with exact logs of both sides. The stored value saturates in
  // double near 0/1 long before the logs do; conjugate updates that consume
  // ln(psi) or ln(1-psi) must use the logs.
  BetaDraw beta_log(double a, double b) {
    double lga = log_gamma_draw(a);
    double lgb = log_gamma_draw(b);
    double d = lga - lgb;
    auto softplus = [](double x) { return x > 36.0 ? x : std::log1p(std::exp(x)); };
    BetaDraw out;
    out.log_value = -softplus(-d);
    out.log_complement = -softplus(d);
    double v = std::exp(out.log_value);
    if (v < 1e-300) v = 1e-300;
    if (v > 1.0 - 1e-16) v = 1.0 - 1e-16;
    out.value = v;
    return out;
  }

  long poisson(double lambda) {
    assert(lambda >= 0.0);
    if (lambda <= 0.0) return 0;
    if (lambda < 30.0) {
      // Knuth product-of-uniforms.
      double limit = std::exp(-lambda);
      double p = 1.0;
      long k = 0;
      do {
        ++k;
        p *= uniform_pos();
      } while (p > limit);
      return k - 1;
    }
    return poisson_ptrs(lambda);
  }

  // Index draw from unnormalized non-negative weights.
  int discrete(std::span<const double> w) {
    double total = 0.0;
    for (double x : w) total += x;
    assert(total > 0.0);
    double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < w.size(); ++k) {
      acc += w[k];
      if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(w.size()) - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }

  void dirichlet(std::span<const double> alpha, std::span<double> out) {
    assert(alpha.size() == out.size());
    double total = 0.0;
    for (std::size_t k = 0; k < alpha.size(); ++k) {
      out[k] = gamma(alpha[k], 1.0);
      total += out[k];
    }
    for (std::size_t k = 0; k < out.size(); ++k) out[k] /= total;
  }

  std::string state_string() const {
    std::ostringstream os;
    os << state_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> state_;
  }

  friend bool operator==(const Rng& a, const Rng& b) { return a.state_ == b.state_; }

 private:
  std::uint64_t mt_next() { return state_(); }

  static double clamp_pos(double x) {
    return x < 1e-300 ? 1e-300 : x;
  }

  // Hormann's PTRS transformed rejection, for large means.
  long poisson_ptrs(double lambda) {
    double log_lambda = std::log(lambda);
    double b = 0.931 + 2.53 * std::sqrt(lambda);
    double a = -0.059 + 0.02483 * b;
    double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    double v_r = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      double u = uniform() - 0.5;
      double v = uniform_pos();
      double us = 0.5 - std::fabs(u);
      double kf = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
      if (us >= 0.07 && v <= v_r) return static_cast<long>(kf);
      if (kf < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
          kf * log_lambda - lambda - std::lgamma(kf + 1.0)) {
        return static_cast<long>(kf);
      }
    }
  }

  std::mt19937_64 state_;
};

}  // namespace infrel
