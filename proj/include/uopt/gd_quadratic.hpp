#pragma once

#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "uopt/common.hpp"
#include "uopt/rng.hpp"

namespace uopt {

// Strongly convex quadratic L(s) = 0.5 s^T Q s - b^T s with known curvature
// bounds mu <= lambda(Q) <= l_smooth.
struct QuadraticProblem {
  RealMatrix q;
  RealVector b;
  double mu = 0.0;
  double l_smooth = 0.0;

  void validate() const {
    if (q.rows() != q.cols()) throw ParameterError("quadratic: Q not square");
    if (b.size() != q.rows()) throw ParameterError("quadratic: b size mismatch");
    if ((q - q.transpose()).cwiseAbs().maxCoeff() >
        1e-10 * std::max(1.0, q.cwiseAbs().maxCoeff()))
      throw ParameterError("quadratic: Q not symmetric");
    if (!(mu > 0.0) || !(l_smooth >= mu))
      throw ParameterError("quadratic: need 0 < mu <= L");
  }

  double objective(const RealVector& s) const {
    return 0.5 * s.dot(q * s) - b.dot(s);
  }

  RealVector gradient(const RealVector& s) const { return q * s - b; }

  RealVector minimizer() const { return q.llt().solve(b); }
};

// Per-iteration additive gradient errors e^(k) and the norm budgets delta_k
// they are certified against: ||eta_k (.) e^(k)||_2 <= delta_k.
struct ApproxInjection {
  std::map<int, RealVector> errors;
  std::map<int, double> deltas;
};

// One element-wise descent step s - eta (.) grad.
inline RealVector gd_step_elementwise(const RealVector& s, const RealVector& eta,
                                      const RealVector& grad) {
  if (eta.size() != s.size() || grad.size() != s.size())
    throw ParameterError("gd_step_elementwise: size mismatch");
  return s - eta.cwiseProduct(grad);
}

// Runs k_total element-wise steps; iterations listed in the injection have
// their gradient replaced by the surrogate grad + e^(k). Returns the iterate
// trajectory s^(0..K).
inline std::vector<RealVector> gd_run_selective(const QuadraticProblem& p,
                                                const RealVector& s0,
                                                const std::vector<RealVector>& etas,
                                                const ApproxInjection& approx,
                                                int k_total) {
  p.validate();
  if (static_cast<int>(etas.size()) != k_total)
    throw ParameterError("gd_run_selective: need one eta per iteration");
  for (const auto& [k, e] : approx.errors)
    if (k < 0 || k >= k_total)
      throw ParameterError("gd_run_selective: injection index out of range");
  std::vector<RealVector> traj;
  traj.reserve(k_total + 1);
  traj.push_back(s0);
  RealVector s = s0;
  for (int k = 0; k < k_total; ++k) {
    RealVector g = p.gradient(s);
    auto it = approx.errors.find(k);
    if (it != approx.errors.end()) g += it->second;
    s = gd_step_elementwise(s, etas[k], g);
    if (!s.allFinite())
      throw NumericError("gd_run_selective: non-finite iterate at iteration " +
                         std::to_string(k));
    traj.push_back(s);
  }
  return traj;
}

// Error bound (1-gamma*mu)^K ||s0-s*||^2 + sum_{k in approx} (1-gamma*mu)^{K-k-1} delta_k^2.
inline double prop2_bound(const QuadraticProblem& p, const RealVector& s0,
                          double gamma, const std::map<int, double>& deltas,
                          int k_total) {
  p.validate();
  if (!(gamma > 0.0) || !(gamma < 1.0 / p.l_smooth))
    throw ParameterError("prop2_bound: need 0 < gamma < 1/L");
  if (k_total < 0) throw ParameterError("prop2_bound: negative depth");
  const double rho = 1.0 - gamma * p.mu;
  const RealVector sstar = p.minimizer();
  double bound = std::pow(rho, k_total) * (s0 - sstar).squaredNorm();
  for (const auto& [k, d] : deltas) {
    if (k < 0 || k >= k_total)
      throw ParameterError("prop2_bound: delta index out of range");
    bound += std::pow(rho, k_total - k - 1) * d * d;
  }
  return bound;
}

// True when one element-wise step does not increase the objective (slack for
// roundoff).
inline bool descent_check(const QuadraticProblem& p, const RealVector& s,
                          const RealVector& eta) {
  p.validate();
  const RealVector next = gd_step_elementwise(s, eta, p.gradient(s));
  return p.objective(next) <= p.objective(s) + 1e-12;
}

// ---- Randomized property suites ----------------------------------------

struct PropSuiteConfig {
  int trials = 500;
  std::uint64_t seed = 2024;
  std::vector<int> dims = {4, 16, 64};
  double cond_min = 2.0;
  double cond_max = 100.0;
  // gamma = gamma_scale * (1/L); must stay below 1.
  double gamma_scale_min = 0.2;
  double gamma_scale_max = 0.5;
  int k_min = 5;
  int k_max = 20;
  // eta entries drawn from [eta_floor * gamma, gamma]. Entries near zero can
  // freeze a coordinate and defeat the (1-gamma*mu)^K contraction, so the
  // suite keeps them bounded away from it while staying element-wise varied.
  double eta_floor = 0.8;
  // injected error norms: ||eta (.) e|| = frac * delta with frac in this range
  double inject_frac_min = 0.2;
  double inject_frac_max = 0.6;
  double delta_rel_max = 0.2;  // delta_k <= this fraction of ||s0 - s*||
};

struct PropSuiteResult {
  int trials = 0;
  int violations = 0;
  double max_ratio = 0.0;  // worst measured/bound (prop 2) or max increase (prop 1)
};

namespace detail {

inline QuadraticProblem random_quadratic(int d, double cond, std::mt19937_64& rng) {
  NormalSampler normal(rng);
  RealMatrix a(d, d);
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < d; ++i) a(i, j) = normal();
  Eigen::HouseholderQR<RealMatrix> qr(a);
  RealMatrix o = RealMatrix::Identity(d, d);
  o.applyOnTheLeft(qr.householderQ());
  const double mu = 1.0;
  const double l = cond;
  RealVector lam(d);
  for (int i = 0; i < d; ++i)
    lam(i) = (d == 1) ? l : mu + (l - mu) * i / static_cast<double>(d - 1);
  QuadraticProblem p;
  p.q = o * lam.asDiagonal() * o.transpose();
  p.q = 0.5 * (p.q + p.q.transpose());
  p.b = RealVector(d);
  for (int i = 0; i < d; ++i) p.b(i) = normal();
  p.mu = mu;
  p.l_smooth = l;
  return p;
}

inline RealVector random_unit(int d, NormalSampler& normal) {
  RealVector v(d);
  for (int i = 0; i < d; ++i) v(i) = normal();
  const double n = v.norm();
  return n > 0 ? RealVector(v / n) : RealVector::Unit(d, 0);
}

}  // namespace detail

// Single-step descent under element-wise steps in (0, 1/L].
inline PropSuiteResult prop1_suite(const PropSuiteConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  NormalSampler normal(rng);
  PropSuiteResult res;
  res.trials = cfg.trials;
  res.max_ratio = -1e300;
  for (int t = 0; t < cfg.trials; ++t) {
    const int d = cfg.dims[rng() % cfg.dims.size()];
    const double cond =
        cfg.cond_min + (cfg.cond_max - cfg.cond_min) * uniform_unit(rng);
    const QuadraticProblem p = detail::random_quadratic(d, cond, rng);
    RealVector s(d);
    for (int i = 0; i < d; ++i) s(i) = 3.0 * normal();
    RealVector eta(d);
    for (int i = 0; i < d; ++i) eta(i) = uniform_unit(rng) / p.l_smooth;
    const RealVector next = gd_step_elementwise(s, eta, p.gradient(s));
    const double increase = p.objective(next) - p.objective(s);
    res.max_ratio = std::max(res.max_ratio, increase);
    if (!(increase <= 1e-12)) ++res.violations;
  }
  return res;
}

// Final-error bound under budgeted gradient surrogates. zero_delta switches to
// the exact-gradient regime where the plain contraction must hold.
inline PropSuiteResult prop2_suite(const PropSuiteConfig& cfg, bool zero_delta = false) {
  std::mt19937_64 rng(cfg.seed + (zero_delta ? 1 : 0));
  NormalSampler normal(rng);
  PropSuiteResult res;
  res.trials = cfg.trials;
  res.max_ratio = 0.0;
  for (int t = 0; t < cfg.trials; ++t) {
    const int d = cfg.dims[rng() % cfg.dims.size()];
    const double cond =
        cfg.cond_min + (cfg.cond_max - cfg.cond_min) * uniform_unit(rng);
    const QuadraticProblem p = detail::random_quadratic(d, cond, rng);
    const double gamma_scale =
        cfg.gamma_scale_min +
        (cfg.gamma_scale_max - cfg.gamma_scale_min) * uniform_unit(rng);
    const double gamma = gamma_scale / p.l_smooth;
    const int k_total =
        cfg.k_min + static_cast<int>(rng() % (cfg.k_max - cfg.k_min + 1));
    const RealVector sstar = p.minimizer();
    RealVector s0(d);
    for (int i = 0; i < d; ++i) s0(i) = sstar(i) + 2.0 * normal();
    const double dist0 = (s0 - sstar).norm();

    std::vector<RealVector> etas(k_total);
    for (int k = 0; k < k_total; ++k) {
      etas[k] = RealVector(d);
      for (int i = 0; i < d; ++i)
        etas[k](i) = gamma * (cfg.eta_floor + (1.0 - cfg.eta_floor) * uniform_unit(rng));
    }

    ApproxInjection inj;
    if (!zero_delta) {
      for (int k = 0; k < k_total; ++k) {
        if (uniform_unit(rng) < 0.5) continue;
        const double delta = cfg.delta_rel_max * uniform_unit(rng) * dist0;
        const double frac =
            cfg.inject_frac_min +
            (cfg.inject_frac_max - cfg.inject_frac_min) * uniform_unit(rng);
        RealVector dir = detail::random_unit(d, normal);
        const double weighted = etas[k].cwiseProduct(dir).norm();
        if (weighted == 0.0 || delta == 0.0) continue;
        inj.errors[k] = dir * (frac * delta / weighted);
        inj.deltas[k] = delta;
      }
    }

    const auto traj = gd_run_selective(p, s0, etas, inj, k_total);
    const double measured = (traj.back() - sstar).squaredNorm();
    const double bound = prop2_bound(p, s0, gamma, inj.deltas, k_total);
    const double ratio = bound > 0 ? measured / bound : (measured > 0 ? 1e300 : 0.0);
    res.max_ratio = std::max(res.max_ratio, ratio);
    if (measured > bound) ++res.violations;
  }
  return res;
}

}  // namespace uopt
