#pragma once

#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "uopt/flops.hpp"
#include "uopt/linalg.hpp"
#include "uopt/risk.hpp"
#include "uopt/schedule.hpp"

namespace uopt {

// One multi-band MIMO downlink draw: per-band N x M channels plus the noise
// power at the receiver.
struct ChannelSet {
  std::vector<ComplexMatrix> h;  // B matrices, each N x M
  double sigma2 = 1.0;

  int bands() const { return static_cast<int>(h.size()); }
  Index n_rx() const { return h.empty() ? 0 : h[0].rows(); }
  Index m_tx() const { return h.empty() ? 0 : h[0].cols(); }

  void validate() const {
    if (h.empty()) throw ParameterError("channel set: no bands");
    for (const auto& m : h) {
      if (m.rows() != n_rx() || m.cols() != m_tx())
        throw ParameterError("channel set: band dimensions differ");
      if (!m.allFinite()) throw NumericError("channel set: non-finite entries");
    }
    if (!(sigma2 > 0.0)) throw ParameterError("channel set: sigma2 must be > 0");
  }

  // sqrt(1/(N sigma2)) H_b, the SNR-normalized channel used by the rate.
  ComplexMatrix scaled(int b) const {
    return std::sqrt(1.0 / (static_cast<double>(n_rx()) * sigma2)) * h[b];
  }
};

// Analog (frequency-flat, unit-modulus) and per-band digital precoders.
struct HybridPrecoder {
  ComplexMatrix w_a;                // M x L
  std::vector<ComplexMatrix> w_d;  // B matrices, each L x N
};

// Learnable per-iteration matrix step sizes.
struct ApgaParams {
  std::vector<RealMatrix> mu_a;               // K matrices, M x L
  std::vector<std::vector<RealMatrix>> mu_d;  // K x B matrices, L x N
};

// Iterations whose analog / per-band digital gradient is replaced by its
// cheap surrogate.
struct ApgaApprox {
  std::set<int> k_a;
  std::vector<std::set<int>> k_d;  // one set per band
};

// Mean spectral efficiency over bands:
// (1/B) sum_b logdet(I_N + (1/(N sigma2)) H_b Wa Wd_b Wd_b^H Wa^H H_b^H).
inline double sum_rate(const ChannelSet& ch, const HybridPrecoder& w) {
  ch.validate();
  if (static_cast<int>(w.w_d.size()) != ch.bands())
    throw ParameterError("sum_rate: digital precoder band count mismatch");
  const Index n = ch.n_rx();
  double acc = 0.0;
  for (int b = 0; b < ch.bands(); ++b) {
    const ComplexMatrix t = ch.scaled(b) * w.w_a * w.w_d[b];  // N x N
    const ComplexMatrix g = ComplexMatrix::Identity(n, n) + t * t.adjoint();
    acc += logdet_psd(g);
  }
  return acc / ch.bands();
}

namespace detail {

// G_b = I + Ht Wa Wd Wd^H Wa^H Ht^H for the scaled channel Ht.
inline ComplexMatrix rate_gram(const ComplexMatrix& ht, const ComplexMatrix& wa,
                               const ComplexMatrix& wd) {
  const ComplexMatrix t = ht * wa * wd;
  return ComplexMatrix::Identity(ht.rows(), ht.rows()) + t * t.adjoint();
}

// Entrywise real step matrix applied to a complex direction.
inline ComplexMatrix elementwise_step(const RealMatrix& mu, const ComplexMatrix& dir) {
  return mu.cast<Complex>().cwiseProduct(dir);
}

}  // namespace detail

// Rate derivative w.r.t. the unconjugated analog precoder:
// (1/B) sum_b Ht_b^T G_b^{-T} conj(Ht_b) conj(Wa) conj(Wd_b) Wd_b^T.
// The ascent direction is the entrywise conjugate of this matrix.
inline ComplexMatrix grad_wa(const ChannelSet& ch, const HybridPrecoder& w) {
  ch.validate();
  if (static_cast<int>(w.w_d.size()) != ch.bands())
    throw ParameterError("grad_wa: digital precoder band count mismatch");
  ComplexMatrix acc = ComplexMatrix::Zero(w.w_a.rows(), w.w_a.cols());
  for (int b = 0; b < ch.bands(); ++b) {
    const ComplexMatrix ht = ch.scaled(b);
    const ComplexMatrix ginv = small_spd_inverse(detail::rate_gram(ht, w.w_a, w.w_d[b]));
    acc += ht.transpose() * ginv.transpose() * ht.conjugate() * w.w_a.conjugate() *
           w.w_d[b].conjugate() * w.w_d[b].transpose();
  }
  return acc / static_cast<double>(ch.bands());
}

// Rate derivative w.r.t. the unconjugated digital precoder of one band:
// (1/B) Wa^T Ht_b^T G_b^{-T} conj(Ht_b) conj(Wa) conj(Wd_b).
inline ComplexMatrix grad_wd(const ChannelSet& ch, const HybridPrecoder& w, int band) {
  ch.validate();
  if (band < 0 || band >= ch.bands())
    throw ParameterError("grad_wd: band index out of range");
  if (static_cast<int>(w.w_d.size()) != ch.bands())
    throw ParameterError("grad_wd: digital precoder band count mismatch");
  const ComplexMatrix ht = ch.scaled(band);
  const ComplexMatrix ginv = small_spd_inverse(detail::rate_gram(ht, w.w_a, w.w_d[band]));
  return (w.w_a.transpose() * ht.transpose() * ginv.transpose() * ht.conjugate() *
          w.w_a.conjugate() * w.w_d[band].conjugate()) /
         static_cast<double>(ch.bands());
}

// Entrywise w / |w|; zeros map to 1.
inline ComplexMatrix proj_unit_modulus(const ComplexMatrix& w) {
  ComplexMatrix out(w.rows(), w.cols());
  for (Index j = 0; j < w.cols(); ++j)
    for (Index i = 0; i < w.rows(); ++i) {
      const double mag = std::abs(w(i, j));
      out(i, j) = mag > 0.0 ? w(i, j) / mag : Complex(1.0, 0.0);
    }
  return out;
}

// Joint transmit-power projection: when (1/B) sum_b ||Wa Wd_b||_F^2 exceeds N,
// every band's digital precoder is scaled by sqrt(N*B / sum_j ||Wa Wd_j||_F^2).
inline std::vector<ComplexMatrix> proj_power(const ComplexMatrix& w_a,
                                             const std::vector<ComplexMatrix>& w_d,
                                             Index n) {
  double power = 0.0;
  for (const auto& wd : w_d) power += (w_a * wd).squaredNorm();
  const double budget = static_cast<double>(n) * static_cast<double>(w_d.size());
  if (power <= budget) return w_d;
  const double scale = std::sqrt(budget / power);
  std::vector<ComplexMatrix> out = w_d;
  for (auto& wd : out) wd *= scale;
  return out;
}

// Phases of the top-L right singular vectors of the band-averaged scaled
// channel. When L exceeds the available (numerically nonzero) singular
// directions, the remaining columns are all-ones.
inline ComplexMatrix apga_init(const ChannelSet& ch, Index l) {
  ch.validate();
  if (l < 1) throw ParameterError("apga_init: need at least one RF chain");
  ComplexMatrix mean = ComplexMatrix::Zero(ch.n_rx(), ch.m_tx());
  for (int b = 0; b < ch.bands(); ++b) mean += ch.scaled(b);
  mean /= static_cast<double>(ch.bands());

  const Index m = ch.m_tx();
  ComplexMatrix w = ComplexMatrix::Ones(m, l);
  const Index avail = std::min(l, std::min(mean.rows(), mean.cols()));
  if (mean.cwiseAbs().maxCoeff() > 0.0) {
    const auto svd = truncated_svd(mean, avail);
    const double tol = 1e-10 * std::max(1.0, svd.sigma(0));
    for (Index j = 0; j < avail; ++j)
      if (svd.sigma(j) > tol) w.col(j) = svd.v.col(j);
  }
  return proj_unit_modulus(w);
}

struct ApgaRunResult {
  HybridPrecoder precoder;
  std::vector<double> rate_trace;  // rate after each iteration, k_total entries
};

namespace detail {

// Identity-padded L x N digital start, scaled jointly so the power constraint
// holds with equality.
inline std::vector<ComplexMatrix> digital_init(const ComplexMatrix& w_a, Index l,
                                               Index n, int bands) {
  ComplexMatrix d0 = ComplexMatrix::Zero(l, n);
  for (Index i = 0; i < std::min(l, n); ++i) d0(i, i) = 1.0;
  double power = static_cast<double>(bands) * (w_a * d0).squaredNorm();
  std::vector<ComplexMatrix> w_d(bands, d0);
  if (power > 0.0) {
    const double scale =
        std::sqrt(static_cast<double>(n) * static_cast<double>(bands) / power);
    for (auto& wd : w_d) wd *= scale;
  }
  return w_d;
}

}  // namespace detail

// Unfolded projected gradient ascent. Per iteration: analog step (all-ones
// surrogate direction on iterations in k_a), unit-modulus projection, then all
// per-band digital steps off the same iterate (iterations in k_d[b] reuse the
// band's most recent exactly computed gradient; iteration 0 falls back to
// exact), and one joint power projection.
inline ApgaRunResult apga_run(const ChannelSet& ch, const ApgaParams& params,
                              const ApgaApprox& approx, int k_total) {
  ch.validate();
  const Index n = ch.n_rx();
  const Index m = ch.m_tx();
  const int bands = ch.bands();
  if (k_total < 0) throw ParameterError("apga_run: negative depth");
  if (static_cast<int>(params.mu_a.size()) != k_total ||
      static_cast<int>(params.mu_d.size()) != k_total)
    throw ParameterError("apga_run: need one step-size bundle per iteration");
  if (static_cast<int>(approx.k_d.size()) != bands)
    throw ParameterError("apga_run: need one digital approx set per band");
  for (int k : approx.k_a)
    if (k < 0 || k >= k_total)
      throw ParameterError("apga_run: analog approx index out of range");
  for (const auto& s : approx.k_d)
    for (int k : s)
      if (k < 0 || k >= k_total)
        throw ParameterError("apga_run: digital approx index out of range");

  const Index l = params.mu_a.empty()
                      ? (k_total == 0 ? std::min<Index>(n, m) : 0)
                      : params.mu_a[0].cols();
  HybridPrecoder w;
  w.w_a = apga_init(ch, l < 1 ? std::min<Index>(n, m) : l);
  w.w_d = detail::digital_init(w.w_a, w.w_a.cols(), n, bands);

  std::vector<ComplexMatrix> grad_cache(bands);
  std::vector<bool> cache_valid(bands, false);

  ApgaRunResult out;
  out.rate_trace.reserve(k_total);
  for (int k = 0; k < k_total; ++k) {
    if (params.mu_a[k].rows() != m || params.mu_a[k].cols() != w.w_a.cols())
      throw ParameterError("apga_run: mu_a shape mismatch at iteration " +
                           std::to_string(k));
    if (static_cast<int>(params.mu_d[k].size()) != bands)
      throw ParameterError("apga_run: mu_d band count mismatch at iteration " +
                           std::to_string(k));

    ComplexMatrix analog_dir;
    if (approx.k_a.count(k)) {
      analog_dir = ComplexMatrix::Ones(m, w.w_a.cols());
    } else {
      analog_dir = grad_wa(ch, w).conjugate();
    }
    ComplexMatrix w_a_next = proj_unit_modulus(
        w.w_a + detail::elementwise_step(params.mu_a[k], analog_dir));

    HybridPrecoder stage{w_a_next, w.w_d};
    std::vector<ComplexMatrix> w_d_next(bands);
    for (int b = 0; b < bands; ++b) {
      if (params.mu_d[k][b].rows() != w.w_d[b].rows() ||
          params.mu_d[k][b].cols() != w.w_d[b].cols())
        throw ParameterError("apga_run: mu_d shape mismatch at iteration " +
                             std::to_string(k));
      ComplexMatrix g;
      if (approx.k_d[b].count(k) && cache_valid[b]) {
        g = grad_cache[b];
      } else {
        g = grad_wd(ch, stage, b);
        grad_cache[b] = g;
        cache_valid[b] = true;
      }
      w_d_next[b] =
          w.w_d[b] + detail::elementwise_step(params.mu_d[k][b], g.conjugate());
    }

    w.w_a = std::move(w_a_next);
    w.w_d = proj_power(w.w_a, w_d_next, n);
    for (const auto& wd : w.w_d)
      if (!wd.allFinite())
        throw NumericError("apga_run: non-finite iterate at iteration " +
                           std::to_string(k));
    out.rate_trace.push_back(sum_rate(ch, w));
  }
  out.precoder = std::move(w);
  return out;
}

inline FlopReport apga_flops(int b_bands, int n, int l, int m, int k_total,
                             const ApgaApprox& approx) {
  return beamforming_flops(b_bands, n, l, m, k_total, approx.k_a, approx.k_d);
}

// ---- training adapter ----------------------------------------------------

// Schedule labels: "mu_a" (M x L) and "mu_d_<b>" (L x N) per iteration.
inline HyperSchedule apga_schedule(const ApgaParams& p) {
  HyperSchedule s;
  s.per_iteration.resize(p.mu_a.size());
  for (std::size_t k = 0; k < p.mu_a.size(); ++k) {
    s.per_iteration[k].values["mu_a"] = p.mu_a[k];
    for (std::size_t b = 0; b < p.mu_d[k].size(); ++b)
      s.per_iteration[k].values["mu_d_" + std::to_string(b)] = p.mu_d[k][b];
  }
  return s;
}

inline ApgaParams apga_params_from_schedule(const HyperSchedule& s, int bands) {
  ApgaParams p;
  p.mu_a.resize(s.k_total());
  p.mu_d.resize(s.k_total());
  for (int k = 0; k < s.k_total(); ++k) {
    p.mu_a[k] = std::get<RealMatrix>(s.at(k, "mu_a"));
    p.mu_d[k].resize(bands);
    for (int b = 0; b < bands; ++b)
      p.mu_d[k][b] = std::get<RealMatrix>(s.at(k, "mu_d_" + std::to_string(b)));
  }
  return p;
}

inline ApgaParams apga_broadcast_params(int k_total, int bands, Index n, Index l,
                                        Index m, double mu_a_value,
                                        double mu_d_value) {
  ApgaParams p;
  p.mu_a.assign(k_total, RealMatrix::Constant(m, l, mu_a_value));
  p.mu_d.assign(k_total,
                std::vector<RealMatrix>(bands, RealMatrix::Constant(l, n, mu_d_value)));
  return p;
}

// Negated rate as the unsupervised objective; trained by finite differences.
struct ApgaSolver {
  using Context = ChannelSet;
  using Decision = HybridPrecoder;
  using Label = HybridPrecoder;  // unused; rate training is unsupervised

  ApgaApprox approx;

  Decision forward(const HyperSchedule& params, const Context& ch) const {
    const ApgaParams p = apga_params_from_schedule(params, ch.bands());
    return apga_run(ch, p, approx, params.k_total()).precoder;
  }

  double objective(const Decision& w, const Context& ch) const {
    return -sum_rate(ch, w);
  }
};

}  // namespace uopt
