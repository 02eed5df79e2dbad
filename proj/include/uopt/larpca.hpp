#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "uopt/flops.hpp"
#include "uopt/linalg.hpp"
#include "uopt/risk.hpp"
#include "uopt/schedule.hpp"

namespace uopt {

// Observed matrix with optional planted decomposition X = V* + Y*.
struct RpcaInstance {
  RealMatrix x;
  std::optional<RealMatrix> v_star;
  std::optional<RealMatrix> y_star;
  int r = 1;
  double alpha = 0.0;

  void validate() const {
    if (x.size() == 0) throw ParameterError("rpca instance: empty matrix");
    if (!x.allFinite()) throw NumericError("rpca instance: non-finite entries");
    if (r < 1 || r > std::min(x.rows(), x.cols()))
      throw ParameterError("rpca instance: rank out of range");
    if (v_star && y_star) {
      if (v_star->rows() != x.rows() || v_star->cols() != x.cols() ||
          y_star->rows() != x.rows() || y_star->cols() != x.cols())
        throw ParameterError("rpca instance: ground-truth shape mismatch");
      if (((*v_star + *y_star) - x).cwiseAbs().maxCoeff() >
          1e-12 * std::max(1.0, x.cwiseAbs().maxCoeff()))
        throw ParameterError("rpca instance: x != v_star + y_star");
    }
  }
};

struct RpcaFactors {
  RealMatrix l;    // n1 x r
  RealMatrix r_f;  // n2 x r
  RealMatrix y;    // n1 x n2
};

struct LarpcaParams {
  std::vector<RealMatrix> eta_l;  // K matrices, n1 x r
  std::vector<RealMatrix> eta_r;  // K matrices, n2 x r
  std::vector<double> zeta;       // K+1 thresholds; zeta[0] seeds the init

  void validate(int k_total) const {
    if (static_cast<int>(eta_l.size()) != k_total ||
        static_cast<int>(eta_r.size()) != k_total ||
        static_cast<int>(zeta.size()) != k_total + 1)
      throw ParameterError("larpca params: list lengths must be K, K, K+1");
    for (double z : zeta)
      if (!(z >= 0.0)) throw ParameterError("larpca params: thresholds must be >= 0");
  }
};

struct LarpcaApprox {
  std::set<int> k_l;
  std::set<int> k_r;

  void validate(int k_total) const {
    for (const auto* s : {&k_l, &k_r})
      for (int k : *s)
        if (k < 0 || k >= k_total)
          throw ParameterError("larpca approx: iteration index out of range");
  }
};

inline double rpca_objective(const RpcaFactors& f, const RealMatrix& x) {
  return 0.5 * (f.l * f.r_f.transpose() + f.y - x).squaredNorm();
}

inline RealMatrix sparse_update(const RealMatrix& x, const RealMatrix& l,
                                const RealMatrix& r_f, double zeta) {
  return soft_threshold(x - l * r_f.transpose(), zeta);
}

inline RealMatrix grad_l(const RpcaFactors& f, const RealMatrix& x) {
  return (f.l * f.r_f.transpose() + f.y - x) * f.r_f;
}

inline RealMatrix grad_r(const RpcaFactors& f, const RealMatrix& x) {
  return (f.l * f.r_f.transpose() + f.y - x).transpose() * f.l;
}

// Scaled gradient step on L with an element-wise step matrix.
inline RealMatrix factor_update_l(const RpcaFactors& f, const RealMatrix& x,
                                  const RealMatrix& eta_l) {
  if (eta_l.rows() != f.l.rows() || eta_l.cols() != f.l.cols())
    throw ParameterError("factor_update_l: step matrix shape mismatch");
  const RealMatrix g = grad_l(f, x);
  const RealMatrix w = small_spd_inverse(RealMatrix(f.r_f.transpose() * f.r_f));
  return f.l - eta_l.cwiseProduct(g * w);
}

// Symmetric step on R; callers pass factors whose l is already updated, so the
// fresh iterate appears in both the gradient and the scaling.
inline RealMatrix factor_update_r(const RpcaFactors& f, const RealMatrix& x,
                                  const RealMatrix& eta_r) {
  if (eta_r.rows() != f.r_f.rows() || eta_r.cols() != f.r_f.cols())
    throw ParameterError("factor_update_r: step matrix shape mismatch");
  const RealMatrix g = grad_r(f, x);
  const RealMatrix w = small_spd_inverse(RealMatrix(f.l.transpose() * f.l));
  return f.r_f - eta_r.cwiseProduct(g * w);
}

// Threshold X, then factor the remainder with a rank-r truncated SVD.
inline RpcaFactors larpca_init(const RealMatrix& x, double zeta0, int r) {
  if (!(zeta0 >= 0.0)) throw ParameterError("larpca_init: zeta0 must be >= 0");
  if (r < 1 || r > std::min(x.rows(), x.cols()))
    throw ParameterError("larpca_init: rank out of range");
  RpcaFactors f;
  f.y = soft_threshold(x, zeta0);
  const auto svd = truncated_svd(RealMatrix(x - f.y), r);
  const RealVector root = svd.sigma.cwiseMax(0.0).cwiseSqrt();
  f.l = svd.u * root.asDiagonal();
  f.r_f = svd.v * root.asDiagonal();
  return f;
}

struct LarpcaTraceRow {
  int k = 0;
  double objective = 0.0;
  double recovery_error = 0.0;
  double rel_err_vs_truth = std::numeric_limits<double>::quiet_NaN();
};

struct LarpcaRunResult {
  RealMatrix v_hat;
  RealMatrix y_hat;
  RpcaFactors factors;
  std::vector<LarpcaTraceRow> trace;
};

inline double unsup_rpca_loss(const RealMatrix& v_hat, const RealMatrix& y_hat,
                              const RealMatrix& x, double lambda_s) {
  if (!(lambda_s >= 0.0)) throw ParameterError("unsup_rpca_loss: lambda_s must be >= 0");
  const double xn = x.norm();
  if (!(xn > 0.0)) throw ParameterError("unsup_rpca_loss: zero-norm observation");
  return (x - v_hat).norm() / xn +
         lambda_s * y_hat.cwiseAbs().sum() /
             (static_cast<double>(x.rows()) * static_cast<double>(x.cols()));
}

inline double recovery_error(const RealMatrix& v_hat, const RealMatrix& x,
                             Index n1, Index n2) {
  const double xn = x.norm();
  if (!(xn > 0.0)) throw ParameterError("recovery_error: zero-norm observation");
  return (x - v_hat).squaredNorm() /
         (static_cast<double>(n1) * static_cast<double>(n2) * xn);
}

inline double rel_err_vs_truth(const RealMatrix& v_hat, const RealMatrix& v_star) {
  const double vn = v_star.norm();
  if (!(vn > 0.0)) throw ParameterError("rel_err_vs_truth: zero-norm ground truth");
  return (v_hat - v_star).norm() / vn;
}

namespace detail {

// Intermediates of one taken factor step, kept for the reverse sweep.
struct FactorStepTape {
  bool taken = false;
  RealMatrix res;   // L R^T + Y - X at the point of the step
  RealMatrix a;     // residual-times-factor gradient
  RealMatrix winv;  // inverse Gram scaling
  RealMatrix s;     // a * winv
};

struct LarpcaTape {
  std::vector<RealMatrix> l, r;  // iterates 0..K
  std::vector<RealMatrix> p;     // pre-threshold residuals, one per iteration
  std::vector<RealMatrix> y;     // y[k] = Y^(k), 0..K
  std::vector<FactorStepTape> lstep, rstep;
};

// Shared forward pass; mirrors the standalone update operations expression by
// expression so the composed and monolithic paths round identically.
inline LarpcaRunResult larpca_forward(const RealMatrix& x, const LarpcaParams& params,
                                      const LarpcaApprox& approx, int k_total,
                                      int rank, bool with_trace,
                                      const RealMatrix* v_star, LarpcaTape* tape) {
  if (k_total < 0) throw ParameterError("larpca_run: negative depth");
  params.validate(k_total);
  approx.validate(k_total);
  if (!x.allFinite()) throw NumericError("larpca_run: non-finite input");
  if (rank < 0) {
    if (k_total == 0)
      throw ParameterError("larpca_run: rank required when k_total is 0");
    rank = static_cast<int>(params.eta_l[0].cols());
  }

  RpcaFactors f = larpca_init(x, params.zeta[0], rank);
  if (tape) {
    tape->l.push_back(f.l);
    tape->r.push_back(f.r_f);
    tape->y.push_back(f.y);
  }

  LarpcaRunResult out;
  for (int k = 0; k < k_total; ++k) {
    if (params.eta_l[k].rows() != x.rows() || params.eta_r[k].rows() != x.cols() ||
        params.eta_l[k].cols() != rank || params.eta_r[k].cols() != rank)
      throw ParameterError("larpca_run: step matrix shape mismatch at iteration " +
                           std::to_string(k));
    try {
      const RealMatrix p = x - f.l * f.r_f.transpose();
      f.y = soft_threshold(p, params.zeta[k + 1]);
      if (tape) tape->p.push_back(p);

      detail::FactorStepTape lt, rt;
      RealMatrix l_next;
      if (!approx.k_l.count(k)) {
        lt.taken = true;
        lt.res = f.l * f.r_f.transpose() + f.y - x;
        lt.a = lt.res * f.r_f;
        lt.winv = small_spd_inverse(RealMatrix(f.r_f.transpose() * f.r_f));
        lt.s = lt.a * lt.winv;
        l_next = f.l - params.eta_l[k].cwiseProduct(lt.s);
      } else {
        l_next = f.l;
      }

      RealMatrix r_next;
      if (!approx.k_r.count(k)) {
        rt.taken = true;
        rt.res = l_next * f.r_f.transpose() + f.y - x;
        rt.a = rt.res.transpose() * l_next;
        rt.winv = small_spd_inverse(RealMatrix(l_next.transpose() * l_next));
        rt.s = rt.a * rt.winv;
        r_next = f.r_f - params.eta_r[k].cwiseProduct(rt.s);
      } else {
        r_next = f.r_f;
      }

      f.l = std::move(l_next);
      f.r_f = std::move(r_next);
      if (tape) {
        tape->l.push_back(f.l);
        tape->r.push_back(f.r_f);
        tape->y.push_back(f.y);
        tape->lstep.push_back(std::move(lt));
        tape->rstep.push_back(std::move(rt));
      }
    } catch (const RankDeficientError& e) {
      throw RankDeficientError(std::string(e.what()) + " (iteration " +
                               std::to_string(k) + ")");
    }
    if (!f.l.allFinite() || !f.r_f.allFinite() || !f.y.allFinite())
      throw NumericError("larpca_run: non-finite iterate at iteration " +
                         std::to_string(k));

    if (with_trace) {
      LarpcaTraceRow row;
      row.k = k;
      row.objective = rpca_objective(f, x);
      const RealMatrix v = f.l * f.r_f.transpose();
      row.recovery_error = recovery_error(v, x, x.rows(), x.cols());
      if (v_star) row.rel_err_vs_truth = rel_err_vs_truth(v, *v_star);
      out.trace.push_back(row);
    }
  }

  out.v_hat = f.l * f.r_f.transpose();
  out.y_hat = f.y;
  out.factors = std::move(f);
  return out;
}

}  // namespace detail

// Unfolded thresholding + scaled factor descent. Iterations listed in the
// approx sets skip that factor's update entirely; the sparse stage always runs.
inline LarpcaRunResult larpca_run(const RealMatrix& x, const LarpcaParams& params,
                                  const LarpcaApprox& approx, int k_total,
                                  bool with_trace = false,
                                  const RealMatrix* v_star = nullptr,
                                  int rank = -1) {
  return detail::larpca_forward(x, params, approx, k_total, rank, with_trace,
                                v_star, nullptr);
}

inline FlopReport larpca_flops(int n1, int n2, int r, int k_total,
                               const LarpcaApprox& approx) {
  approx.validate(k_total);
  return factorization_flops(n1, n2, r, k_total, approx.k_l, approx.k_r);
}

// ---- training adapter ----------------------------------------------------

// Schedule labels per iteration k: "eta_l" (n1 x r), "eta_r" (n2 x r), and the
// post-update threshold "zeta" (1x1, holds zeta^(k+1)). Bundle 0 additionally
// carries the init threshold "zeta0" (1x1). Thresholds read from a schedule
// are clamped at zero so finite-difference probes at the boundary stay legal.
inline HyperSchedule larpca_schedule(const LarpcaParams& p) {
  const int k_total = static_cast<int>(p.eta_l.size());
  HyperSchedule s;
  s.per_iteration.resize(k_total);
  for (int k = 0; k < k_total; ++k) {
    s.per_iteration[k].values["eta_l"] = p.eta_l[k];
    s.per_iteration[k].values["eta_r"] = p.eta_r[k];
    s.per_iteration[k].values["zeta"] = RealMatrix(RealMatrix::Constant(1, 1, p.zeta[k + 1]));
  }
  if (k_total > 0)
    s.per_iteration[0].values["zeta0"] = RealMatrix(RealMatrix::Constant(1, 1, p.zeta[0]));
  return s;
}

inline LarpcaParams larpca_params_from_schedule(const HyperSchedule& s) {
  const int k_total = s.k_total();
  if (k_total < 1)
    throw ParameterError("larpca schedule: need at least one iteration");
  LarpcaParams p;
  p.eta_l.resize(k_total);
  p.eta_r.resize(k_total);
  p.zeta.resize(k_total + 1);
  p.zeta[0] = std::max(0.0, std::get<RealMatrix>(s.at(0, "zeta0"))(0, 0));
  for (int k = 0; k < k_total; ++k) {
    p.eta_l[k] = std::get<RealMatrix>(s.at(k, "eta_l"));
    p.eta_r[k] = std::get<RealMatrix>(s.at(k, "eta_r"));
    p.zeta[k + 1] = std::max(0.0, std::get<RealMatrix>(s.at(k, "zeta"))(0, 0));
  }
  return p;
}

enum class LarpcaRiskKind { unsupervised, supervised };

// Factorization solver adapter: unsupervised objective is the sparsity-
// regularized relative reconstruction loss; supervised task loss is the
// squared relative error against the planted low-rank part.
struct LarpcaSolver {
  using Context = RpcaInstance;
  using Decision = LarpcaRunResult;
  using Label = RealMatrix;  // V*

  LarpcaApprox approx;
  double lambda_s = 0.1;

  Decision forward(const HyperSchedule& params, const Context& inst) const {
    const LarpcaParams p = larpca_params_from_schedule(params);
    return larpca_run(inst.x, p, approx, params.k_total());
  }

  double objective(const Decision& d, const Context& inst) const {
    return unsup_rpca_loss(d.v_hat, d.y_hat, inst.x, lambda_s);
  }

  double task_loss(const Decision& d, const Label& v_star) const {
    const double vn2 = v_star.squaredNorm();
    if (!(vn2 > 0.0)) throw ParameterError("task_loss: zero-norm ground truth");
    return (d.v_hat - v_star).squaredNorm() / vn2;
  }

  HyperSchedule adjoint_risk_gradient(const HyperSchedule& params,
                                      const Context& inst,
                                      const std::optional<Label>& label,
                                      DatasetKind kind) const;

 private:
  double sample_risk(const HyperSchedule& params, const Context& inst,
                     const std::optional<Label>& label, DatasetKind kind) const {
    const Decision d = forward(params, inst);
    if (kind == DatasetKind::unsupervised) return objective(d, inst);
    if (!label) throw ParameterError("larpca adjoint: supervised sample lacks label");
    return task_loss(d, *label);
  }
};

// Reverse sweep through the unrolled iterations. The init threshold zeta0
// influences the run only through the thresholded-SVD initialization, whose
// QR/power-iteration graph is not taped; that single scalar is differentiated
// by central differences instead.
inline HyperSchedule LarpcaSolver::adjoint_risk_gradient(
    const HyperSchedule& params, const Context& inst,
    const std::optional<Label>& label, DatasetKind kind) const {
  const LarpcaParams p = larpca_params_from_schedule(params);
  const int k_total = params.k_total();
  detail::LarpcaTape tape;
  const LarpcaRunResult run = detail::larpca_forward(
      inst.x, p, approx, k_total, /*rank=*/-1, /*with_trace=*/false, nullptr, &tape);

  const RealMatrix& x = inst.x;
  const Index n1 = x.rows();
  const Index n2 = x.cols();

  // Loss seeds on (L_K, R_K, Y_K).
  RealMatrix dv;
  RealMatrix dy_final = RealMatrix::Zero(n1, n2);
  if (kind == DatasetKind::unsupervised) {
    const double xn = x.norm();
    if (!(xn > 0.0)) throw ParameterError("larpca adjoint: zero-norm observation");
    const double resn = (x - run.v_hat).norm();
    dv = resn > 0.0 ? RealMatrix((run.v_hat - x) / (resn * xn))
                    : RealMatrix(RealMatrix::Zero(n1, n2));
    const double w = lambda_s / (static_cast<double>(n1) * static_cast<double>(n2));
    dy_final = run.y_hat.unaryExpr([](double v) {
      return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    }) * w;
  } else {
    if (!label) throw ParameterError("larpca adjoint: supervised sample lacks label");
    const double vn2 = label->squaredNorm();
    if (!(vn2 > 0.0)) throw ParameterError("larpca adjoint: zero-norm ground truth");
    dv = 2.0 * (run.v_hat - *label) / vn2;
  }

  RealMatrix dl = dv * tape.r[k_total];
  RealMatrix dr = dv.transpose() * tape.l[k_total];

  HyperSchedule grad = zeros_like(params);
  for (int k = k_total - 1; k >= 0; --k) {
    const RealMatrix& l_k = tape.l[k];
    const RealMatrix& r_k = tape.r[k];
    RealMatrix dy = (k == k_total - 1) ? dy_final
                                       : RealMatrix(RealMatrix::Zero(n1, n2));

    // R step: r_{k+1} = r_k - eta_r (.) (a2 * w2), a2 = res2^T l_{k+1}.
    RealMatrix dr_k = RealMatrix::Zero(n2, p.eta_r[k].cols());
    if (tape.rstep[k].taken) {
      const auto& st = tape.rstep[k];
      const RealMatrix& l_next = tape.l[k + 1];
      std::get<RealMatrix>(grad.per_iteration[k].values["eta_r"]) -=
          dr.cwiseProduct(st.s);
      const RealMatrix ds = -p.eta_r[k].cwiseProduct(dr);
      const RealMatrix da = ds * st.winv;
      const RealMatrix dwin = st.a.transpose() * ds;
      const RealMatrix dg = -st.winv * dwin * st.winv;
      RealMatrix dres = l_next * da.transpose();
      dl += l_next * (dg + dg.transpose()) + st.res * da + dres * r_k;
      dr_k += dres.transpose() * l_next + dr;
      dy += dres;
    } else {
      dr_k = dr;
    }

    // L step: l_{k+1} = l_k - eta_l (.) (a1 * w1), a1 = res1 r_k.
    RealMatrix dl_k;
    if (tape.lstep[k].taken) {
      const auto& st = tape.lstep[k];
      std::get<RealMatrix>(grad.per_iteration[k].values["eta_l"]) -=
          dl.cwiseProduct(st.s);
      const RealMatrix ds = -p.eta_l[k].cwiseProduct(dl);
      const RealMatrix da = ds * st.winv;
      const RealMatrix dwin = st.a.transpose() * ds;
      const RealMatrix dg = -st.winv * dwin * st.winv;
      const RealMatrix dres = da * r_k.transpose();
      dr_k += r_k * (dg + dg.transpose()) + st.res.transpose() * da +
              dres.transpose() * l_k;
      dl_k = dres * r_k + dl;
      dy += dres;
    } else {
      dl_k = dl;
    }

    // Sparse stage: y_{k+1} = T_zeta(p_k), p_k = x - l_k r_k^T.
    const RealMatrix& p_k = tape.p[k];
    const double zeta = p.zeta[k + 1];
    double dzeta = 0.0;
    RealMatrix dp(n1, n2);
    for (Index j = 0; j < n2; ++j)
      for (Index i = 0; i < n1; ++i) {
        const double v = p_k(i, j);
        if (std::abs(v) > zeta) {
          dp(i, j) = dy(i, j);
          dzeta -= (v > 0.0 ? 1.0 : -1.0) * dy(i, j);
        } else {
          dp(i, j) = 0.0;
        }
      }
    std::get<RealMatrix>(grad.per_iteration[k].values["zeta"])(0, 0) = dzeta;
    dl_k -= dp * r_k;
    dr_k -= dp.transpose() * l_k;

    dl = std::move(dl_k);
    dr = std::move(dr_k);
  }

  // zeta0 by central differences through the full run.
  {
    const double h = 1e-5;
    HyperSchedule probe = params;
    auto& z0 = std::get<RealMatrix>(probe.per_iteration[0].values["zeta0"])(0, 0);
    const double base = z0;
    z0 = base + h;
    const double fp = sample_risk(probe, inst, label, kind);
    z0 = std::max(0.0, base - h);
    const double fm = sample_risk(probe, inst, label, kind);
    const double denom = (base + h) - std::max(0.0, base - h);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("larpca adjoint: non-finite risk while probing zeta0");
    std::get<RealMatrix>(grad.per_iteration[0].values["zeta0"])(0, 0) =
        denom > 0.0 ? (fp - fm) / denom : 0.0;
  }

  return grad;
}

}  // namespace uopt
