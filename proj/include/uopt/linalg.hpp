#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <type_traits>

#include "uopt/common.hpp"
#include "uopt/rng.hpp"

namespace uopt {

template <class M>
struct TruncatedSvdT {
  M u;               // rows x r, orthonormal columns
  RealVector sigma;  // r, non-increasing, >= 0
  M v;               // cols x r, orthonormal columns
};

using TruncatedSvd = TruncatedSvdT<RealMatrix>;
using TruncatedSvdC = TruncatedSvdT<ComplexMatrix>;

namespace detail {

template <class M>
inline constexpr bool is_complex_matrix =
    std::is_same_v<typename M::Scalar, Complex>;

// Thin Q factor; for a zero (or zero-padded) input Householder yields
// orthonormal identity columns, which keeps the zero-matrix case well defined.
template <class M>
M thin_q(const M& a) {
  Eigen::HouseholderQR<M> qr(a);
  M q = M::Identity(a.rows(), a.cols());
  q.applyOnTheLeft(qr.householderQ());
  return q;
}

template <class M>
M gaussian_start_block(Index rows, Index cols) {
  // Fixed seed: the factorization must be a deterministic function of its input.
  std::mt19937_64 rng(0x5eedb10cULL);
  NormalSampler normal(rng);
  M g(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) {
      if constexpr (is_complex_matrix<M>) {
        const double re = normal();
        const double im = normal();
        g(i, j) = Complex(re, im);
      } else {
        g(i, j) = normal();
      }
    }
  }
  return g;
}

}  // namespace detail

// Rank-r factorization via block power iteration on m^H m with a fixed
// iteration budget and re-orthonormalization each step, followed by an exact
// factorization of the r x cols core.
template <class M>
TruncatedSvdT<M> truncated_svd(const M& m, Index r) {
  if (r < 1 || r > std::min(m.rows(), m.cols()))
    throw ParameterError("truncated_svd: rank must be in [1, min(rows, cols)]");
  if (!m.allFinite()) throw NumericError("truncated_svd: non-finite input");

  constexpr int kSubspaceIters = 50;
  M g = detail::gaussian_start_block<M>(m.cols(), r);
  M q = detail::thin_q<M>(m * g);
  for (int it = 0; it < kSubspaceIters; ++it) {
    M z = detail::thin_q<M>(m.adjoint() * q);
    q = detail::thin_q<M>(m * z);
  }
  M core = q.adjoint() * m;  // r x cols
  Eigen::JacobiSVD<M> svd(core, Eigen::ComputeThinU | Eigen::ComputeThinV);
  TruncatedSvdT<M> out;
  out.u = q * svd.matrixU();
  out.sigma = svd.singularValues();
  out.v = svd.matrixV();
  return out;
}

// Entrywise shrinkage sign(m) * max(|m| - zeta, 0).
inline RealMatrix soft_threshold(const RealMatrix& m, double zeta) {
  if (!(zeta >= 0.0)) throw ParameterError("soft_threshold: zeta must be >= 0");
  RealMatrix out(m.rows(), m.cols());
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) {
      const double x = m(i, j);
      const double mag = std::abs(x) - zeta;
      out(i, j) = mag > 0.0 ? (x > 0.0 ? mag : -mag) : 0.0;
    }
  return out;
}

// log-determinant of a Hermitian positive definite matrix via Cholesky.
// Inputs Hermitian only up to roundoff are symmetrized first.
inline double logdet_psd(const ComplexMatrix& a) {
  if (a.rows() != a.cols()) throw ParameterError("logdet_psd: matrix not square");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  const double asym = (a - a.adjoint()).cwiseAbs().maxCoeff();
  if (!(asym <= 1e-10 * scale))
    throw NumericError("logdet_psd: input is not Hermitian within tolerance");
  ComplexMatrix h = 0.5 * (a + a.adjoint());
  Eigen::LLT<ComplexMatrix> llt(h);
  if (llt.info() != Eigen::Success)
    throw NumericError("logdet_psd: input is not positive definite");
  double acc = 0.0;
  const auto& l = llt.matrixLLT();
  for (Index i = 0; i < h.rows(); ++i) acc += std::log(l(i, i).real());
  return 2.0 * acc;
}

// Inverse of a small (conjugate-)symmetric positive definite Gram matrix.
// Guards conditioning; factor Grams feed solver scalings and must stay sane.
template <class M>
M small_spd_inverse(const M& g) {
  if (g.rows() != g.cols())
    throw ParameterError("small_spd_inverse: matrix not square");
  if (!g.allFinite()) throw NumericError("small_spd_inverse: non-finite input");
  M h = typename M::Scalar(0.5) * (g + g.adjoint());
  Eigen::SelfAdjointEigenSolver<M> es(h);
  if (es.info() != Eigen::Success)
    throw NumericError("small_spd_inverse: eigendecomposition failed");
  const RealVector& ev = es.eigenvalues();
  const double lo = ev.minCoeff();
  const double hi = ev.maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12)
    throw RankDeficientError(
        "small_spd_inverse: matrix is singular or condition number exceeds 1e12");
  return es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
         es.eigenvectors().adjoint();
}

// Central-difference gradient of a real functional over a real matrix.
template <class F>
RealMatrix fd_gradient(F&& f, const RealMatrix& at, double h = 1e-5) {
  if (!(h > 0.0)) throw ParameterError("fd_gradient: step must be > 0");
  RealMatrix grad(at.rows(), at.cols());
  RealMatrix probe = at;
  for (Index j = 0; j < at.cols(); ++j)
    for (Index i = 0; i < at.rows(); ++i) {
      const double base = at(i, j);
      probe(i, j) = base + h;
      const double fp = f(static_cast<const RealMatrix&>(probe));
      probe(i, j) = base - h;
      const double fm = f(static_cast<const RealMatrix&>(probe));
      probe(i, j) = base;
      grad(i, j) = (fp - fm) / (2.0 * h);
    }
  return grad;
}

// Central-difference Wirtinger derivative 0.5*(d/dRe - i d/dIm) of a real
// functional over a complex matrix; matches the convention of the analytic
// rate gradients.
template <class F>
ComplexMatrix fd_gradient_complex(F&& f, const ComplexMatrix& at, double h = 1e-5) {
  if (!(h > 0.0)) throw ParameterError("fd_gradient_complex: step must be > 0");
  ComplexMatrix grad(at.rows(), at.cols());
  ComplexMatrix probe = at;
  for (Index j = 0; j < at.cols(); ++j)
    for (Index i = 0; i < at.rows(); ++i) {
      const Complex base = at(i, j);
      probe(i, j) = base + h;
      const double fpr = f(static_cast<const ComplexMatrix&>(probe));
      probe(i, j) = base - h;
      const double fmr = f(static_cast<const ComplexMatrix&>(probe));
      probe(i, j) = base + Complex(0.0, h);
      const double fpi = f(static_cast<const ComplexMatrix&>(probe));
      probe(i, j) = base - Complex(0.0, h);
      const double fmi = f(static_cast<const ComplexMatrix&>(probe));
      probe(i, j) = base;
      grad(i, j) = 0.5 * Complex((fpr - fmr) / (2.0 * h), -(fpi - fmi) / (2.0 * h));
    }
  return grad;
}

}  // namespace uopt
