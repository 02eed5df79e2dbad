#include <catch2/catch_amalgamated.hpp>

#include <Eigen/SVD>
#include <cmath>

#include "uopt/linalg.hpp"
#include "uopt/rng.hpp"

using namespace uopt;

namespace {

RealMatrix random_real(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  NormalSampler normal(rng);
  RealMatrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal();
  return m;
}

ComplexMatrix random_complex(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  NormalSampler normal(rng);
  ComplexMatrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = Complex(normal(), normal());
  return m;
}

// Independent route: full dense decomposition, truncated after the fact.
template <class M>
void check_against_full_svd(const M& a, Index r) {
  const auto got = truncated_svd(a, r);
  Eigen::JacobiSVD<M> full(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const RealVector ref = full.singularValues();

  REQUIRE(got.u.rows() == a.rows());
  REQUIRE(got.u.cols() == r);
  REQUIRE(got.v.rows() == a.cols());
  REQUIRE(got.v.cols() == r);
  REQUIRE(got.sigma.size() == r);

  const double smax = std::max(ref(0), 1e-30);
  for (Index i = 0; i < r; ++i) {
    CHECK(got.sigma(i) >= -1e-12);
    if (i + 1 < r) CHECK(got.sigma(i) >= got.sigma(i + 1) - 1e-12 * smax);
    CHECK(std::abs(got.sigma(i) - ref(i)) <= 1e-6 * smax);
  }
  CHECK((got.u.adjoint() * got.u - M::Identity(r, r)).norm() < 1e-9);
  CHECK((got.v.adjoint() * got.v - M::Identity(r, r)).norm() < 1e-9);

  // Best rank-r approximation error must match the reference truncation.
  const M approx = got.u * got.sigma.asDiagonal() * got.v.adjoint();
  const M ref_approx = full.matrixU().leftCols(r) *
                       ref.head(r).asDiagonal() *
                       full.matrixV().leftCols(r).adjoint();
  CHECK((a - approx).norm() <= (a - ref_approx).norm() + 1e-6 * smax);
}

}  // namespace

TEST_CASE("truncated factorization matches a full decomposition") {
  check_against_full_svd(random_real(12, 8, 1), 1);
  check_against_full_svd(random_real(12, 8, 2), 4);
  check_against_full_svd(random_real(12, 8, 3), 8);
  check_against_full_svd(random_real(6, 15, 4), 3);
  check_against_full_svd(random_real(9, 9, 5), 9);
  check_against_full_svd(random_complex(10, 7, 6), 3);
  check_against_full_svd(random_complex(5, 11, 7), 5);
}

TEST_CASE("truncated factorization on structured inputs") {
  SECTION("identity") {
    const auto f = truncated_svd(RealMatrix(RealMatrix::Identity(5, 5)), 3);
    for (Index i = 0; i < 3; ++i) CHECK(f.sigma(i) == Catch::Approx(1.0));
    CHECK((f.u * f.sigma.asDiagonal() * f.v.transpose() * f.v -
           f.u * f.sigma.asDiagonal())
              .norm() < 1e-12);
  }
  SECTION("rank-one outer product") {
    RealVector u(4), v(3);
    u << 1, 2, -1, 0.5;
    v << 0.5, -1, 2;
    const RealMatrix a = 3.0 * u * v.transpose();
    const auto f = truncated_svd(a, 2);
    CHECK(f.sigma(0) == Catch::Approx(3.0 * u.norm() * v.norm()).epsilon(1e-10));
    CHECK(f.sigma(1) == Catch::Approx(0.0).margin(1e-9));
    CHECK((a - f.u * f.sigma.asDiagonal() * f.v.transpose()).norm() < 1e-9);
  }
  SECTION("rank bounds are enforced") {
    const RealMatrix a = random_real(4, 6, 8);
    CHECK_THROWS_AS(truncated_svd(a, 0), ParameterError);
    CHECK_THROWS_AS(truncated_svd(a, 5), ParameterError);
  }
  SECTION("non-finite input is rejected") {
    RealMatrix a = random_real(3, 3, 9);
    a(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(truncated_svd(a, 1), NumericError);
  }
}

TEST_CASE("entrywise shrinkage") {
  RealMatrix m(2, 2);
  m << 3.0, -0.5, 0.2, -2.0;
  const RealMatrix got = soft_threshold(m, 1.0);
  RealMatrix want(2, 2);
  want << 2.0, 0.0, 0.0, -1.0;
  CHECK((got - want).norm() == 0.0);

  SECTION("zero threshold is the identity") {
    CHECK((soft_threshold(m, 0.0) - m).norm() == 0.0);
  }
  SECTION("shrinkage is a contraction entrywise") {
    const RealMatrix a = random_real(6, 5, 10);
    const RealMatrix b = random_real(6, 5, 11);
    for (double z : {0.1, 0.7, 2.5}) {
      const RealMatrix da = soft_threshold(a, z) - soft_threshold(b, z);
      const RealMatrix db = a - b;
      for (Index i = 0; i < a.size(); ++i)
        CHECK(std::abs(da(i)) <= std::abs(db(i)) + 1e-15);
    }
  }
  SECTION("negative threshold is rejected") {
    CHECK_THROWS_AS(soft_threshold(m, -0.1), ParameterError);
  }
}

TEST_CASE("log-determinant of positive definite matrices") {
  SECTION("identity and diagonal") {
    CHECK(logdet_psd(ComplexMatrix::Identity(4, 4)) == Catch::Approx(0.0).margin(1e-14));
    ComplexMatrix d = ComplexMatrix::Zero(2, 2);
    d(0, 0) = 2.0;
    d(1, 1) = 3.0;
    CHECK(logdet_psd(d) == Catch::Approx(std::log(6.0)).epsilon(1e-12));
  }
  SECTION("random Hermitian PD vs eigenvalue sum") {
    const ComplexMatrix b = random_complex(6, 6, 12);
    const ComplexMatrix a =
        b * b.adjoint() + ComplexMatrix::Identity(6, 6);
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(a);
    double want = 0.0;
    for (Index i = 0; i < 6; ++i) want += std::log(es.eigenvalues()(i));
    CHECK(logdet_psd(a) == Catch::Approx(want).epsilon(1e-10));
  }
  SECTION("input validation") {
    CHECK_THROWS_AS(logdet_psd(ComplexMatrix::Zero(2, 3)), ParameterError);
    ComplexMatrix skew(2, 2);
    skew << 1.0, Complex(0, 1), Complex(0, 1), 1.0;  // not Hermitian
    CHECK_THROWS_AS(logdet_psd(skew), NumericError);
    CHECK_THROWS_AS(logdet_psd(ComplexMatrix::Zero(3, 3)), NumericError);
    ComplexMatrix indef = ComplexMatrix::Identity(2, 2);
    indef(1, 1) = -1.0;
    CHECK_THROWS_AS(logdet_psd(indef), NumericError);
  }
}

TEST_CASE("small Gram inverse") {
  SECTION("real SPD") {
    const RealMatrix b = random_real(8, 4, 13);
    const RealMatrix g = b.transpose() * b + 0.1 * RealMatrix::Identity(4, 4);
    const RealMatrix inv = small_spd_inverse(g);
    CHECK((g * inv - RealMatrix::Identity(4, 4)).norm() < 1e-10);
    CHECK((inv - inv.transpose()).norm() < 1e-12);
  }
  SECTION("complex Hermitian PD") {
    const ComplexMatrix b = random_complex(7, 3, 14);
    const ComplexMatrix g =
        b.adjoint() * b + 0.1 * ComplexMatrix::Identity(3, 3);
    const ComplexMatrix inv = small_spd_inverse(g);
    CHECK((g * inv - ComplexMatrix::Identity(3, 3)).norm() < 1e-10);
  }
  SECTION("singular Gram is refused") {
    RealVector v(3);
    v << 1, 2, 3;
    const RealMatrix g = v * v.transpose();  // rank one
    CHECK_THROWS_AS(small_spd_inverse(g), RankDeficientError);
  }
  SECTION("extreme conditioning is refused") {
    RealMatrix g = RealMatrix::Identity(2, 2);
    g(1, 1) = 1e-14;
    CHECK_THROWS_AS(small_spd_inverse(g), RankDeficientError);
  }
  SECTION("shape and finiteness") {
    CHECK_THROWS_AS(small_spd_inverse(RealMatrix(RealMatrix::Zero(2, 3))),
                    ParameterError);
    RealMatrix g = RealMatrix::Identity(2, 2);
    g(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(small_spd_inverse(g), NumericError);
  }
}

TEST_CASE("finite-difference gradients") {
  SECTION("affine functional is exact") {
    const RealMatrix a = random_real(3, 4, 15);
    const RealMatrix at = random_real(3, 4, 16);
    auto f = [&](const RealMatrix& x) { return (a.array() * x.array()).sum() + 2.5; };
    const RealMatrix g = fd_gradient(f, at);
    CHECK((g - a).cwiseAbs().maxCoeff() < 1e-9);
  }
  SECTION("quadratic matches analytic derivative") {
    const RealMatrix q0 = random_real(4, 4, 17);
    const RealMatrix q = q0 + q0.transpose();
    RealMatrix at = random_real(4, 1, 18);
    auto f = [&](const RealMatrix& x) { return 0.5 * (x.transpose() * q * x)(0, 0); };
    const RealMatrix g = fd_gradient(f, at);
    CHECK((g - q * at).cwiseAbs().maxCoeff() < 1e-6);
  }
  SECTION("complex squared norm gives the conjugate") {
    const ComplexMatrix w = random_complex(3, 2, 19);
    auto f = [](const ComplexMatrix& x) { return x.squaredNorm(); };
    const ComplexMatrix g = fd_gradient_complex(f, w);
    CHECK((g - w.conjugate()).cwiseAbs().maxCoeff() < 1e-8);
  }
  SECTION("holomorphic linear part has no conjugate component") {
    // f = Re(sum w): d/dRe = 1, d/dIm = 0 -> derivative 1/2 everywhere.
    const ComplexMatrix w = random_complex(2, 2, 20);
    auto f = [](const ComplexMatrix& x) { return x.sum().real(); };
    const ComplexMatrix g = fd_gradient_complex(f, w);
    CHECK((g - ComplexMatrix::Constant(2, 2, Complex(0.5, 0.0))).cwiseAbs().maxCoeff() <
          1e-9);
  }
  SECTION("step validation") {
    auto f = [](const RealMatrix&) { return 0.0; };
    CHECK_THROWS_AS(fd_gradient(f, RealMatrix::Zero(1, 1), 0.0), ParameterError);
  }
}

TEST_CASE("deterministic repeat of the factorization") {
  const RealMatrix a = random_real(10, 6, 21);
  const auto f1 = truncated_svd(a, 3);
  const auto f2 = truncated_svd(a, 3);
  CHECK((f1.u - f2.u).norm() == 0.0);
  CHECK((f1.sigma - f2.sigma).norm() == 0.0);
  CHECK((f1.v - f2.v).norm() == 0.0);
}
