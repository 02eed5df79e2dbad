#include <catch2/catch_amalgamated.hpp>

#include "uopt/flops.hpp"

using namespace uopt;

namespace {

std::set<int> first_k(int n) {
  std::set<int> s;
  for (int i = 0; i < n; ++i) s.insert(i);
  return s;
}

}  // namespace

TEST_CASE("beamforming cost table, small array") {
  const int b = 8, n = 6, l = 10, m = 12;
  const std::vector<std::set<int>> no_kd(b);

  SECTION("five full iterations") {
    const FlopReport r = beamforming_flops(b, n, l, m, 5, {}, no_kd);
    CHECK(r.total == 238080);
    CHECK(r.per_iter_full == 47616);
    CHECK(r.reduction_factor == 1.0);
    CHECK_FALSE(r.degenerate);
  }
  SECTION("all analog surrogate, two cached digital per band") {
    const std::vector<std::set<int>> kd(b, std::set<int>{1, 3});
    const FlopReport r = beamforming_flops(b, n, l, m, 5, first_k(5), kd);
    CHECK(r.total == 71424);
    CHECK(r.reduction_num == 24);
    CHECK(r.reduction_den == 80);
  }
  SECTION("analog surrogate only") {
    const FlopReport r = beamforming_flops(b, n, l, m, 5, first_k(5), no_kd);
    CHECK(r.total == 119040);
  }
  SECTION("fifty classic iterations") {
    const FlopReport r = beamforming_flops(b, n, l, m, 50, {}, no_kd);
    CHECK(r.total == 2380800);
  }
}

TEST_CASE("beamforming cost table, wide array") {
  const int b = 64, n = 12, l = 12, m = 32;
  const std::vector<std::set<int>> no_kd(b);

  CHECK(beamforming_flops(b, n, l, m, 5, {}, no_kd).total == 13025280);
  CHECK(beamforming_flops(b, n, l, m, 100, {}, no_kd).total == 260505600);

  const std::vector<std::set<int>> kd(b, std::set<int>{1, 3});
  const FlopReport r = beamforming_flops(b, n, l, m, 5, first_k(5), kd);
  CHECK(r.total == 3907584);
  CHECK(r.reduction_factor == Catch::Approx(192.0 / 640.0));
}

TEST_CASE("beamforming edge cases") {
  const std::vector<std::set<int>> no_kd(2);
  SECTION("zero depth") {
    const FlopReport r = beamforming_flops(2, 2, 2, 2, 0, {}, no_kd);
    CHECK(r.total == 0);
    CHECK_FALSE(r.degenerate);
  }
  SECTION("everything replaced is degenerate") {
    const std::vector<std::set<int>> kd(2, std::set<int>{0, 1});
    const FlopReport r = beamforming_flops(2, 2, 2, 2, 2, {0, 1}, kd);
    CHECK(r.total == 0);
    CHECK(r.degenerate);
  }
  SECTION("validation") {
    CHECK_THROWS_AS(beamforming_flops(0, 2, 2, 2, 1, {}, {}), ParameterError);
    CHECK_THROWS_AS(beamforming_flops(2, 2, 2, 2, 1, {1}, no_kd), ParameterError);
    std::vector<std::set<int>> bad_kd(2, std::set<int>{5});
    CHECK_THROWS_AS(beamforming_flops(2, 2, 2, 2, 1, {}, bad_kd), ParameterError);
    CHECK_THROWS_AS(beamforming_flops(2, 2, 2, 2, 1, {}, {std::set<int>{}}),
                    ParameterError);  // band count mismatch
  }
  SECTION("more skips never cost more") {
    std::uint64_t prev = beamforming_flops(3, 4, 5, 6, 8, {}, std::vector<std::set<int>>(3)).total;
    for (int na = 1; na <= 8; ++na) {
      const FlopReport r = beamforming_flops(3, 4, 5, 6, 8, first_k(na),
                                             std::vector<std::set<int>>(3));
      CHECK(r.total <= prev);
      prev = r.total;
    }
  }
}

TEST_CASE("factorization cost table") {
  SECTION("sixteen iterations, half the factor updates skipped") {
    const FlopReport r =
        factorization_flops(1000, 1000, 5, 16, first_k(8), first_k(8));
    CHECK(r.total == 176802000);
    CHECK_FALSE(r.nonsquare_flagged);
  }
  SECTION("twenty-four full iterations") {
    const FlopReport r = factorization_flops(1000, 1000, 5, 24, {}, {});
    CHECK(r.total == 386406000);
    CHECK(r.reduction_factor == 1.0);
  }
  SECTION("six thousand full iterations") {
    const FlopReport r = factorization_flops(1000, 1000, 5, 6000, {}, {});
    CHECK(r.total == 96601500000ULL);
  }
  SECTION("quarter skip at n=100") {
    // 8 iterations, 4 of 16 factor updates skipped
    const FlopReport r = factorization_flops(100, 100, 5, 8, first_k(2), first_k(2));
    CHECK(r.sparse_total == 480000);
    CHECK(r.factor_total_full == 882000);
    CHECK(r.factor_total == 661500);
    CHECK(r.total == 1141500);
  }
}

TEST_CASE("factorization edge cases") {
  SECTION("non-square inputs are modeled at the larger side and flagged") {
    const FlopReport r = factorization_flops(20, 15, 2, 3, {}, {});
    const FlopReport sq = factorization_flops(20, 20, 2, 3, {}, {});
    CHECK(r.total == sq.total);
    CHECK(r.nonsquare_flagged);
    CHECK_FALSE(sq.nonsquare_flagged);
  }
  SECTION("all factor updates skipped still pays the sparse stage") {
    const FlopReport r = factorization_flops(10, 10, 2, 4, first_k(4), first_k(4));
    CHECK(r.degenerate);
    CHECK(r.factor_total == 0);
    CHECK(r.total == r.sparse_total);
  }
  SECTION("zero depth") {
    const FlopReport r = factorization_flops(10, 10, 2, 0, {}, {});
    CHECK(r.total == 0);
    CHECK(r.reduction_den == 1);
  }
  SECTION("validation") {
    CHECK_THROWS_AS(factorization_flops(0, 10, 2, 1, {}, {}), ParameterError);
    CHECK_THROWS_AS(factorization_flops(10, 10, 0, 1, {}, {}), ParameterError);
    CHECK_THROWS_AS(factorization_flops(10, 10, 2, 2, {2}, {}), ParameterError);
  }
  SECTION("report serialization carries the exact rational") {
    const FlopReport r = factorization_flops(100, 100, 5, 8, first_k(2), first_k(2));
    const auto j = r.to_json();
    CHECK(j.at("total").get<std::uint64_t>() == r.total);
    CHECK(j.at("reduction_num").get<std::uint64_t>() == r.reduction_num);
    CHECK(j.at("reduction_den").get<std::uint64_t>() == r.reduction_den);
    CHECK(j.at("reduction_factor").get<double>() == r.reduction_factor);
  }
}
