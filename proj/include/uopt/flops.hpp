#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include <json.hpp>

#include "uopt/common.hpp"

namespace uopt {

// Modeled dominant-term flop count for one configured solver run.
// reduction_num/reduction_den keep the exact rational behind reduction_factor.
struct FlopReport {
  std::uint64_t per_iter_full = 0;
  std::uint64_t total = 0;
  double reduction_factor = 0.0;
  std::uint64_t reduction_num = 0;
  std::uint64_t reduction_den = 1;
  bool degenerate = false;        // every counted computation replaced
  bool nonsquare_flagged = false; // low-rank model evaluated at n = max(n1, n2)
  // breakdown for the factorization solver; zero for the beamforming solver
  std::uint64_t sparse_total = 0;
  std::uint64_t factor_total = 0;
  std::uint64_t factor_total_full = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["per_iter_full"] = per_iter_full;
    j["reduction_factor"] = reduction_factor;
    j["total"] = total;
    j["reduction_num"] = reduction_num;
    j["reduction_den"] = reduction_den;
    j["degenerate"] = degenerate;
    j["nonsquare_flagged"] = nonsquare_flagged;
    j["sparse_total"] = sparse_total;
    j["factor_total"] = factor_total;
    j["factor_total_full"] = factor_total_full;
    return j;
  }
};

// Beamforming gradient-cost model. One full iteration costs
// 2*B*(N*M*L + N^3 + M^2*L + L^2*N): one analog and B digital gradient
// evaluations. Approximated analog iterations drop B gradient units each;
// approximated digital iterations drop one unit per band occurrence.
inline FlopReport beamforming_flops(int b_bands, int n, int l, int m, int k_total,
                                    const std::set<int>& k_a,
                                    const std::vector<std::set<int>>& k_d) {
  if (b_bands < 1 || n < 1 || l < 1 || m < 1 || k_total < 0)
    throw ParameterError("beamforming_flops: bad dimensions");
  if (static_cast<int>(k_d.size()) != b_bands)
    throw ParameterError("beamforming_flops: need one digital approx set per band");
  for (int k : k_a)
    if (k < 0 || k >= k_total)
      throw ParameterError("beamforming_flops: analog approx index out of range");
  std::uint64_t digital_skips = 0;
  for (const auto& s : k_d) {
    for (int k : s)
      if (k < 0 || k >= k_total)
        throw ParameterError("beamforming_flops: digital approx index out of range");
    digital_skips += s.size();
  }
  const std::uint64_t nb = static_cast<std::uint64_t>(b_bands);
  const std::uint64_t unit = static_cast<std::uint64_t>(n) * m * l +
                             static_cast<std::uint64_t>(n) * n * n +
                             static_cast<std::uint64_t>(m) * m * l +
                             static_cast<std::uint64_t>(l) * l * n;
  FlopReport r;
  r.per_iter_full = 2 * nb * unit;
  const std::uint64_t full_units = 2 * nb * static_cast<std::uint64_t>(k_total);
  const std::uint64_t units =
      full_units - nb * k_a.size() - digital_skips;
  r.total = unit * units;
  r.reduction_num = units;
  r.reduction_den = full_units == 0 ? 1 : full_units;
  r.reduction_factor =
      full_units == 0 ? 0.0
                      : static_cast<double>(units) / static_cast<double>(full_units);
  r.degenerate = k_total > 0 && units == 0;
  return r;
}

// Low-rank factorization cost model. Per iteration: sparse stage n^2*r + n^2,
// plus P_low = n^2*r + 2*n*r^2 + r^3 for each factor update actually taken.
// Non-square inputs are modeled at n = max(n1, n2) and flagged.
inline FlopReport factorization_flops(int n1, int n2, int r, int k_total,
                                      const std::set<int>& k_l,
                                      const std::set<int>& k_r) {
  if (n1 < 1 || n2 < 1 || r < 1 || k_total < 0)
    throw ParameterError("factorization_flops: bad dimensions");
  for (const auto* s : {&k_l, &k_r})
    for (int k : *s)
      if (k < 0 || k >= k_total)
        throw ParameterError("factorization_flops: approx index out of range");
  const std::uint64_t n = static_cast<std::uint64_t>(std::max(n1, n2));
  const std::uint64_t rr = static_cast<std::uint64_t>(r);
  const std::uint64_t k = static_cast<std::uint64_t>(k_total);
  const std::uint64_t p_low = n * n * rr + 2 * n * rr * rr + rr * rr * rr;
  const std::uint64_t sparse = n * n * rr + n * n;
  FlopReport out;
  out.nonsquare_flagged = n1 != n2;
  out.per_iter_full = sparse + 2 * p_low;
  out.sparse_total = k * sparse;
  out.factor_total_full = 2 * k * p_low;
  const std::uint64_t taken = 2 * k - k_l.size() - k_r.size();
  out.factor_total = taken * p_low;
  out.total = out.sparse_total + out.factor_total;
  out.reduction_num = out.total;
  const std::uint64_t full = k * out.per_iter_full;
  out.reduction_den = full == 0 ? 1 : full;
  out.reduction_factor =
      full == 0 ? 0.0 : static_cast<double>(out.total) / static_cast<double>(full);
  out.degenerate = k_total > 0 && taken == 0;
  return out;
}

}  // namespace uopt
