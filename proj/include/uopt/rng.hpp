#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace uopt {

// splitmix64 finalizer; used to derive per-sample seeds from (base seed, index).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform in (0,1]; bit-identical on every conforming implementation since
// mt19937_64's output sequence is fixed by the standard.
inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

// Box-Muller normal draw. std::normal_distribution is not portable across
// standard libraries, so the transform is spelled out.
class NormalSampler {
 public:
  explicit NormalSampler(std::mt19937_64& rng) : rng_(rng) {}

  double operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_unit(rng_);
    const double u2 = uniform_unit(rng_);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64& rng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace uopt
