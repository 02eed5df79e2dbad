#pragma once

#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "uopt/common.hpp"

namespace uopt {

// One learnable quantity; scalars are stored as 1x1 real matrices.
using Param = std::variant<RealMatrix, ComplexMatrix>;

inline bool param_is_complex(const Param& p) {
  return std::holds_alternative<ComplexMatrix>(p);
}

inline Index param_entries(const Param& p) {
  return std::visit([](const auto& m) { return m.size(); }, p);
}

inline bool param_finite(const Param& p) {
  return std::visit([](const auto& m) { return m.allFinite(); }, p);
}

struct ParamBundle {
  std::map<std::string, Param> values;  // sorted by label
};

// Iteration-indexed learnable hyperparameters of an unfolded solver.
// per_iteration.size() is the unfolding depth; bundle k configures iteration k.
struct HyperSchedule {
  std::vector<ParamBundle> per_iteration;

  int k_total() const { return static_cast<int>(per_iteration.size()); }

  bool all_finite() const {
    for (const auto& b : per_iteration)
      for (const auto& [label, p] : b.values)
        if (!param_finite(p)) return false;
    return true;
  }

  const Param& at(int k, const std::string& label) const {
    if (k < 0 || k >= k_total())
      throw ParameterError("schedule: iteration index out of range");
    auto it = per_iteration[k].values.find(label);
    if (it == per_iteration[k].values.end())
      throw ParameterError("schedule: missing parameter '" + label +
                           "' at iteration " + std::to_string(k));
    return it->second;
  }

  bool same_shape(const HyperSchedule& other) const {
    if (k_total() != other.k_total()) return false;
    for (int k = 0; k < k_total(); ++k) {
      const auto& a = per_iteration[k].values;
      const auto& b = other.per_iteration[k].values;
      if (a.size() != b.size()) return false;
      auto ia = a.begin();
      auto ib = b.begin();
      for (; ia != a.end(); ++ia, ++ib) {
        if (ia->first != ib->first) return false;
        if (param_is_complex(ia->second) != param_is_complex(ib->second))
          return false;
        if (param_entries(ia->second) != param_entries(ib->second)) return false;
      }
    }
    return true;
  }
};

// Flat real view of a schedule; complex entries contribute (re, im) pairs.
// Order: iteration, then label (lexicographic), then column-major entries.
inline std::vector<double> pack_schedule(const HyperSchedule& s) {
  std::vector<double> flat;
  for (const auto& bundle : s.per_iteration) {
    for (const auto& [label, p] : bundle.values) {
      if (param_is_complex(p)) {
        const auto& m = std::get<ComplexMatrix>(p);
        for (Index i = 0; i < m.size(); ++i) {
          flat.push_back(m(i).real());
          flat.push_back(m(i).imag());
        }
      } else {
        const auto& m = std::get<RealMatrix>(p);
        for (Index i = 0; i < m.size(); ++i) flat.push_back(m(i));
      }
    }
  }
  return flat;
}

inline void unpack_schedule(HyperSchedule& s, const std::vector<double>& flat) {
  std::size_t pos = 0;
  for (auto& bundle : s.per_iteration) {
    for (auto& [label, p] : bundle.values) {
      if (param_is_complex(p)) {
        auto& m = std::get<ComplexMatrix>(p);
        for (Index i = 0; i < m.size(); ++i) {
          m(i) = Complex(flat.at(pos), flat.at(pos + 1));
          pos += 2;
        }
      } else {
        auto& m = std::get<RealMatrix>(p);
        for (Index i = 0; i < m.size(); ++i) m(i) = flat.at(pos++);
      }
    }
  }
  if (pos != flat.size())
    throw ParameterError("unpack_schedule: component count mismatch");
}

// Human-readable location of one flat component, for diagnostics.
inline std::string describe_component(const HyperSchedule& s, std::size_t index) {
  std::size_t pos = 0;
  for (int k = 0; k < s.k_total(); ++k) {
    for (const auto& [label, p] : s.per_iteration[k].values) {
      const std::size_t width =
          static_cast<std::size_t>(param_entries(p)) * (param_is_complex(p) ? 2 : 1);
      if (index < pos + width) {
        return "iteration " + std::to_string(k) + ", parameter '" + label +
               "', component " + std::to_string(index - pos);
      }
      pos += width;
    }
  }
  return "component " + std::to_string(index);
}

// Zeroed gradient accumulator with the same structure as the given schedule.
inline HyperSchedule zeros_like(const HyperSchedule& s) {
  HyperSchedule z = s;
  for (auto& bundle : z.per_iteration)
    for (auto& [label, p] : bundle.values) {
      if (param_is_complex(p))
        std::get<ComplexMatrix>(p).setZero();
      else
        std::get<RealMatrix>(p).setZero();
    }
  return z;
}

// Which iterations of which named computation are replaced by their cheap
// surrogate. Labels are solver-specific ("a", "d_0".., "l", "r").
struct ApproxSchedule {
  int k_total = 0;
  std::map<std::string, std::set<int>> sets;

  void validate() const {
    if (k_total < 0) throw ParameterError("approx schedule: negative depth");
    for (const auto& [label, idx] : sets)
      for (int k : idx)
        if (k < 0 || k >= k_total)
          throw ParameterError("approx schedule: index " + std::to_string(k) +
                               " for '" + label + "' outside [0, " +
                               std::to_string(k_total) + ")");
  }

  const std::set<int>& of(const std::string& label) const {
    static const std::set<int> empty;
    auto it = sets.find(label);
    return it == sets.end() ? empty : it->second;
  }
};

}  // namespace uopt
