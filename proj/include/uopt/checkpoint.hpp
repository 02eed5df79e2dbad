#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "uopt/schedule.hpp"

namespace uopt {

// Checkpoint layout:
// {"k_total": K, "params": [ {label: {"rows","cols","complex","data"}} x K ]}
// with complex data interleaved [re, im] in row-major entry order.

inline nlohmann::json schedule_to_json(const HyperSchedule& s) {
  nlohmann::json j;
  j["k_total"] = s.k_total();
  nlohmann::json params = nlohmann::json::array();
  for (const auto& bundle : s.per_iteration) {
    nlohmann::json b = nlohmann::json::object();
    for (const auto& [label, p] : bundle.values) {
      nlohmann::json entry;
      nlohmann::json data = nlohmann::json::array();
      if (param_is_complex(p)) {
        const auto& m = std::get<ComplexMatrix>(p);
        entry["rows"] = m.rows();
        entry["cols"] = m.cols();
        entry["complex"] = true;
        for (Index i = 0; i < m.rows(); ++i)
          for (Index jj = 0; jj < m.cols(); ++jj) {
            data.push_back(m(i, jj).real());
            data.push_back(m(i, jj).imag());
          }
      } else {
        const auto& m = std::get<RealMatrix>(p);
        entry["rows"] = m.rows();
        entry["cols"] = m.cols();
        entry["complex"] = false;
        for (Index i = 0; i < m.rows(); ++i)
          for (Index jj = 0; jj < m.cols(); ++jj) data.push_back(m(i, jj));
      }
      entry["data"] = std::move(data);
      b[label] = std::move(entry);
    }
    params.push_back(std::move(b));
  }
  j["params"] = std::move(params);
  return j;
}

inline HyperSchedule schedule_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("k_total") || !j.contains("params"))
    throw ParseError("checkpoint: expected object with k_total and params");
  const int k_total = j.at("k_total").get<int>();
  const auto& params = j.at("params");
  if (!params.is_array() || static_cast<int>(params.size()) != k_total)
    throw ParseError("checkpoint: params length does not match k_total");
  HyperSchedule s;
  s.per_iteration.resize(k_total);
  for (int k = 0; k < k_total; ++k) {
    const auto& b = params.at(k);
    if (!b.is_object()) throw ParseError("checkpoint: bundle is not an object");
    for (auto it = b.begin(); it != b.end(); ++it) {
      const auto& e = it.value();
      for (const char* key : {"rows", "cols", "complex", "data"})
        if (!e.contains(key))
          throw ParseError(std::string("checkpoint: parameter missing '") + key + "'");
      const Index rows = e.at("rows").get<Index>();
      const Index cols = e.at("cols").get<Index>();
      const bool complex = e.at("complex").get<bool>();
      const auto& data = e.at("data");
      const std::size_t expect =
          static_cast<std::size_t>(rows * cols) * (complex ? 2 : 1);
      if (!data.is_array() || data.size() != expect)
        throw ParseError("checkpoint: data length mismatch for '" + it.key() + "'");
      if (complex) {
        ComplexMatrix m(rows, cols);
        std::size_t pos = 0;
        for (Index i = 0; i < rows; ++i)
          for (Index jj = 0; jj < cols; ++jj) {
            const double re = data.at(pos++).get<double>();
            const double im = data.at(pos++).get<double>();
            m(i, jj) = Complex(re, im);
          }
        s.per_iteration[k].values[it.key()] = std::move(m);
      } else {
        RealMatrix m(rows, cols);
        std::size_t pos = 0;
        for (Index i = 0; i < rows; ++i)
          for (Index jj = 0; jj < cols; ++jj) m(i, jj) = data.at(pos++).get<double>();
        s.per_iteration[k].values[it.key()] = std::move(m);
      }
    }
  }
  return s;
}

inline void save_checkpoint(const std::string& path, const HyperSchedule& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("checkpoint: cannot open '" + path + "' for writing");
  out << schedule_to_json(s).dump(2) << "\n";
  if (!out) throw ParseError("checkpoint: write to '" + path + "' failed");
}

inline HyperSchedule load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("checkpoint: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint: invalid JSON in '" + path + "': " + e.what());
  }
  return schedule_from_json(j);
}

}  // namespace uopt
