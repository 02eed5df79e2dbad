#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "uopt/apga.hpp"
#include "uopt/larpca.hpp"
#include "uopt/rng.hpp"

namespace uopt {

// Seeding scheme: sample t of a run with base seed s uses mt19937_64 seeded
// with mix_seed(s, t); draws are Box-Muller normals (rng.hpp), so datasets are
// reproducible bit-for-bit across standard libraries.

struct ChannelGenConfig {
  std::uint64_t seed = 0;
  int b_bands = 1;
  int n_rx = 1;
  int m_tx = 1;
  double sigma2 = 1.0;
  int count = 1;

  void validate() const {
    if (b_bands < 1 || n_rx < 1 || m_tx < 1 || count < 1)
      throw ParameterError("channel gen: dimensions and count must be positive");
    if (!(sigma2 > 0.0)) throw ParameterError("channel gen: sigma2 must be > 0");
  }
};

struct RpcaGenConfig {
  std::uint64_t seed = 0;
  int n1 = 1;
  int n2 = 1;
  int r = 1;
  double alpha = 0.0;
  int count = 1;

  void validate() const {
    if (n1 < 1 || n2 < 1 || count < 1)
      throw ParameterError("rpca gen: dimensions and count must be positive");
    if (r < 1 || r > std::min(n1, n2))
      throw ParameterError("rpca gen: rank out of range");
    if (!(alpha >= 0.0) || !(alpha < 1.0))
      throw ParameterError("rpca gen: alpha must be in [0, 1)");
  }
};

// i.i.d. CN(0,1) channels: each complex entry has variance 1 (components 1/2).
inline std::vector<ChannelSet> gen_channels(const ChannelGenConfig& cfg) {
  cfg.validate();
  std::vector<ChannelSet> out;
  out.reserve(cfg.count);
  const double comp = std::sqrt(0.5);
  for (int t = 0; t < cfg.count; ++t) {
    std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(t)));
    NormalSampler normal(rng);
    ChannelSet ch;
    ch.sigma2 = cfg.sigma2;
    ch.h.resize(cfg.b_bands);
    for (auto& h : ch.h) {
      h.resize(cfg.n_rx, cfg.m_tx);
      for (Index i = 0; i < h.rows(); ++i)
        for (Index j = 0; j < h.cols(); ++j) {
          const double re = comp * normal();
          const double im = comp * normal();
          h(i, j) = Complex(re, im);
        }
    }
    out.push_back(std::move(ch));
  }
  return out;
}

// Low-rank part V* = A B^T with A, B i.i.d. standard normal scaled by the
// matching dimension^(-1/4); sparse part supported on round(alpha n1 n2)
// distinct positions with N(0, rms(V*)) values.
inline std::vector<RpcaInstance> gen_rpca(const RpcaGenConfig& cfg) {
  cfg.validate();
  std::vector<RpcaInstance> out;
  out.reserve(cfg.count);
  const std::size_t cells = static_cast<std::size_t>(cfg.n1) * cfg.n2;
  const std::size_t support =
      static_cast<std::size_t>(std::llround(cfg.alpha * static_cast<double>(cells)));
  for (int t = 0; t < cfg.count; ++t) {
    std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(t)));
    NormalSampler normal(rng);
    RealMatrix a(cfg.n1, cfg.r), b(cfg.n2, cfg.r);
    const double sa = std::pow(static_cast<double>(cfg.n1), -0.25);
    const double sb = std::pow(static_cast<double>(cfg.n2), -0.25);
    for (Index i = 0; i < a.rows(); ++i)
      for (Index j = 0; j < a.cols(); ++j) a(i, j) = sa * normal();
    for (Index i = 0; i < b.rows(); ++i)
      for (Index j = 0; j < b.cols(); ++j) b(i, j) = sb * normal();

    RpcaInstance inst;
    inst.r = cfg.r;
    inst.alpha = cfg.alpha;
    inst.v_star = a * b.transpose();
    const double rms = inst.v_star->norm() / std::sqrt(static_cast<double>(cells));

    RealMatrix y = RealMatrix::Zero(cfg.n1, cfg.n2);
    // Partial Fisher-Yates over linear indices picks the support without
    // replacement.
    std::vector<std::uint32_t> idx(cells);
    for (std::size_t i = 0; i < cells; ++i) idx[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < support; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (cells - i));
      std::swap(idx[i], idx[j]);
      const Index row = static_cast<Index>(idx[i] / cfg.n2);
      const Index col = static_cast<Index>(idx[i] % cfg.n2);
      y(row, col) = rms * normal();
    }
    inst.y_star = std::move(y);
    inst.x = *inst.v_star + *inst.y_star;
    inst.validate();
    out.push_back(std::move(inst));
  }
  return out;
}

// ---- matrix CSV (row-major, no header) ------------------------------------

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& tok, const std::string& path,
                           std::size_t line) {
  const char* s = tok.c_str();
  char* end = nullptr;
  const double v = std::strtod(s, &end);
  if (end == s || *end != '\0')
    throw ParseError(path + ":" + std::to_string(line) + ": non-numeric token '" +
                     tok + "'");
  return v;
}

}  // namespace detail

inline void save_matrix_csv(const RealMatrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << detail::format_double(m(i, j));
    }
    out << '\n';
  }
  if (!out) throw ParseError("write to '" + path + "' failed");
}

inline RealMatrix load_matrix_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ','))
      row.push_back(detail::parse_double(tok, path, lineno));
    if (row.empty())
      throw ParseError(path + ":" + std::to_string(lineno) + ": empty row");
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError(path + ":" + std::to_string(lineno) + ": ragged row (" +
                       std::to_string(row.size()) + " vs " +
                       std::to_string(rows.front().size()) + " columns)");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path + ": empty file");
  RealMatrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return m;
}

// ---- channel CSV (header `band,row,col,re,im`) -----------------------------

inline void save_channels_csv(const ChannelSet& ch, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << "band,row,col,re,im\n";
  for (int b = 0; b < ch.bands(); ++b)
    for (Index i = 0; i < ch.h[b].rows(); ++i)
      for (Index j = 0; j < ch.h[b].cols(); ++j)
        out << b << ',' << i << ',' << j << ','
            << detail::format_double(ch.h[b](i, j).real()) << ','
            << detail::format_double(ch.h[b](i, j).imag()) << '\n';
  if (!out) throw ParseError("write to '" + path + "' failed");
}

// Loads a complete (band,row,col) grid; sigma2 is carried by the manifest, not
// the file, and must be supplied by the caller.
inline ChannelSet load_channels_csv(const std::string& path, double sigma2) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "band,row,col,re,im")
    throw ParseError(path + ":1: expected header 'band,row,col,re,im'");

  struct Entry {
    int b, i, j;
    double re, im;
  };
  std::vector<Entry> entries;
  int max_b = -1, max_i = -1, max_j = -1;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> toks;
    while (std::getline(ss, tok, ',')) toks.push_back(tok);
    if (toks.size() != 5)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected 5 fields");
    Entry e;
    e.b = static_cast<int>(detail::parse_double(toks[0], path, lineno));
    e.i = static_cast<int>(detail::parse_double(toks[1], path, lineno));
    e.j = static_cast<int>(detail::parse_double(toks[2], path, lineno));
    e.re = detail::parse_double(toks[3], path, lineno);
    e.im = detail::parse_double(toks[4], path, lineno);
    if (e.b < 0 || e.i < 0 || e.j < 0)
      throw ParseError(path + ":" + std::to_string(lineno) + ": negative index");
    max_b = std::max(max_b, e.b);
    max_i = std::max(max_i, e.i);
    max_j = std::max(max_j, e.j);
    entries.push_back(e);
  }
  if (entries.empty()) throw ParseError(path + ": no channel entries");

  ChannelSet ch;
  ch.sigma2 = sigma2;
  ch.h.assign(max_b + 1, ComplexMatrix::Zero(max_i + 1, max_j + 1));
  std::vector<char> seen(static_cast<std::size_t>(max_b + 1) * (max_i + 1) * (max_j + 1), 0);
  for (const auto& e : entries) {
    const std::size_t flat = (static_cast<std::size_t>(e.b) * (max_i + 1) + e.i) *
                                 (max_j + 1) + e.j;
    if (seen[flat]) throw ParseError(path + ": duplicate entry for band " +
                                     std::to_string(e.b));
    seen[flat] = 1;
    ch.h[e.b](e.i, e.j) = Complex(e.re, e.im);
  }
  for (char s : seen)
    if (!s) throw ParseError(path + ": incomplete channel grid");
  ch.validate();
  return ch;
}

// ---- instance manifests ----------------------------------------------------

inline nlohmann::json rpca_manifest(const std::string& x_path,
                                    const std::optional<std::string>& v_path,
                                    const std::optional<std::string>& y_path,
                                    int r, double alpha) {
  nlohmann::json j;
  j["x"] = x_path;
  if (v_path) j["v_star"] = *v_path;
  if (y_path) j["y_star"] = *y_path;
  j["r"] = r;
  j["alpha"] = alpha;
  return j;
}

inline RpcaInstance load_rpca_manifest(const nlohmann::json& j,
                                       const std::string& base_dir) {
  for (const char* key : {"x", "r", "alpha"})
    if (!j.contains(key))
      throw ParseError(std::string("instance manifest missing '") + key + "'");
  auto resolve = [&](const std::string& p) {
    return (!p.empty() && p.front() == '/') ? p : base_dir + "/" + p;
  };
  RpcaInstance inst;
  inst.x = load_matrix_csv(resolve(j.at("x").get<std::string>()));
  if (j.contains("v_star"))
    inst.v_star = load_matrix_csv(resolve(j.at("v_star").get<std::string>()));
  if (j.contains("y_star"))
    inst.y_star = load_matrix_csv(resolve(j.at("y_star").get<std::string>()));
  inst.r = j.at("r").get<int>();
  inst.alpha = j.at("alpha").get<double>();
  inst.validate();
  return inst;
}

}  // namespace uopt
