#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uopt/checkpoint.hpp"
#include "uopt/datagen.hpp"
#include "uopt/gd_quadratic.hpp"
#include "uopt/risk.hpp"

namespace uopt {

using nlohmann::json;

// ---- config schema ----------------------------------------------------------

namespace detail {

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

inline double get_number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_number())
    throw ConfigError(where + ": missing numeric '" + std::string(key) + "'");
  return j.at(key).get<double>();
}

inline int get_int(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_number_integer())
    throw ConfigError(where + ": missing integer '" + std::string(key) + "'");
  return j.at(key).get<int>();
}

inline std::set<int> get_index_set(const json& j, const char* key, int k_total,
                                   const std::string& where) {
  std::set<int> out;
  if (!j.contains(key)) return out;
  if (!j.at(key).is_array())
    throw ConfigError(where + ": '" + std::string(key) + "' must be an array");
  for (const auto& v : j.at(key)) {
    if (!v.is_number_integer())
      throw ConfigError(where + ": '" + std::string(key) + "' entries must be integers");
    const int k = v.get<int>();
    if (k < 0 || k >= k_total)
      throw ConfigError(where + ": index " + std::to_string(k) + " outside [0, " +
                        std::to_string(k_total) + ")");
    out.insert(k);
  }
  return out;
}

}  // namespace detail

enum class TaskKind { apga, larpca, gd_quadratic };

struct DataSource {
  bool is_gen = false;
  json gen;              // task-specific generator settings
  std::string manifest;  // dataset manifest path otherwise
};

struct ExperimentConfig {
  TaskKind task = TaskKind::larpca;
  std::string out = "out";
  int k_total = 0;
  json dims;
  json approx;
  json train;
  std::optional<DataSource> train_data;
  std::optional<DataSource> test_data;
  std::optional<DataSource> gen_data;
  json suite;  // gd-quadratic
  json raw;    // resolved document, hashed into reports
};

namespace detail {

inline DataSource parse_source(const json& j, const std::string& where) {
  reject_unknown_keys(j, {"gen", "manifest"}, where);
  DataSource src;
  const bool has_gen = j.contains("gen");
  const bool has_manifest = j.contains("manifest");
  if (has_gen == has_manifest)
    throw ConfigError(where + ": provide exactly one of 'gen' or 'manifest'");
  if (has_gen) {
    src.is_gen = true;
    src.gen = j.at("gen");
  } else {
    if (!j.at("manifest").is_string())
      throw ConfigError(where + ": 'manifest' must be a path string");
    src.manifest = j.at("manifest").get<std::string>();
  }
  return src;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const json& doc) {
  detail::reject_unknown_keys(
      doc, {"task", "out", "k_total", "dims", "approx", "train", "data", "suite"},
      "config");
  ExperimentConfig cfg;
  if (!doc.contains("task") || !doc.at("task").is_string())
    throw ConfigError("config: missing 'task'");
  const std::string task = doc.at("task").get<std::string>();
  if (task == "apga")
    cfg.task = TaskKind::apga;
  else if (task == "larpca")
    cfg.task = TaskKind::larpca;
  else if (task == "gd-quadratic")
    cfg.task = TaskKind::gd_quadratic;
  else
    throw ConfigError("config: unknown task '" + task + "'");
  if (doc.contains("out")) {
    if (!doc.at("out").is_string()) throw ConfigError("config: 'out' must be a string");
    cfg.out = doc.at("out").get<std::string>();
  }

  if (cfg.task == TaskKind::gd_quadratic) {
    if (!doc.contains("suite")) throw ConfigError("config: gd-quadratic needs 'suite'");
    cfg.suite = doc.at("suite");
    detail::reject_unknown_keys(
        cfg.suite,
        {"trials", "seed", "dims", "cond_min", "cond_max", "gamma_scale_min",
         "gamma_scale_max", "k_min", "k_max", "eta_floor", "inject_frac_min",
         "inject_frac_max", "delta_rel_max"},
        "config.suite");
    if (cfg.suite.contains("gamma_scale_max") &&
        !(cfg.suite.at("gamma_scale_max").get<double>() < 1.0))
      throw ConfigError("config.suite: gamma_scale_max must be < 1 (steps must stay below 1/L)");
    if (cfg.suite.contains("gamma_scale_min") &&
        !(cfg.suite.at("gamma_scale_min").get<double>() > 0.0))
      throw ConfigError("config.suite: gamma_scale_min must be > 0");
    cfg.raw = doc;
    return cfg;
  }

  if (!doc.contains("k_total")) throw ConfigError("config: missing 'k_total'");
  cfg.k_total = detail::get_int(doc, "k_total", "config");
  if (cfg.k_total < 0) throw ConfigError("config: k_total must be >= 0");
  if (!doc.contains("dims")) throw ConfigError("config: missing 'dims'");
  cfg.dims = doc.at("dims");
  if (cfg.task == TaskKind::apga) {
    detail::reject_unknown_keys(cfg.dims, {"bands", "n_rx", "l_chains", "m_tx"},
                                "config.dims");
    for (const char* k : {"bands", "n_rx", "l_chains", "m_tx"})
      if (detail::get_int(cfg.dims, k, "config.dims") < 1)
        throw ConfigError("config.dims: '" + std::string(k) + "' must be >= 1");
  } else {
    detail::reject_unknown_keys(cfg.dims, {"n1", "n2", "r", "alpha"}, "config.dims");
    const int n1 = detail::get_int(cfg.dims, "n1", "config.dims");
    const int n2 = detail::get_int(cfg.dims, "n2", "config.dims");
    const int r = detail::get_int(cfg.dims, "r", "config.dims");
    if (n1 < 1 || n2 < 1) throw ConfigError("config.dims: sizes must be >= 1");
    if (r < 1 || r > std::min(n1, n2)) throw ConfigError("config.dims: rank out of range");
    if (cfg.dims.contains("alpha")) {
      const double alpha = detail::get_number(cfg.dims, "alpha", "config.dims");
      if (!(alpha >= 0.0) || !(alpha < 1.0))
        throw ConfigError("config.dims: alpha must be in [0, 1)");
    }
  }

  cfg.approx = doc.contains("approx") ? doc.at("approx") : json::object();
  if (cfg.task == TaskKind::apga)
    detail::reject_unknown_keys(cfg.approx, {"k_a", "k_d"}, "config.approx");
  else
    detail::reject_unknown_keys(cfg.approx, {"k_l", "k_r"}, "config.approx");

  cfg.train = doc.contains("train") ? doc.at("train") : json::object();
  detail::reject_unknown_keys(cfg.train,
                              {"learning_rate", "epochs", "batch_size", "seed",
                               "grad_mode", "momentum", "fd_step", "supervised",
                               "lambda_s", "init"},
                              "config.train");
  if (cfg.train.contains("init")) {
    detail::reject_unknown_keys(
        cfg.train.at("init"),
        {"mu_a", "mu_d", "eta", "zeta0", "zeta0_scale", "zeta_decay"},
        "config.train.init");
  }

  if (doc.contains("data")) {
    const json& d = doc.at("data");
    detail::reject_unknown_keys(d, {"gen", "train", "test"}, "config.data");
    if (d.contains("gen")) {
      DataSource g;
      g.is_gen = true;
      g.gen = d.at("gen");
      cfg.gen_data = g;
    }
    if (d.contains("train"))
      cfg.train_data = detail::parse_source(d.at("train"), "config.data.train");
    if (d.contains("test"))
      cfg.test_data = detail::parse_source(d.at("test"), "config.data.test");
  }
  cfg.raw = doc;
  return cfg;
}

// ---- generator settings -------------------------------------------------------

inline ChannelGenConfig parse_channel_gen(const json& g, const ExperimentConfig& cfg,
                                          const std::string& where) {
  detail::reject_unknown_keys(g, {"seed", "count", "sigma2", "snr_db"}, where);
  ChannelGenConfig c;
  c.b_bands = cfg.dims.at("bands").get<int>();
  c.n_rx = cfg.dims.at("n_rx").get<int>();
  c.m_tx = cfg.dims.at("m_tx").get<int>();
  c.seed = g.contains("seed") ? g.at("seed").get<std::uint64_t>() : 0;
  c.count = g.contains("count") ? g.at("count").get<int>() : 1;
  if (g.contains("sigma2") && g.contains("snr_db"))
    throw ConfigError(where + ": give either 'sigma2' or 'snr_db'");
  if (g.contains("sigma2")) {
    c.sigma2 = g.at("sigma2").get<double>();
  } else if (g.contains("snr_db")) {
    // SNR = 1/(N sigma2)
    const double snr = std::pow(10.0, g.at("snr_db").get<double>() / 10.0);
    c.sigma2 = 1.0 / (static_cast<double>(c.n_rx) * snr);
  }
  try {
    c.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return c;
}

inline RpcaGenConfig parse_rpca_gen(const json& g, const ExperimentConfig& cfg,
                                    const std::string& where) {
  detail::reject_unknown_keys(g, {"seed", "count"}, where);
  RpcaGenConfig c;
  c.n1 = cfg.dims.at("n1").get<int>();
  c.n2 = cfg.dims.at("n2").get<int>();
  c.r = cfg.dims.at("r").get<int>();
  c.alpha = cfg.dims.contains("alpha") ? cfg.dims.at("alpha").get<double>() : 0.0;
  c.seed = g.contains("seed") ? g.at("seed").get<std::uint64_t>() : 0;
  c.count = g.contains("count") ? g.at("count").get<int>() : 1;
  try {
    c.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return c;
}

// ---- approx schedules -----------------------------------------------------------

inline ApgaApprox parse_apga_approx(const ExperimentConfig& cfg) {
  ApgaApprox a;
  const int bands = cfg.dims.at("bands").get<int>();
  a.k_a = detail::get_index_set(cfg.approx, "k_a", cfg.k_total, "config.approx");
  a.k_d.assign(bands, {});
  if (cfg.approx.contains("k_d")) {
    const json& kd = cfg.approx.at("k_d");
    if (!kd.is_array() || static_cast<int>(kd.size()) != bands)
      throw ConfigError("config.approx: 'k_d' must list one index array per band");
    for (int b = 0; b < bands; ++b) {
      json holder;
      holder["k"] = kd.at(b);
      a.k_d[b] = detail::get_index_set(holder, "k", cfg.k_total, "config.approx.k_d");
    }
  }
  return a;
}

inline LarpcaApprox parse_larpca_approx(const ExperimentConfig& cfg) {
  LarpcaApprox a;
  a.k_l = detail::get_index_set(cfg.approx, "k_l", cfg.k_total, "config.approx");
  a.k_r = detail::get_index_set(cfg.approx, "k_r", cfg.k_total, "config.approx");
  return a;
}

// ---- datasets -----------------------------------------------------------------

inline Dataset<ChannelSet, HybridPrecoder> load_channel_dataset(
    const ExperimentConfig& cfg, const DataSource& src) {
  Dataset<ChannelSet, HybridPrecoder> data;
  data.kind = DatasetKind::unsupervised;
  if (src.is_gen) {
    for (auto& ch : gen_channels(parse_channel_gen(src.gen, cfg, "config.data")))
      data.samples.emplace_back(std::move(ch), std::nullopt);
    return data;
  }
  std::ifstream in(src.manifest);
  if (!in) throw ParseError("cannot open '" + src.manifest + "'");
  json m;
  in >> m;
  if (m.value("kind", "") != "channels")
    throw ConfigError("dataset manifest '" + src.manifest + "' is not a channel set");
  const double sigma2 = m.at("config").at("sigma2").get<double>();
  const std::string base = std::filesystem::path(src.manifest).parent_path().string();
  for (const auto& rel : m.at("samples")) {
    const std::string p = rel.get<std::string>();
    const std::string full = (!p.empty() && p.front() == '/') ? p : base + "/" + p;
    data.samples.emplace_back(load_channels_csv(full, sigma2), std::nullopt);
  }
  return data;
}

inline Dataset<RpcaInstance, RealMatrix> load_rpca_dataset(const ExperimentConfig& cfg,
                                                           const DataSource& src,
                                                           bool supervised) {
  Dataset<RpcaInstance, RealMatrix> data;
  data.kind = supervised ? DatasetKind::supervised : DatasetKind::unsupervised;
  std::vector<RpcaInstance> instances;
  if (src.is_gen) {
    instances = gen_rpca(parse_rpca_gen(src.gen, cfg, "config.data"));
  } else {
    std::ifstream in(src.manifest);
    if (!in) throw ParseError("cannot open '" + src.manifest + "'");
    json m;
    in >> m;
    if (m.value("kind", "") != "rpca")
      throw ConfigError("dataset manifest '" + src.manifest + "' is not an rpca set");
    const std::string base = std::filesystem::path(src.manifest).parent_path().string();
    for (const auto& rel : m.at("samples")) {
      const std::string p = rel.get<std::string>();
      const std::string full = (!p.empty() && p.front() == '/') ? p : base + "/" + p;
      std::ifstream mi(full);
      if (!mi) throw ParseError("cannot open '" + full + "'");
      json ij;
      mi >> ij;
      instances.push_back(
          load_rpca_manifest(ij, std::filesystem::path(full).parent_path().string()));
    }
  }
  for (auto& inst : instances) {
    std::optional<RealMatrix> label;
    if (inst.v_star) label = *inst.v_star;
    if (supervised && !label)
      throw ConfigError("supervised training requires ground-truth v_star");
    data.samples.emplace_back(std::move(inst), std::move(label));
  }
  return data;
}

// ---- schedule initialization ------------------------------------------------

inline HyperSchedule apga_init_schedule(const ExperimentConfig& cfg) {
  const json init = cfg.train.contains("init") ? cfg.train.at("init") : json::object();
  const double mu_a = init.value("mu_a", 0.01);
  const double mu_d = init.value("mu_d", 0.01);
  const int bands = cfg.dims.at("bands").get<int>();
  return apga_schedule(apga_broadcast_params(
      cfg.k_total, bands, cfg.dims.at("n_rx").get<int>(),
      cfg.dims.at("l_chains").get<int>(), cfg.dims.at("m_tx").get<int>(), mu_a, mu_d));
}

inline double median_abs_entry(const RealMatrix& m) {
  std::vector<double> v(m.data(), m.data() + m.size());
  for (auto& x : v) x = std::abs(x);
  auto mid = v.begin() + v.size() / 2;
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  auto lo_it = std::max_element(v.begin(), mid);
  return 0.5 * (hi + *lo_it);
}

inline HyperSchedule larpca_init_schedule(const ExperimentConfig& cfg,
                                          const Dataset<RpcaInstance, RealMatrix>& data) {
  const json init = cfg.train.contains("init") ? cfg.train.at("init") : json::object();
  const double eta = init.value("eta", 0.5);
  const double decay = init.value("zeta_decay", 0.8);
  double zeta0;
  if (!init.contains("zeta0") || init.at("zeta0").is_string()) {
    if (init.contains("zeta0") && init.at("zeta0").get<std::string>() != "auto")
      throw ConfigError("config.train.init: zeta0 must be a number or \"auto\"");
    // default: training-set average of the median absolute entry
    double acc = 0.0;
    for (const auto& [inst, label] : data.samples) acc += median_abs_entry(inst.x);
    zeta0 = data.samples.empty() ? 0.0 : acc / static_cast<double>(data.samples.size());
  } else {
    zeta0 = init.at("zeta0").get<double>();
    if (!(zeta0 >= 0.0)) throw ConfigError("config.train.init: zeta0 must be >= 0");
  }
  const double zeta0_scale = init.value("zeta0_scale", 1.0);
  if (!(zeta0_scale > 0.0))
    throw ConfigError("config.train.init: zeta0_scale must be > 0");
  zeta0 *= zeta0_scale;
  const int n1 = cfg.dims.at("n1").get<int>();
  const int n2 = cfg.dims.at("n2").get<int>();
  const int r = cfg.dims.at("r").get<int>();
  LarpcaParams p;
  p.eta_l.assign(cfg.k_total, RealMatrix::Constant(n1, r, eta));
  p.eta_r.assign(cfg.k_total, RealMatrix::Constant(n2, r, eta));
  p.zeta.resize(cfg.k_total + 1);
  for (int k = 0; k <= cfg.k_total; ++k) p.zeta[k] = zeta0 * std::pow(decay, k);
  return larpca_schedule(p);
}

inline TrainConfig parse_train_config(const ExperimentConfig& cfg) {
  TrainConfig t;
  t.learning_rate = cfg.train.value("learning_rate", 0.01);
  t.epochs = cfg.train.value("epochs", 1);
  t.batch_size = cfg.train.value("batch_size", 1);
  t.seed = cfg.train.value("seed", std::uint64_t{0});
  t.momentum = cfg.train.value("momentum", 0.0);
  t.fd_step = cfg.train.value("fd_step", 1e-5);
  const std::string mode = cfg.train.value("grad_mode", "finite-difference");
  if (mode == "finite-difference")
    t.grad_mode = GradMode::finite_difference;
  else if (mode == "analytic-adjoint")
    t.grad_mode = GradMode::analytic_adjoint;
  else
    throw ConfigError("config.train: unknown grad_mode '" + mode + "'");
  if (cfg.task == TaskKind::larpca) t.clamp_nonnegative = {"zeta", "zeta0"};
  if (t.epochs < 0) throw ConfigError("config.train: epochs must be >= 0");
  if (t.batch_size < 1) throw ConfigError("config.train: batch_size must be >= 1");
  return t;
}

// ---- hashing / report helpers -------------------------------------------------

inline std::string config_hash(const json& doc) {
  const std::string s = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  if (!out) throw ParseError("write to '" + path + "' failed");
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("invalid JSON in '" + path + "': " + e.what());
  }
  return j;
}

struct Summary {
  double mean = 0.0;
  double stdev = 0.0;
  double median = 0.0;
};

inline Summary summarize(std::vector<double> v) {
  Summary s;
  if (v.empty()) return s;
  const double n = static_cast<double>(v.size());
  for (double x : v) s.mean += x;
  s.mean /= n;
  for (double x : v) s.stdev += (x - s.mean) * (x - s.mean);
  s.stdev = v.size() > 1 ? std::sqrt(s.stdev / (n - 1.0)) : 0.0;
  std::sort(v.begin(), v.end());
  s.median = v.size() % 2 == 1 ? v[v.size() / 2]
                               : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  return s;
}

inline json summary_json(const Summary& s) {
  json j;
  j["mean"] = s.mean;
  j["std"] = s.stdev;
  j["median"] = s.median;
  return j;
}

}  // namespace uopt
