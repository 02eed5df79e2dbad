#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "uopt/experiment.hpp"

namespace uopt {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDiverged = 3;
inline constexpr int kExitViolation = 4;

struct CliOptions {
  std::string config_path;
  std::string out_override;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
};

namespace detail {

inline std::string sample_name(const char* stem, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04d.%s", stem, i, ext);
  return buf;
}

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << body;
  if (!out) throw ParseError("write to '" + path + "' failed");
}

}  // namespace detail

// Applies --seed/--out overrides onto the raw document before parsing, so the
// hash recorded in reports covers exactly what ran.
inline json resolve_config(json doc, const CliOptions& opt) {
  if (opt.seed) {
    if (doc.contains("suite")) doc["suite"]["seed"] = *opt.seed;
    if (doc.contains("train")) doc["train"]["seed"] = *opt.seed;
    if (doc.contains("data")) {
      for (const char* sec : {"gen", "train", "test"}) {
        if (doc["data"].contains(sec) && doc["data"][sec].contains("gen"))
          doc["data"][sec]["gen"]["seed"] = *opt.seed;
      }
      if (doc["data"].contains("gen") && doc["data"]["gen"].is_object() &&
          !doc["data"]["gen"].contains("manifest") && !doc["data"]["gen"].contains("gen"))
        doc["data"]["gen"]["seed"] = *opt.seed;
    }
  }
  if (!opt.out_override.empty()) doc["out"] = opt.out_override;
  return doc;
}

// ---- gen ---------------------------------------------------------------------

inline int cmd_gen(const ExperimentConfig& cfg) {
  if (!cfg.gen_data)
    throw ConfigError("gen: config needs data.gen");
  if (cfg.task == TaskKind::gd_quadratic)
    throw ConfigError("gen: no dataset generator for gd-quadratic");
  std::filesystem::create_directories(cfg.out);
  json manifest;
  manifest["version"] = kToolkitVersion;
  manifest["config_hash"] = config_hash(cfg.raw);
  json samples = json::array();
  if (cfg.task == TaskKind::apga) {
    const ChannelGenConfig gc = parse_channel_gen(cfg.gen_data->gen, cfg, "config.data.gen");
    const auto sets = gen_channels(gc);
    for (int i = 0; i < static_cast<int>(sets.size()); ++i) {
      const std::string name = detail::sample_name("ch", i, "csv");
      save_channels_csv(sets[i], cfg.out + "/" + name);
      samples.push_back(name);
    }
    manifest["kind"] = "channels";
    json c;
    c["seed"] = gc.seed;
    c["bands"] = gc.b_bands;
    c["n_rx"] = gc.n_rx;
    c["m_tx"] = gc.m_tx;
    c["sigma2"] = gc.sigma2;
    c["count"] = gc.count;
    manifest["config"] = c;
  } else {
    const RpcaGenConfig gc = parse_rpca_gen(cfg.gen_data->gen, cfg, "config.data.gen");
    const auto insts = gen_rpca(gc);
    for (int i = 0; i < static_cast<int>(insts.size()); ++i) {
      const RpcaInstance& inst = insts[i];
      const std::string x_name = detail::sample_name("x", i, "csv");
      const std::string v_name = detail::sample_name("v_star", i, "csv");
      const std::string y_name = detail::sample_name("y_star", i, "csv");
      save_matrix_csv(inst.x, cfg.out + "/" + x_name);
      save_matrix_csv(*inst.v_star, cfg.out + "/" + v_name);
      save_matrix_csv(*inst.y_star, cfg.out + "/" + y_name);
      const json ij = rpca_manifest(x_name, v_name, y_name, inst.r, inst.alpha);
      const std::string inst_name = detail::sample_name("inst", i, "json");
      write_json_file(cfg.out + "/" + inst_name, ij);
      samples.push_back(inst_name);
    }
    manifest["kind"] = "rpca";
    json c;
    c["seed"] = gc.seed;
    c["n1"] = gc.n1;
    c["n2"] = gc.n2;
    c["r"] = gc.r;
    c["alpha"] = gc.alpha;
    c["count"] = gc.count;
    manifest["config"] = c;
  }
  manifest["samples"] = samples;
  write_json_file(cfg.out + "/dataset.json", manifest);
  std::cout << "wrote " << samples.size() << " samples to " << cfg.out << "\n";
  return kExitOk;
}

// ---- train -------------------------------------------------------------------

namespace detail {

inline void write_risk_csv(const std::string& path, const std::vector<double>& risks) {
  std::string body = "epoch,risk\n";
  for (int e = 0; e < static_cast<int>(risks.size()); ++e)
    body += std::to_string(e + 1) + "," + format_double(risks[e]) + "\n";
  write_text_file(path, body);
}

inline HyperSchedule load_resume(const std::string& path, const HyperSchedule& shape_ref) {
  const HyperSchedule loaded = load_checkpoint(path);
  if (!loaded.same_shape(shape_ref))
    throw ConfigError("checkpoint '" + path + "' does not match the configured dimensions");
  return loaded;
}

}  // namespace detail

template <typename Solver, typename Context, typename Label>
int run_training(const ExperimentConfig& cfg, const Solver& solver,
                 const Dataset<Context, Label>& data, const HyperSchedule& init,
                 const CliOptions& opt) {
  HyperSchedule start = init;
  if (!opt.checkpoint.empty()) start = detail::load_resume(opt.checkpoint, init);
  const TrainConfig tc = parse_train_config(cfg);
  const TrainResult result = sgd_train(solver, start, data, tc);
  std::filesystem::create_directories(cfg.out);
  save_checkpoint(cfg.out + "/checkpoint.json", result.params);
  detail::write_risk_csv(cfg.out + "/train_risk.csv", result.epoch_risks);
  json report;
  report["version"] = kToolkitVersion;
  report["config_hash"] = config_hash(cfg.raw);
  report["task"] = cfg.raw.at("task");
  report["final_risk"] = result.final_risk;
  report["epochs"] = tc.epochs;
  report["param_count"] = static_cast<std::int64_t>(pack_schedule(result.params).size());
  report["aborted"] = result.aborted;
  if (result.aborted) report["diagnostic"] = result.diagnostic;
  write_json_file(cfg.out + "/train_report.json", report);
  if (result.aborted) {
    std::cerr << "training diverged: " << result.diagnostic << "\n";
    return kExitDiverged;
  }
  std::cout << "final risk " << result.final_risk << " -> " << cfg.out
            << "/checkpoint.json\n";
  return kExitOk;
}

inline int cmd_train(const ExperimentConfig& cfg, const CliOptions& opt) {
  if (cfg.task == TaskKind::gd_quadratic)
    throw ConfigError("train: gd-quadratic has no trainable schedule; use prop-check");
  if (!cfg.train_data) throw ConfigError("train: config needs data.train");
  if (cfg.k_total < 1) throw ConfigError("train: k_total must be >= 1");
  if (cfg.task == TaskKind::apga) {
    if (cfg.train.value("supervised", false))
      throw ConfigError("train: beamforming task has no supervised labels");
    if (cfg.train.value("grad_mode", "finite-difference") != "finite-difference")
      throw ConfigError("train: beamforming task supports finite-difference only");
    ApgaSolver solver;
    solver.approx = parse_apga_approx(cfg);
    const auto data = load_channel_dataset(cfg, *cfg.train_data);
    if (data.samples.empty()) throw ConfigError("train: empty training set");
    return run_training(cfg, solver, data, apga_init_schedule(cfg), opt);
  }
  LarpcaSolver solver;
  solver.approx = parse_larpca_approx(cfg);
  solver.lambda_s = cfg.train.value("lambda_s", 0.1);
  const bool supervised = cfg.train.value("supervised", false);
  const auto data = load_rpca_dataset(cfg, *cfg.train_data, supervised);
  if (data.samples.empty()) throw ConfigError("train: empty training set");
  return run_training(cfg, solver, data, larpca_init_schedule(cfg, data), opt);
}

// ---- eval --------------------------------------------------------------------

inline int cmd_eval(const ExperimentConfig& cfg, const CliOptions& opt) {
  if (cfg.task == TaskKind::gd_quadratic)
    throw ConfigError("eval: gd-quadratic is checked via prop-check");
  if (!cfg.test_data) throw ConfigError("eval: config needs data.test");
  if (cfg.k_total < 1) throw ConfigError("eval: k_total must be >= 1");
  std::filesystem::create_directories(cfg.out);
  json report;
  report["version"] = kToolkitVersion;
  report["config_hash"] = config_hash(cfg.raw);
  report["task"] = cfg.raw.at("task");
  json traces = json::array();

  if (cfg.task == TaskKind::apga) {
    const ApgaApprox approx = parse_apga_approx(cfg);
    const auto data = load_channel_dataset(cfg, *cfg.test_data);
    if (data.samples.empty()) throw ConfigError("eval: empty test set");
    HyperSchedule sched = apga_init_schedule(cfg);
    if (!opt.checkpoint.empty()) sched = detail::load_resume(opt.checkpoint, sched);
    const ApgaParams params =
        apga_params_from_schedule(sched, cfg.dims.at("bands").get<int>());
    std::vector<double> rates;
    for (int i = 0; i < static_cast<int>(data.samples.size()); ++i) {
      const ApgaRunResult run =
          apga_run(data.samples[i].first, params, approx, cfg.k_total);
      rates.push_back(run.rate_trace.back());
      std::string body = "k,sum_rate\n";
      for (int k = 0; k < static_cast<int>(run.rate_trace.size()); ++k)
        body += std::to_string(k) + "," + detail::format_double(run.rate_trace[k]) + "\n";
      const std::string name = detail::sample_name("trace", i, "csv");
      detail::write_text_file(cfg.out + "/" + name, body);
      traces.push_back(name);
    }
    report["metrics"] = json{{"sum_rate", summary_json(summarize(rates))}};
    report["flops"] = apga_flops(data.samples[0].first.bands(),
                                 data.samples[0].first.n_rx(),
                                 cfg.dims.at("l_chains").get<int>(),
                                 data.samples[0].first.m_tx(), cfg.k_total, approx)
                          .to_json();
  } else {
    const LarpcaApprox approx = parse_larpca_approx(cfg);
    const auto data = load_rpca_dataset(cfg, *cfg.test_data, false);
    if (data.samples.empty()) throw ConfigError("eval: empty test set");
    HyperSchedule sched;
    if (!opt.checkpoint.empty()) {
      sched = detail::load_resume(opt.checkpoint, larpca_init_schedule(cfg, data));
    } else {
      sched = larpca_init_schedule(cfg, data);
    }
    const LarpcaParams params = larpca_params_from_schedule(sched);
    const double lambda_s = cfg.train.value("lambda_s", 0.1);
    std::vector<double> rec, rel, unsup;
    const int rank = cfg.dims.at("r").get<int>();
    for (int i = 0; i < static_cast<int>(data.samples.size()); ++i) {
      const RpcaInstance& inst = data.samples[i].first;
      const RealMatrix* truth = inst.v_star ? &*inst.v_star : nullptr;
      const LarpcaRunResult run = larpca_run(inst.x, params, approx, cfg.k_total,
                                             true, truth, rank);
      rec.push_back(recovery_error(run.v_hat, inst.x, inst.x.rows(), inst.x.cols()));
      unsup.push_back(unsup_rpca_loss(run.v_hat, run.y_hat, inst.x, lambda_s));
      if (truth) rel.push_back(rel_err_vs_truth(run.v_hat, *truth));
      std::string body = "k,objective,recovery_error,rel_err_vs_truth\n";
      for (const LarpcaTraceRow& row : run.trace) {
        body += std::to_string(row.k) + "," + detail::format_double(row.objective) +
                "," + detail::format_double(row.recovery_error) + ",";
        if (std::isfinite(row.rel_err_vs_truth))
          body += detail::format_double(row.rel_err_vs_truth);
        body += "\n";
      }
      const std::string name = detail::sample_name("trace", i, "csv");
      detail::write_text_file(cfg.out + "/" + name, body);
      traces.push_back(name);
    }
    json metrics;
    metrics["recovery_error"] = summary_json(summarize(rec));
    metrics["unsup_loss"] = summary_json(summarize(unsup));
    if (!rel.empty()) metrics["rel_err_vs_truth"] = summary_json(summarize(rel));
    report["metrics"] = metrics;
    report["flops"] = larpca_flops(cfg.dims.at("n1").get<int>(),
                                   cfg.dims.at("n2").get<int>(), rank, cfg.k_total,
                                   approx)
                          .to_json();
  }
  report["traces"] = traces;
  report["checkpoint"] = opt.checkpoint.empty() ? "init" : opt.checkpoint;
  write_json_file(cfg.out + "/report.json", report);
  std::cout << report["metrics"].dump(2) << "\n";
  return kExitOk;
}

// ---- flops -------------------------------------------------------------------

inline int cmd_flops(const ExperimentConfig& cfg) {
  if (cfg.task == TaskKind::gd_quadratic)
    throw ConfigError("flops: no flop model for gd-quadratic");
  FlopReport rep;
  if (cfg.task == TaskKind::apga) {
    rep = apga_flops(cfg.dims.at("bands").get<int>(), cfg.dims.at("n_rx").get<int>(),
                     cfg.dims.at("l_chains").get<int>(), cfg.dims.at("m_tx").get<int>(),
                     cfg.k_total, parse_apga_approx(cfg));
  } else {
    rep = larpca_flops(cfg.dims.at("n1").get<int>(), cfg.dims.at("n2").get<int>(),
                       cfg.dims.at("r").get<int>(), cfg.k_total,
                       parse_larpca_approx(cfg));
  }
  json out = rep.to_json();
  out["version"] = kToolkitVersion;
  out["config_hash"] = config_hash(cfg.raw);
  std::filesystem::create_directories(cfg.out);
  write_json_file(cfg.out + "/flops.json", out);
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

// ---- prop-check --------------------------------------------------------------

inline int cmd_prop_check(const ExperimentConfig& cfg) {
  if (cfg.task != TaskKind::gd_quadratic)
    throw ConfigError("prop-check: set task to gd-quadratic");
  PropSuiteConfig sc;
  const json& s = cfg.suite;
  sc.trials = s.value("trials", sc.trials);
  sc.seed = s.value("seed", sc.seed);
  if (s.contains("dims")) sc.dims = s.at("dims").get<std::vector<int>>();
  sc.cond_min = s.value("cond_min", sc.cond_min);
  sc.cond_max = s.value("cond_max", sc.cond_max);
  sc.gamma_scale_min = s.value("gamma_scale_min", sc.gamma_scale_min);
  sc.gamma_scale_max = s.value("gamma_scale_max", sc.gamma_scale_max);
  sc.k_min = s.value("k_min", sc.k_min);
  sc.k_max = s.value("k_max", sc.k_max);
  sc.eta_floor = s.value("eta_floor", sc.eta_floor);
  sc.inject_frac_min = s.value("inject_frac_min", sc.inject_frac_min);
  sc.inject_frac_max = s.value("inject_frac_max", sc.inject_frac_max);
  sc.delta_rel_max = s.value("delta_rel_max", sc.delta_rel_max);
  if (sc.trials < 1) throw ConfigError("prop-check: trials must be >= 1");

  const PropSuiteResult p1 = prop1_suite(sc);
  const PropSuiteResult p2 = prop2_suite(sc, false);
  const PropSuiteResult p2z = prop2_suite(sc, true);
  auto block = [](const PropSuiteResult& r) {
    json j;
    j["trials"] = r.trials;
    j["violations"] = r.violations;
    j["max_ratio_to_bound"] = r.max_ratio;
    return j;
  };
  json report;
  report["version"] = kToolkitVersion;
  report["config_hash"] = config_hash(cfg.raw);
  report["descent_per_step"] = block(p1);
  report["error_bound"] = block(p2);
  report["error_bound_zero_injection"] = block(p2z);
  std::filesystem::create_directories(cfg.out);
  write_json_file(cfg.out + "/prop_report.json", report);
  std::cout << report.dump(2) << "\n";
  const bool bad = p1.violations > 0 || p2.violations > 0 || p2z.violations > 0 ||
                   p2z.max_ratio > 1.0;
  return bad ? kExitViolation : kExitOk;
}

// ---- dispatch ------------------------------------------------------------------

inline int run_command(const std::string& verb, const CliOptions& opt) {
  try {
    if (opt.config_path.empty()) throw ConfigError("missing --config");
    const json doc = resolve_config(load_json_file(opt.config_path), opt);
    const ExperimentConfig cfg = parse_experiment_config(doc);
    if (verb == "gen") return cmd_gen(cfg);
    if (verb == "train") return cmd_train(cfg, opt);
    if (verb == "eval") return cmd_eval(cfg, opt);
    if (verb == "flops") return cmd_flops(cfg);
    if (verb == "prop-check") return cmd_prop_check(cfg);
    throw ConfigError("unknown subcommand '" + verb + "'");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
}

}  // namespace uopt
