#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "uopt/checkpoint.hpp"
#include "uopt/datagen.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;
using Catch::Matchers::ContainsSubstring;

namespace {

struct CliRun {
  int code = -1;
  std::string output;
};

fs::path work_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "uopt_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

CliRun run_cli(const std::vector<std::string>& args) {
  const fs::path log = work_root() / "last_run.log";
  std::string cmd = UOPT_CLI_PATH;
  for (const auto& a : args) cmd += " '" + a + "'";
  cmd += " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

fs::path write_config(const std::string& name, const json& doc) {
  const fs::path p = work_root() / name;
  std::ofstream out(p);
  out << doc.dump(2) << "\n";
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json slurp_json(const fs::path& p) { return json::parse(slurp(p)); }

json channel_gen_config(const fs::path& out, std::uint64_t seed, int count) {
  json j;
  j["task"] = "apga";
  j["out"] = out.string();
  j["k_total"] = 1;
  j["dims"] = {{"bands", 2}, {"n_rx", 3}, {"l_chains", 4}, {"m_tx", 4}};
  j["data"]["gen"] = {{"seed", seed}, {"count", count}, {"sigma2", 0.5}};
  return j;
}

json rpca_gen_config(const fs::path& out, std::uint64_t seed, int count) {
  json j;
  j["task"] = "larpca";
  j["out"] = out.string();
  j["k_total"] = 1;
  j["dims"] = {{"n1", 12}, {"n2", 10}, {"r", 2}, {"alpha", 0.1}};
  j["data"]["gen"] = {{"seed", seed}, {"count", count}};
  return j;
}

}  // namespace

TEST_CASE("gen writes a channel dataset that loads back") {
  const fs::path out = work_root() / "chdata";
  const fs::path cfg = write_config("gen_ch.json", channel_gen_config(out, 7, 3));
  const CliRun r = run_cli({"gen", "--config", cfg.string()});
  CAPTURE(r.output);
  REQUIRE(r.code == 0);

  const json manifest = slurp_json(out / "dataset.json");
  CHECK(manifest.at("kind") == "channels");
  CHECK(manifest.at("config").at("sigma2") == 0.5);
  REQUIRE(manifest.at("samples").size() == 3);
  const auto ch = uopt::load_channels_csv(
      (out / manifest.at("samples")[0].get<std::string>()).string(), 0.5);
  CHECK(ch.bands() == 2);
  CHECK(ch.n_rx() == 3);
  CHECK(ch.m_tx() == 4);

  SECTION("reruns reproduce every artifact byte for byte") {
    const std::string before_manifest = slurp(out / "dataset.json");
    const std::string before_sample = slurp(out / "ch_0002.csv");
    const CliRun again = run_cli({"gen", "--config", cfg.string()});
    REQUIRE(again.code == 0);
    CHECK(slurp(out / "dataset.json") == before_manifest);
    CHECK(slurp(out / "ch_0002.csv") == before_sample);
  }
  SECTION("--seed overrides the configured seed") {
    const fs::path out2 = work_root() / "chdata_seeded";
    json doc = channel_gen_config(out2, 12345, 3);  // ignored seed
    const fs::path cfg2 = write_config("gen_ch_seeded.json", doc);
    const CliRun seeded = run_cli({"gen", "--config", cfg2.string(), "--seed", "7"});
    REQUIRE(seeded.code == 0);
    CHECK(slurp(out2 / "ch_0001.csv") == slurp(out / "ch_0001.csv"));
  }
}

TEST_CASE("gen writes robust-pca instances with ground truth") {
  const fs::path out = work_root() / "rpcadata";
  const fs::path cfg = write_config("gen_rpca.json", rpca_gen_config(out, 3, 4));
  const CliRun r = run_cli({"gen", "--config", cfg.string()});
  CAPTURE(r.output);
  REQUIRE(r.code == 0);

  const json manifest = slurp_json(out / "dataset.json");
  CHECK(manifest.at("kind") == "rpca");
  REQUIRE(manifest.at("samples").size() == 4);
  const auto inst = uopt::load_rpca_manifest(slurp_json(out / "inst_0000.json"),
                                             out.string());
  REQUIRE(inst.v_star.has_value());
  REQUIRE(inst.y_star.has_value());
  CHECK((inst.x - (*inst.v_star + *inst.y_star)).norm() == 0.0);
  CHECK(inst.r == 2);
}

TEST_CASE("training writes checkpoint, risk curve, and report") {
  const fs::path data = work_root() / "train_data";
  write_config("p_gen.json", rpca_gen_config(data, 11, 4));
  REQUIRE(run_cli({"gen", "--config", (work_root() / "p_gen.json").string()}).code == 0);

  const fs::path run1 = work_root() / "run1";
  json doc;
  doc["task"] = "larpca";
  doc["out"] = run1.string();
  doc["k_total"] = 3;
  doc["dims"] = {{"n1", 12}, {"n2", 10}, {"r", 2}, {"alpha", 0.1}};
  doc["data"]["train"] = {{"manifest", (data / "dataset.json").string()}};
  doc["data"]["test"] = {{"manifest", (data / "dataset.json").string()}};
  doc["train"] = {{"learning_rate", 0.05},
                  {"epochs", 3},
                  {"batch_size", 2},
                  {"seed", 1},
                  {"grad_mode", "analytic-adjoint"},
                  {"supervised", true},
                  {"init", {{"eta", 0.6}, {"zeta0", "auto"}, {"zeta_decay", 0.7}}}};
  const fs::path cfg = write_config("train_rpca.json", doc);

  const CliRun r = run_cli({"train", "--config", cfg.string()});
  CAPTURE(r.output);
  REQUIRE(r.code == 0);

  const json report = slurp_json(run1 / "train_report.json");
  CHECK(report.at("task") == "larpca");
  CHECK(report.at("epochs") == 3);
  CHECK(report.at("aborted") == false);
  CHECK(std::isfinite(report.at("final_risk").get<double>()));
  // eta_l (12x2) + eta_r (10x2) + zeta per iteration, plus zeta0
  CHECK(report.at("param_count") == 3 * (24 + 20 + 1) + 1);

  const std::string risks = slurp(run1 / "train_risk.csv");
  CHECK(risks.rfind("epoch,risk\n", 0) == 0);
  CHECK(std::count(risks.begin(), risks.end(), '\n') == 4);

  SECTION("training is deterministic") {
    const std::string ckpt = slurp(run1 / "checkpoint.json");
    REQUIRE(run_cli({"train", "--config", cfg.string()}).code == 0);
    CHECK(slurp(run1 / "checkpoint.json") == ckpt);
  }
  SECTION("resume with zero epochs round-trips the checkpoint") {
    json resume = doc;
    resume["train"]["epochs"] = 0;
    resume["out"] = (work_root() / "run_resume").string();
    const fs::path cfg2 = write_config("resume.json", resume);
    const CliRun rr = run_cli({"train", "--config", cfg2.string(), "--checkpoint",
                               (run1 / "checkpoint.json").string()});
    CAPTURE(rr.output);
    REQUIRE(rr.code == 0);
    CHECK(slurp(work_root() / "run_resume" / "checkpoint.json") ==
          slurp(run1 / "checkpoint.json"));
  }
  SECTION("a checkpoint with mismatched shape is rejected") {
    json wrong = doc;
    wrong["k_total"] = 4;
    wrong["out"] = (work_root() / "run_wrong").string();
    const fs::path cfg3 = write_config("wrong_depth.json", wrong);
    const CliRun bad = run_cli({"train", "--config", cfg3.string(), "--checkpoint",
                                (run1 / "checkpoint.json").string()});
    CHECK(bad.code == 2);
    CHECK_THAT(bad.output, ContainsSubstring("does not match"));
  }
  SECTION("evaluation consumes the checkpoint and reports metrics") {
    json ev = doc;
    ev["out"] = (work_root() / "eval1").string();
    const fs::path cfg4 = write_config("eval_rpca.json", ev);
    const CliRun er = run_cli({"eval", "--config", cfg4.string(), "--checkpoint",
                               (run1 / "checkpoint.json").string()});
    CAPTURE(er.output);
    REQUIRE(er.code == 0);
    const json rep = slurp_json(work_root() / "eval1" / "report.json");
    CHECK(rep.at("checkpoint") == (run1 / "checkpoint.json").string());
    CHECK(rep.at("metrics").contains("recovery_error"));
    CHECK(rep.at("metrics").contains("unsup_loss"));
    CHECK(rep.at("metrics").contains("rel_err_vs_truth"));
    CHECK(rep.at("flops").contains("total"));
    REQUIRE(rep.at("traces").size() == 4);
    const std::string trace = slurp(work_root() / "eval1" / "trace_0000.csv");
    CHECK(trace.rfind("k,objective,recovery_error,rel_err_vs_truth\n", 0) == 0);
    CHECK(std::count(trace.begin(), trace.end(), '\n') == 4);

    // byte-identical rerun
    const std::string rep_bytes = slurp(work_root() / "eval1" / "report.json");
    REQUIRE(run_cli({"eval", "--config", cfg4.string(), "--checkpoint",
                     (run1 / "checkpoint.json").string()})
                .code == 0);
    CHECK(slurp(work_root() / "eval1" / "report.json") == rep_bytes);
    CHECK(slurp(work_root() / "eval1" / "trace_0000.csv") == trace);
  }
}

TEST_CASE("beamforming evaluation reports the closed-form flop count") {
  const fs::path data = work_root() / "bf_data";
  json gen;
  gen["task"] = "apga";
  gen["out"] = data.string();
  gen["k_total"] = 5;
  gen["dims"] = {{"bands", 8}, {"n_rx", 6}, {"l_chains", 10}, {"m_tx", 12}};
  gen["data"]["gen"] = {{"seed", 2}, {"count", 2}, {"sigma2", 1.0}};
  write_config("bf_gen.json", gen);
  REQUIRE(run_cli({"gen", "--config", (work_root() / "bf_gen.json").string()}).code == 0);

  json ev = gen;
  ev["out"] = (work_root() / "bf_eval").string();
  ev["data"] = {{"test", {{"manifest", (data / "dataset.json").string()}}}};
  const fs::path cfg = write_config("bf_eval.json", ev);
  const CliRun r = run_cli({"eval", "--config", cfg.string()});
  CAPTURE(r.output);
  REQUIRE(r.code == 0);

  const json rep = slurp_json(work_root() / "bf_eval" / "report.json");
  CHECK(rep.at("flops").at("total") == 238080);
  CHECK(rep.at("checkpoint") == "init");
  CHECK(rep.at("metrics").at("sum_rate").contains("mean"));
  const std::string trace = slurp(work_root() / "bf_eval" / "trace_0000.csv");
  CHECK(trace.rfind("k,sum_rate\n", 0) == 0);
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 6);
}

TEST_CASE("flops subcommand prints and saves the model") {
  json doc;
  doc["task"] = "larpca";
  doc["out"] = (work_root() / "flops_out").string();
  doc["k_total"] = 2;
  doc["dims"] = {{"n1", 10}, {"n2", 10}, {"r", 2}};
  const fs::path cfg = write_config("flops.json", doc);
  const CliRun r = run_cli({"flops", "--config", cfg.string()});
  CAPTURE(r.output);
  REQUIRE(r.code == 0);

  // P_low = n^2 r + 2 n r^2 + r^3 = 288, sparse stage = K (n^2 r + n^2) = 600
  const json file = slurp_json(work_root() / "flops_out" / "flops.json");
  CHECK(file.at("total") == 600 + 4 * 288);
  const json printed = json::parse(r.output);
  CHECK(printed.at("total") == file.at("total"));
  CHECK(printed.contains("config_hash"));
}

TEST_CASE("property suites run from a config and pass") {
  json doc;
  doc["task"] = "gd-quadratic";
  doc["out"] = (work_root() / "prop_out").string();
  doc["suite"] = {{"trials", 25}, {"seed", 9}, {"dims", {4, 8}}, {"k_max", 8}};
  const fs::path cfg = write_config("prop.json", doc);
  const CliRun r = run_cli({"prop-check", "--config", cfg.string()});
  CAPTURE(r.output);
  REQUIRE(r.code == 0);

  const json rep = slurp_json(work_root() / "prop_out" / "prop_report.json");
  for (const char* suite :
       {"descent_per_step", "error_bound", "error_bound_zero_injection"}) {
    CHECK(rep.at(suite).at("trials") == 25);
    CHECK(rep.at(suite).at("violations") == 0);
  }
  CHECK(rep.at("error_bound_zero_injection").at("max_ratio_to_bound").get<double>() <=
        1.0);
}

TEST_CASE("configuration and io failures map to distinct exit codes") {
  SECTION("missing config file") {
    const CliRun r = run_cli({"eval", "--config", "/nonexistent/cfg.json"});
    CHECK(r.code == 1);
  }
  SECTION("malformed json") {
    const fs::path p = work_root() / "broken.json";
    std::ofstream(p) << "{ not json";
    CHECK(run_cli({"eval", "--config", p.string()}).code == 1);
  }
  SECTION("unknown keys are rejected by name") {
    json doc = rpca_gen_config(work_root() / "x", 1, 1);
    doc["typo_key"] = 1;
    const fs::path p = write_config("typo.json", doc);
    const CliRun r = run_cli({"gen", "--config", p.string()});
    CHECK(r.code == 2);
    CHECK_THAT(r.output, ContainsSubstring("typo_key"));
  }
  SECTION("outlier fraction out of range") {
    json doc = rpca_gen_config(work_root() / "x", 1, 1);
    doc["dims"]["alpha"] = 1.5;
    CHECK(run_cli({"gen", "--config", write_config("alpha.json", doc).string()}).code == 2);
  }
  SECTION("oversized step-cap scale in the property suite") {
    json doc;
    doc["task"] = "gd-quadratic";
    doc["suite"] = {{"trials", 5}, {"gamma_scale_max", 1.2}};
    const CliRun r =
        run_cli({"prop-check", "--config", write_config("gamma.json", doc).string()});
    CHECK(r.code == 2);
    CHECK_THAT(r.output, ContainsSubstring("gamma_scale_max"));
  }
  SECTION("training the descent testbed is refused") {
    json doc;
    doc["task"] = "gd-quadratic";
    doc["suite"] = {{"trials", 5}};
    CHECK(run_cli({"train", "--config", write_config("gdtrain.json", doc).string()}).code == 2);
  }
  SECTION("beamforming has no supervised mode") {
    json doc = channel_gen_config(work_root() / "x", 1, 1);
    doc["data"]["train"] = {{"gen", {{"seed", 1}, {"count", 1}}}};
    doc["train"] = {{"supervised", true}};
    CHECK(run_cli({"train", "--config", write_config("sup.json", doc).string()}).code == 2);
  }
  SECTION("beamforming rejects the adjoint gradient mode") {
    json doc = channel_gen_config(work_root() / "x", 1, 1);
    doc["data"]["train"] = {{"gen", {{"seed", 1}, {"count", 1}}}};
    doc["train"] = {{"grad_mode", "analytic-adjoint"}};
    CHECK(run_cli({"train", "--config", write_config("adj.json", doc).string()}).code == 2);
  }
  SECTION("dataset kind must match the task") {
    const fs::path chdata = work_root() / "kind_mismatch";
    write_config("km_gen.json", channel_gen_config(chdata, 1, 1));
    REQUIRE(run_cli({"gen", "--config", (work_root() / "km_gen.json").string()}).code == 0);
    json doc = rpca_gen_config(work_root() / "km_out", 1, 1);
    doc.erase("data");
    doc["data"]["test"] = {{"manifest", (chdata / "dataset.json").string()}};
    const CliRun r =
        run_cli({"eval", "--config", write_config("km_eval.json", doc).string()});
    CHECK(r.code == 2);
  }
  SECTION("missing required flag") {
    CHECK(run_cli({"eval"}).code == 2);
  }
  SECTION("unknown subcommand") {
    CHECK(run_cli({"frobnicate"}).code == 2);
  }
}

TEST_CASE("runaway training aborts with the divergence exit code") {
  const fs::path data = work_root() / "div_data";
  write_config("div_gen.json", rpca_gen_config(data, 5, 2));
  REQUIRE(run_cli({"gen", "--config", (work_root() / "div_gen.json").string()}).code == 0);

  json doc;
  doc["task"] = "larpca";
  doc["out"] = (work_root() / "div_run").string();
  doc["k_total"] = 2;
  doc["dims"] = {{"n1", 12}, {"n2", 10}, {"r", 2}, {"alpha", 0.1}};
  doc["data"]["train"] = {{"manifest", (data / "dataset.json").string()}};
  doc["train"] = {{"learning_rate", 1e150},
                  {"epochs", 2},
                  {"batch_size", 1},
                  {"grad_mode", "analytic-adjoint"}};
  const CliRun r =
      run_cli({"train", "--config", write_config("div.json", doc).string()});
  CAPTURE(r.output);
  CHECK(r.code == 3);
  const json rep = slurp_json(work_root() / "div_run" / "train_report.json");
  CHECK(rep.at("aborted") == true);
  CHECK(rep.contains("diagnostic"));
}
