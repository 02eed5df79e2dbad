// Command-line driver: gen | train | eval | flops | prop-check.

#include <CLI11.hpp>

#include "uopt/uopt.hpp"

namespace {

void add_common(CLI::App* sub, uopt::CliOptions& opt, std::uint64_t& seed_slot,
                bool& seed_set) {
  sub->add_option("--config", opt.config_path, "experiment config (JSON)")->required();
  sub->add_option("--out", opt.out_override, "output directory override");
  sub->add_option("--checkpoint", opt.checkpoint, "schedule checkpoint to load");
  sub->add_option("--seed", seed_slot, "seed override")->each([&seed_set](std::string) {
    seed_set = true;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"learned approximated-iteration solver toolkit"};
  app.require_subcommand(1);

  uopt::CliOptions opt;
  std::uint64_t seed_slot = 0;
  bool seed_set = false;
  for (const char* verb : {"gen", "train", "eval", "flops", "prop-check"}) {
    CLI::App* sub = app.add_subcommand(verb);
    add_common(sub, opt, seed_slot, seed_set);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : uopt::kExitConfig;
  }
  if (seed_set) opt.seed = seed_slot;
  return uopt::run_command(app.get_subcommands().front()->get_name(), opt);
}
