#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gmdyn/config.hpp"
#include "gmdyn/errors.hpp"
#include "gmdyn/runner.hpp"
#include "gmdyn/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Learning curves of single-layer classifiers on Gaussian mixtures: finite-d SGD and DMFT"};
  app.set_version_flag("--version", gmdyn::kVersion);
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;

  const char* descriptions[] = {
      "train at finite d and average over seeds",
      "solve the DMFT equations",
      "run simulate and dmft and report their deviation",
      "print the oracle error of the three-cluster mixture",
      "repeat a mode over sweep_key = sweep_values",
  };
  const gmdyn::RunMode modes[] = {gmdyn::RunMode::Simulate, gmdyn::RunMode::Dmft,
                                  gmdyn::RunMode::Compare, gmdyn::RunMode::Oracle,
                                  gmdyn::RunMode::Sweep};
  for (std::size_t i = 0; i < 5; ++i) {
    CLI::App* sub = app.add_subcommand(std::string(gmdyn::mode_name(modes[i])), descriptions[i]);
    sub->add_option("--config", config_path, "key = value config file")->required();
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--workers", workers, "worker threads (does not change results)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "master seed, overrides the config");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : gmdyn::kExitConfig;
  }

  gmdyn::RunMode mode = gmdyn::RunMode::Simulate;
  for (const auto* sub : app.get_subcommands()) mode = *gmdyn::parse_mode(sub->get_name());

  gmdyn::ExperimentConfig cfg;
  try {
    cfg = gmdyn::load_config(config_path);
    if (workers) gmdyn::set_config_value(cfg, "workers", std::to_string(*workers));
    if (seed) gmdyn::set_config_value(cfg, "seed", std::to_string(*seed));
  } catch (const gmdyn::ConfigError& e) {
    std::cerr << config_path << ": " << e.what() << '\n';
    return gmdyn::kExitConfig;
  } catch (const gmdyn::IoError& e) {
    std::cerr << e.what() << '\n';
    return gmdyn::kExitIo;
  }
  return gmdyn::run_mode(mode, cfg, out_dir, std::cerr);
}
