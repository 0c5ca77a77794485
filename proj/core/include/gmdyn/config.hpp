#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gmdyn/dmft.hpp"
#include "gmdyn/model.hpp"
#include "gmdyn/simulator.hpp"

namespace gmdyn {

enum class RunMode { Simulate, Dmft, Compare, Oracle, Sweep };

/// Everything a run needs. The mask mode of the solver follows run.mask_scheme.
struct ExperimentConfig {
  MixtureSpec mixture;
  RunParams run;
  SolverConfig solver;

  std::size_t n_seeds = 1;
  /// Fresh test samples for the Monte Carlo audit of the simulated error; 0 disables it.
  std::size_t n_test = 0;
  std::size_t audit_stride = 10;
  std::size_t workers = 1;
  bool kernels_csv = false;
  std::optional<std::string> warm_start;

  std::string sweep_key;
  std::vector<std::string> sweep_values;
  RunMode sweep_mode = RunMode::Simulate;

  /// Cross-field checks; throws ConfigError.
  void validate() const;
};

/// Keys that must appear in every config file.
const std::vector<std::string>& required_keys();

/// Flat `key = value` lines, `#` starts a comment. Throws ConfigError naming
/// the line or key at fault.
ExperimentConfig parse_config(std::string_view text);

/// Throws IoError when the file cannot be read.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Sets one key as if it had appeared in a file. Throws ConfigError.
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Resolved config text; parse_config(to_text(c)) reproduces c exactly.
std::string to_text(const ExperimentConfig& cfg);

std::string_view mode_name(RunMode mode);
std::optional<RunMode> parse_mode(std::string_view name);

}  // namespace gmdyn
