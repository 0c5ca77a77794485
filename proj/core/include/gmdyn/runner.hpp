#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "gmdyn/config.hpp"
#include "gmdyn/dmft.hpp"
#include "gmdyn/metrics.hpp"

namespace gmdyn {

enum ExitStatus : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitNonConvergence = 3,
  kExitIo = 4,
};

inline constexpr int kCurvesSchemaVersion = 1;

/// Master seed of replica k in a seed-averaged simulation.
std::uint64_t replica_seed(std::uint64_t master, std::size_t k);

struct AuditRow {
  std::size_t replica;
  double t;
  double closed_form;
  double monte_carlo;
  double std_error;
};

struct SeedAverage {
  std::vector<MetricsSeries> per_seed;
  MetricsSeries mean;
  MetricsSeries std_error;  // zero when there is a single seed
  std::vector<AuditRow> audit;
};

/// Runs cfg.n_seeds independent trainings, cfg.workers at a time.
SeedAverage simulate_seeds(const ExperimentConfig& cfg);

/// Solves the DMFT for cfg, loading cfg.warm_start when set.
DmftResult run_dmft(const ExperimentConfig& cfg);

/// `# gmdyn-curves v1` then t,m,q,train_loss,train_acc,gen_err and, when
/// std_error is given, one _stderr column per observable. Throws IoError.
void write_curves_csv(const std::filesystem::path& path, const MetricsSeries& series,
                      const MetricsSeries* std_error = nullptr);
MetricsSeries read_curves_csv(const std::filesystem::path& path);

/// Runs one mode and writes its outputs under out_dir. Errors are reported
/// on `log` and mapped to an exit status.
int run_mode(RunMode mode, const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
             std::ostream& log);

}  // namespace gmdyn
