#pragma once

#include <cstdint>
#include <filesystem>

#include "gmdyn/dmft.hpp"
#include "gmdyn/model.hpp"
#include "gmdyn/simulator.hpp"

namespace gmdyn {

inline constexpr std::uint32_t kKernelFileVersion = 1;

/// Run constants stored next to the kernels so a checkpoint can be checked
/// against the run that loads it.
struct KernelFileMeta {
  double dt = 0.0;
  double alpha = 0.0;
  double delta = 0.0;
  double lambda = 0.0;
  double b = 1.0;
  double tau = 1.0;
  double R = 0.0;
  double door_onset = 0.0;
  double rho = 0.0;
  ClusterKind kind = ClusterKind::TwoCluster;
  DmftMaskMode mask_mode = DmftMaskMode::FullBatch;

  static KernelFileMeta from_run(const MixtureSpec& spec, const RunParams& params,
                                 DmftMaskMode mode);
  bool operator==(const KernelFileMeta&) const = default;
};

struct KernelCheckpoint {
  KernelFileMeta meta;
  KernelSet kernels;
};

/// Little-endian binary layout:
///   char[8] "GMDYNK01", u32 version, u32 reserved, u64 n_points,
///   f64 dt, alpha, delta, lambda, b, tau, R, door_onset, rho,
///   u32 kind, u32 mask_mode,
///   f64 lambda_hat[n], mu[n], m[n], noise[n*n], memory[n*n] (row-major).
/// Throws IoError.
void save_kernels(const std::filesystem::path& path, const KernelCheckpoint& checkpoint);
KernelCheckpoint load_kernels(const std::filesystem::path& path);

/// Long-format text dump: one row per (i, j) with j <= i.
void save_kernels_csv(const std::filesystem::path& path, const KernelSet& kernels, double dt);

}  // namespace gmdyn
