#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gmdyn/metrics.hpp"
#include "gmdyn/model.hpp"
#include "gmdyn/rng.hpp"
#include "gmdyn/simulator.hpp"

namespace gmdyn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Uniform grid t_i = i·dt, i = 0..n_steps. Every kernel and path is sampled
/// on all n_steps + 1 points.
struct TimeGrid {
  double dt = 0.1;
  std::size_t n_steps = 1;

  std::size_t n_points() const { return n_steps + 1; }
  double time(std::size_t i) const { return static_cast<double>(i) * dt; }
  void validate() const;

  /// dt = η, n_steps = round(T/η).
  static TimeGrid from_run(const RunParams& params);
};

/// Order parameters of the effective process.
///
/// `noise` is M_C(t,t'), the covariance of ξ. `memory` is the
/// continuous-time density M_R(t,t'): the h-update adds
/// dt·Σ_{t'<t} M_R(t,t') h(t'). M_R is strictly lower triangular; the
/// equal-time reaction lives in lambda_hat.
struct KernelSet {
  RowMatrix noise;
  RowMatrix memory;
  Eigen::VectorXd lambda_hat;
  Eigen::VectorXd mu;
  Eigen::VectorXd m;

  static KernelSet zeros(std::size_t n_points);
  std::size_t size() const { return static_cast<std::size_t>(m.size()); }
};

enum class DmftMaskMode { PersistentSGD, SGDInspired, FullBatch };

DmftMaskMode dmft_mask_mode(MaskScheme scheme);

struct SolverConfig {
  std::size_t n_paths = 10000;
  double damping = 0.5;
  double tol = 1e-3;
  std::size_t max_iters = 100;
  DmftMaskMode mask_mode = DmftMaskMode::FullBatch;
  std::size_t workers = 1;
  /// m(0). Unset: 0 for two clusters, √(2R/(π d_ref)) for three clusters.
  std::optional<double> m0;
  /// Dimension whose mean |m(0)| seeds the three-cluster run. Unset: params.d.
  std::optional<double> d_ref;
  /// Pair each path with its (c, h0) -> (-c, -h0) mirror sharing h(0), mask
  /// and noise. Keeps μ exactly zero at m = 0.
  bool antithetic = true;

  void validate() const;
};

/// Constants of the scalar process.
struct EffectiveProcess {
  double alpha = 1.0;
  double delta = 1.0;
  double lambda = 0.0;
  LossModel model;
};

/// Quenched and dynamical randomness of one path.
struct PathDraws {
  int c = 1;
  double y = 1.0;
  double h0 = 0.0;       // quenched N(0, 1)
  double h_init = 0.0;   // h(0) ~ N(0, R)
  double w_init = 0.0;   // w(0), with ⟨w(0) h0⟩ = m(0)
  Eigen::VectorXd mask;  // s(t)
  Eigen::VectorXd noise; // ξ(t)
};

struct EffectivePath {
  PathDraws draws;
  Eigen::VectorXd h;
  Eigen::VectorXd r;   // √Δ h + m (c + √Δ h0)
  RowMatrix response;  // g(t,t') = ∂h(t)/∂Y(t'), empty unless requested
  Eigen::VectorXd w;   // weight process, empty unless requested
};

struct PathEnsemble {
  TimeGrid grid;
  Eigen::VectorXd m;
  std::vector<EffectivePath> paths;
};

/// Gaussian vectors with covariance `cov` through a lower Cholesky factor.
/// On failure a jitter ε·I with ε = 1e-10·max diag is added and the
/// factorization retried, multiplying ε by 100 up to three times; after that
/// NonPsdKernelError is thrown. A zero matrix yields zero noise.
class NoiseSampler {
 public:
  explicit NoiseSampler(const RowMatrix& cov);

  Eigen::VectorXd sample(RandomStream& rng) const;
  /// L z for a standard normal vector z.
  Eigen::VectorXd apply(const Eigen::VectorXd& z) const;
  void apply(const double* z, double* out) const;

  double jitter() const { return jitter_; }
  const RowMatrix& factor() const { return factor_; }

 private:
  RowMatrix factor_;
  double jitter_ = 0.0;
  bool zero_ = false;
};

Eigen::VectorXd sample_noise(const RowMatrix& cov, RandomStream& rng);

/// r(t) = √Δ h(t) + m(t)(c + √Δ h0).
Eigen::VectorXd preactivation_path(const Eigen::VectorXd& h, const Eigen::VectorXd& m, double delta,
                                   int c, double h0);

/// Explicit Euler for the effective process,
///   h(t+dt) = h(t) + dt[-(λ+λ̂(t))h(t) - √Δ s(t)Λ'(y, r(t) - Y(t))
///                       + dt Σ_{t'<t} M_R(t,t')h(t') + ξ(t)].
/// `perturbation` is Y(t), empty for Y = 0. Throws DivergenceError.
Eigen::VectorXd simulate_h_path(const KernelSet& kernels, const EffectiveProcess& process,
                                const PathDraws& draws, const TimeGrid& grid,
                                std::span<const double> perturbation = {});

/// Linearization of simulate_h_path in Y: g(t,t') = ∂h(t)/∂Y(t'), lower
/// triangular with zero diagonal.
RowMatrix simulate_response_path(const KernelSet& kernels, const EffectiveProcess& process,
                                 const Eigen::VectorXd& h, const PathDraws& draws,
                                 const TimeGrid& grid);

/// s(t) on the grid, one scalar chain. PersistentSGD: s(0) ~ Bernoulli(b)
/// then the two-state chain with step dt. SGDInspired: i.i.d. Bernoulli(b).
/// FullBatch: ones, no randomness consumed.
Eigen::VectorXd sample_mask_path(DmftMaskMode mode, double b, double tau, const TimeGrid& grid,
                                 RandomStream& rng, TauPolicy policy = TauPolicy::Strict);

/// Euler for ṁ = -λm - μ.
Eigen::VectorXd integrate_magnetization(const Eigen::VectorXd& mu, double lambda, double m0,
                                        const TimeGrid& grid);

/// Euler for the weight process
///   ẇ = -λ̃w + ∫M_R (w - m h0) + ξ + h0(λ̂ m - μ),  C(t,t') = ⟨w(t)w(t')⟩.
Eigen::VectorXd simulate_w_path(const KernelSet& kernels, const EffectiveProcess& process,
                                const PathDraws& draws, const TimeGrid& grid);

/// Streaming Monte Carlo estimator of the kernels. Paths are added one at a
/// time; partial accumulators merge in a fixed order.
class KernelAccumulator {
 public:
  explicit KernelAccumulator(std::size_t n_points);

  /// `response` may be null, in which case the path adds nothing to M_R.
  void add(std::span<const double> mask, std::span<const double> preact, double y, int c, double h0,
           const RowMatrix* response, const LossModel& model, double delta);
  void merge(const KernelAccumulator& other);

  /// Plain averages: λ̂ = αΔ⟨sΛ''⟩, μ = α⟨s(c+√Δh0)Λ'⟩,
  /// M_C = αΔ⟨s s' Λ' Λ'⟩, M_R = αΔ^{3/2}⟨s Λ'' g⟩/dt. m is left at zero.
  KernelSet finalize(double alpha, double delta, double dt) const;

  std::size_t count() const { return count_; }

 private:
  std::size_t n_;
  std::size_t count_ = 0;
  Eigen::VectorXd lambda_hat_;
  Eigen::VectorXd mu_;
  RowMatrix noise_;
  RowMatrix memory_;
};

/// Pure Monte Carlo estimate from a materialized ensemble.
KernelSet estimate_kernels(const PathEnsemble& ensemble, const EffectiveProcess& process);

/// new = (1-γ)·old + γ·estimate for λ̂, μ, M_C, M_R; m is copied from old.
KernelSet update_kernels(const PathEnsemble& ensemble, const EffectiveProcess& process,
                         const KernelSet& old, double damping);

KernelSet damp_kernels(const KernelSet& old, const KernelSet& estimate, double damping);

/// max over kernels of ‖new-old‖∞ / (‖old‖∞ + 1e-12).
double kernel_residual(const KernelSet& next, const KernelSet& old);

struct DysonSolution {
  RowMatrix correlation;  // C(t,t'), symmetric
  RowMatrix response;     // R(t,t'), lower triangular, R(t,t) = 1
};

/// Causal time stepping of the correlation/response equations, discretized
/// so that C equals the ensemble second moment of simulate_w_path.
/// C(0,0) = max(R, m(0)²).
DysonSolution solve_dyson(const KernelSet& kernels, double lambda, double R, const TimeGrid& grid);

struct DmftDiagnostics {
  std::size_t iterations = 0;
  double residual = 0.0;
  bool converged = false;
  std::vector<double> residual_history;
  /// Set when the residual did not decrease on average after burn-in.
  bool residual_alert = false;
  double noise_jitter = 0.0;
};

struct DmftResult {
  KernelSet kernels;
  MetricsSeries metrics;
  DmftDiagnostics diagnostics;

  /// Throws NonConvergenceError with the final residual.
  void require_converged() const;
};

double default_m0(const MixtureSpec& spec, const RunParams& params, const SolverConfig& config);

/// Randomness of path `index` under master seed `seed`. Paths 2k and 2k+1
/// share a seed when antithetic; the odd one has (c, h0) negated. The
/// returned noise is L z for the sampler's factor L.
PathDraws draw_path(std::size_t index, std::uint64_t seed, const MixtureSpec& spec,
                    const RunParams& params, const SolverConfig& config, double m0,
                    const TimeGrid& grid, const NoiseSampler& sampler);

/// Samples n_paths paths under fixed kernels. Response matrices cost n² each.
PathEnsemble sample_ensemble(const KernelSet& kernels, const MixtureSpec& spec,
                             const RunParams& params, const SolverConfig& config,
                             bool with_response, bool with_weights);

/// Damped fixed-point iteration over path ensembles. The same per-path
/// randomness is reused at every iteration, so the iteration map is
/// deterministic in the kernels. Non-convergence is reported in the
/// diagnostics, not thrown.
DmftResult solve_dmft(const MixtureSpec& spec, const RunParams& params, const SolverConfig& config,
                      const KernelSet* warm_start = nullptr);

}  // namespace gmdyn
