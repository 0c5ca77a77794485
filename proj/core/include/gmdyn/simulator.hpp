#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include <Eigen/Dense>

#include "gmdyn/metrics.hpp"
#include "gmdyn/model.hpp"
#include "gmdyn/rng.hpp"

namespace gmdyn {

enum class MaskScheme { FullBatch, SGD, PersistentSGD };

/// What to do when the persistent-mask transition probabilities leave [0, 1].
/// Strict rejects the parameters; Clamp raises τ to the smallest feasible
/// value, which keeps the stationary active fraction at b.
enum class TauPolicy { Strict, Clamp };

struct RunParams {
  double alpha = 1.0;
  std::size_t d = 100;
  double lambda = 0.0;
  double eta = 0.1;
  double b = 1.0;
  double tau = 1.0;
  double R = 0.0;
  double horizon = 1.0;
  MaskScheme mask_scheme = MaskScheme::FullBatch;
  TauPolicy tau_policy = TauPolicy::Strict;
  std::uint64_t seed = 1;

  /// round(α d); zero only when α = 0.
  std::size_t n_samples() const;
  /// round(T / η).
  std::size_t n_steps() const;
  /// Throws ConfigError.
  void validate() const;
};

/// Per-step transition probabilities of the persistent two-state chain.
struct MaskTransition {
  double p_on;   // 0 -> 1
  double p_off;  // 1 -> 0
};

/// p_on = η/τ, p_off = (1-b)η/(bτ). Under TauPolicy::Strict an infeasible
/// pair throws ConfigError; under Clamp τ is raised to
/// max(τ, η, (1-b)η/b).
MaskTransition mask_transition(double b, double tau, double eta, TauPolicy policy);

/// Stationary mean length, in steps, of an uninterrupted active run.
double mean_active_sojourn_steps(const MaskTransition& tr);

struct MaskState {
  Eigen::VectorXd active;  // entries are exactly 0.0 or 1.0
};

MaskState initial_mask(const RunParams& params, std::size_t n, RandomStream& rng);

/// Advances every sample's mask by one step of size η.
MaskState step_mask(const RunParams& params, const MaskState& state, RandomStream& rng);

/// i.i.d. N(0, R) entries; R = 0 gives zeros without consuming randomness.
Eigen::VectorXd init_weights(std::size_t d, double R, RandomStream& rng);

/// w - η [λ w + Σ_μ s_μ Λ'(y_μ, wᵀx_μ/√d) x_μ/√d]. Throws DivergenceError
/// when the update is not finite.
Eigen::VectorXd gd_step(const RunParams& params, const LossModel& model, const Eigen::VectorXd& w,
                        const Dataset& data, const MaskState& mask);

/// Masked empirical risk Σ_μ s_μ Λ(y_μ, h_μ) + λ/2 ‖w‖², the function whose
/// gradient gd_step follows.
double masked_loss(const RunParams& params, const LossModel& model, const Eigen::VectorXd& w,
                   const Dataset& data, const MaskState& mask);

/// Called with (step, w) at every recorded step.
using StepObserver = std::function<void(std::size_t, const Eigen::VectorXd&)>;

struct TrainingRun {
  MetricsSeries metrics;
  Eigen::VectorXd final_weights;
};

/// Samples a dataset and w(0), then runs n_steps updates, recording metrics
/// at t = kη for k = 0..n_steps. All randomness is derived from
/// params.seed.
TrainingRun run_training(const MixtureSpec& spec, const RunParams& params,
                         const StepObserver& observer = {});

/// Same, on a caller-provided dataset and initial weights.
TrainingRun run_training(const MixtureSpec& spec, const RunParams& params, const Dataset& data,
                         Eigen::VectorXd w0, const StepObserver& observer = {});

struct McEstimate {
  double value;
  double std_error;
};

/// Error rate of ŷ = sign φ(wᵀx/√d) on n_test fresh samples, with its
/// binomial standard error.
McEstimate mc_generalization(const Eigen::VectorXd& w, const MixtureSpec& spec, std::size_t n_test,
                             RandomStream& rng);

}  // namespace gmdyn
