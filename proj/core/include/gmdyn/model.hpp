#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "gmdyn/rng.hpp"

namespace gmdyn {

enum class ClusterKind { TwoCluster, ThreeCluster };

enum class Activation { Linear, Door };

enum class Loss { Logistic };

/// Activation and loss pair. Λ(y, h) = ℓ(y φ(h)).
struct LossModel {
  Activation activation = Activation::Linear;
  double onset = 0.0;  // door onset L, unused for Linear
  Loss loss = Loss::Logistic;
};

/// Data-generating law of the Gaussian mixture.
///
/// TwoCluster: c = ±1 with probability 1/2 each, y = c, linear activation.
/// ThreeCluster: c = 0 with probability 1 - rho, c = ±1 with rho/2 each,
/// y = -1 iff c = 0, door activation with onset door_onset.
struct MixtureSpec {
  ClusterKind kind = ClusterKind::TwoCluster;
  double delta = 1.0;
  double door_onset = 0.0;
  double rho = 0.5;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
  LossModel loss_model() const;
};

struct Dataset {
  Eigen::MatrixXd patterns;          // n x d
  Eigen::VectorXd labels;            // ±1
  std::vector<int> coefficients;     // c in {-1, 0, +1}

  std::size_t n() const { return static_cast<std::size_t>(patterns.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(patterns.cols()); }
};

struct LossDerivs {
  double value;   // Λ
  double first;   // ∂Λ/∂h
  double second;  // ∂²Λ/∂h²
};

int sample_coefficient(const MixtureSpec& spec, RandomStream& rng);

/// Throws std::invalid_argument for c = 0 under TwoCluster or |c| > 1.
int label_of(const MixtureSpec& spec, int c);

/// One pattern entry: c/√d + √Δ z. Shared by sample_dataset and anything
/// that needs to rebuild a pattern from its noise.
inline double pattern_entry(int c, double inv_sqrt_d, double sqrt_delta, double z) {
  return static_cast<double>(c) * inv_sqrt_d + sqrt_delta * z;
}

/// Draws n patterns in dimension d. For each row: c first, then the d noise
/// components in column order.
Dataset sample_dataset(const MixtureSpec& spec, std::size_t d, std::size_t n, RandomStream& rng);

double phi(const LossModel& model, double h);
double phi_prime(const LossModel& model, double h);
double phi_second(const LossModel& model, double h);

/// Logistic loss and its derivatives in numerically stable form.
double logistic(double v);
double logistic_prime(double v);
double logistic_second(double v);

LossDerivs lambda_derivs(const LossModel& model, double y, double h);

/// Sign with sign(0) = +1.
inline double sign_of(double x) { return x >= 0.0 ? 1.0 : -1.0; }

/// True when yφ(h) < 0, i.e. θ(-yφ(h)) with θ(0) = 0.
bool misclassified(const LossModel& model, double y, double h);

}  // namespace gmdyn
