#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmdyn/model.hpp"

namespace gmdyn {

/// ½ erfc(m / √(2Δq)). q = 0 is resolved by its limit (0, ½ or 1 by the
/// sign of m). Throws std::domain_error for q < 0.
double gen_error_two_cluster(double m, double q, double delta);

/// (1-ρ) erfc(L/√(2Δq)) + (ρ/2)[erf((L-m)/√(2Δq)) + erf((L+m)/√(2Δq))].
/// At ρ = ½ this is the familiar ½ erfc(·) + ¼[erf + erf] form.
double gen_error_three_cluster(double m, double q, double delta, double onset, double rho);

/// Dispatches on spec.kind.
double gen_error(const MixtureSpec& spec, double m, double q);

/// Error of the posterior-argmax classifier that knows v*, Δ and ρ for the
/// three-cluster mixture. Throws std::domain_error when
/// (1-ρ)e^{1/(2Δ)}/ρ < 1.
double oracle_error(double delta, double rho);

struct LossAccuracy {
  std::vector<double> loss;      // e(t) = α⟨Λ(y, r(t))⟩
  std::vector<double> accuracy;  // a(t) = 1 - ⟨θ(-yφ(r(t)))⟩
};

/// Path averages over an ensemble. preacts holds r(t) for one path per row,
/// labels the matching y.
LossAccuracy ensemble_loss_accuracy(std::span<const double> labels, const Eigen::MatrixXd& preacts,
                                    double alpha, const LossModel& model);

struct CurvePair {
  std::vector<double> times;
  std::vector<double> series_a;
  std::vector<double> series_b;
  std::string label;
};

struct CurveDeviation {
  double max_abs_dev;
  double mean_abs_dev;
  double argmax_time;
};

/// Throws std::invalid_argument when the series do not share the grid.
CurveDeviation curve_compare(const CurvePair& pair);

/// Restricts a pair to times within [t_lo, t_hi].
CurvePair restrict_window(const CurvePair& pair, double t_lo, double t_hi);

}  // namespace gmdyn
