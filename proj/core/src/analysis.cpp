#include "gmdyn/analysis.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace gmdyn {

namespace {

void check_q(double q) {
  if (q < 0.0 || std::isnan(q)) throw std::domain_error("q must be non-negative");
}

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

// Limit of erf(x / s) as s -> 0+.
double erf_limit(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

double gen_error_two_cluster(double m, double q, double delta) {
  check_q(q);
  if (q == 0.0) {
    return 0.5 * (1.0 - erf_limit(m));
  }
  return clamp01(0.5 * std::erfc(m / std::sqrt(2.0 * delta * q)));
}

double gen_error_three_cluster(double m, double q, double delta, double onset, double rho) {
  check_q(q);
  if (q == 0.0) {
    return clamp01(0.5 * rho * (erf_limit(onset - m) + erf_limit(onset + m)) +
                   (1.0 - rho) * (1.0 - erf_limit(onset)));
  }
  const double s = std::sqrt(2.0 * delta * q);
  return clamp01((1.0 - rho) * std::erfc(onset / s) +
                 0.5 * rho * (std::erf((onset - m) / s) + std::erf((onset + m) / s)));
}

double gen_error(const MixtureSpec& spec, double m, double q) {
  if (spec.kind == ClusterKind::TwoCluster) return gen_error_two_cluster(m, q, spec.delta);
  return gen_error_three_cluster(m, q, spec.delta, spec.door_onset, spec.rho);
}

double oracle_error(double delta, double rho) {
  if (!(delta > 0.0)) throw std::domain_error("delta must be positive");
  if (!(rho > 0.0 && rho < 1.0)) throw std::domain_error("rho must lie in (0, 1)");
  // log of the arccosh argument (1-ρ)/ρ · e^{1/(2Δ)}
  const double log_arg = std::log((1.0 - rho) / rho) + 0.5 / delta;
  if (log_arg < 0.0) {
    throw std::domain_error("oracle threshold undefined: (1-rho) e^{1/(2 delta)} / rho < 1");
  }
  double a;
  if (log_arg > 20.0) {
    // arccosh(x) = ln(2x) - 1/(4x²) - ..., the correction is below 1e-17 here
    a = log_arg + std::log(2.0);
  } else {
    a = std::acosh(std::exp(log_arg));
  }
  const double false_pos = std::erfc(std::sqrt(0.5 * delta) * a);
  const double s = std::sqrt(2.0 * delta);
  const double false_neg = 0.5 * (std::erf((delta * a + 1.0) / s) + std::erf((delta * a - 1.0) / s));
  return clamp01((1.0 - rho) * false_pos + rho * false_neg);
}

LossAccuracy ensemble_loss_accuracy(std::span<const double> labels, const Eigen::MatrixXd& preacts,
                                    double alpha, const LossModel& model) {
  if (static_cast<Eigen::Index>(labels.size()) != preacts.rows()) {
    throw std::invalid_argument("one label per path required");
  }
  const auto n_paths = preacts.rows();
  const auto n_times = preacts.cols();
  LossAccuracy out{std::vector<double>(static_cast<std::size_t>(n_times), 0.0),
                   std::vector<double>(static_cast<std::size_t>(n_times), 1.0)};
  if (n_paths == 0) return out;
  for (Eigen::Index t = 0; t < n_times; ++t) {
    double loss = 0.0;
    double wrong = 0.0;
    for (Eigen::Index p = 0; p < n_paths; ++p) {
      const double y = labels[static_cast<std::size_t>(p)];
      const double r = preacts(p, t);
      loss += lambda_derivs(model, y, r).value;
      if (misclassified(model, y, r)) wrong += 1.0;
    }
    const auto i = static_cast<std::size_t>(t);
    out.loss[i] = alpha * loss / static_cast<double>(n_paths);
    out.accuracy[i] = 1.0 - wrong / static_cast<double>(n_paths);
  }
  return out;
}

CurveDeviation curve_compare(const CurvePair& pair) {
  const std::size_t n = pair.times.size();
  if (pair.series_a.size() != n || pair.series_b.size() != n) {
    throw std::invalid_argument("curve '" + pair.label + "': series lengths differ from the grid");
  }
  if (n == 0) throw std::invalid_argument("curve '" + pair.label + "': empty grid");
  CurveDeviation dev{0.0, 0.0, pair.times.front()};
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::abs(pair.series_a[i] - pair.series_b[i]);
    sum += a;
    if (a > dev.max_abs_dev) {
      dev.max_abs_dev = a;
      dev.argmax_time = pair.times[i];
    }
  }
  dev.mean_abs_dev = sum / static_cast<double>(n);
  return dev;
}

CurvePair restrict_window(const CurvePair& pair, double t_lo, double t_hi) {
  CurvePair out;
  out.label = pair.label;
  const double slack = 1e-9 * std::max(1.0, std::abs(t_hi));
  for (std::size_t i = 0; i < pair.times.size(); ++i) {
    const double t = pair.times[i];
    if (t >= t_lo - slack && t <= t_hi + slack) {
      out.times.push_back(t);
      out.series_a.push_back(pair.series_a.at(i));
      out.series_b.push_back(pair.series_b.at(i));
    }
  }
  return out;
}

}  // namespace gmdyn
