#include "gmdyn/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gmdyn/errors.hpp"

namespace gmdyn {

void MixtureSpec::validate() const {
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw ConfigError("delta must be a finite positive number");
  }
  if (kind == ClusterKind::ThreeCluster) {
    if (!(door_onset > 0.0) || !std::isfinite(door_onset)) {
      throw ConfigError("door_onset must be positive for the three-cluster model");
    }
    if (!(rho > 0.0 && rho < 1.0)) {
      throw ConfigError("rho must lie in (0, 1)");
    }
  }
}

LossModel MixtureSpec::loss_model() const {
  if (kind == ClusterKind::TwoCluster) {
    return LossModel{Activation::Linear, 0.0, Loss::Logistic};
  }
  return LossModel{Activation::Door, door_onset, Loss::Logistic};
}

int sample_coefficient(const MixtureSpec& spec, RandomStream& rng) {
  const double u = rng.uniform();
  if (spec.kind == ClusterKind::TwoCluster) {
    return u < 0.5 ? 1 : -1;
  }
  if (u < 1.0 - spec.rho) {
    return 0;
  }
  // remaining mass rho split evenly
  return u < 1.0 - 0.5 * spec.rho ? 1 : -1;
}

int label_of(const MixtureSpec& spec, int c) {
  if (c < -1 || c > 1) {
    throw std::invalid_argument("cluster coefficient must be -1, 0 or +1");
  }
  if (spec.kind == ClusterKind::TwoCluster) {
    if (c == 0) {
      throw std::invalid_argument("c = 0 is not a valid two-cluster coefficient");
    }
    return c;
  }
  return c == 0 ? -1 : 1;
}

Dataset sample_dataset(const MixtureSpec& spec, std::size_t d, std::size_t n, RandomStream& rng) {
  if (d == 0) {
    throw std::invalid_argument("dimension must be at least 1");
  }
  Dataset data;
  data.patterns.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  data.labels.resize(static_cast<Eigen::Index>(n));
  data.coefficients.resize(n);

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double sqrt_delta = std::sqrt(spec.delta);
  for (std::size_t mu = 0; mu < n; ++mu) {
    const int c = sample_coefficient(spec, rng);
    data.coefficients[mu] = c;
    data.labels(static_cast<Eigen::Index>(mu)) = label_of(spec, c);
    for (std::size_t j = 0; j < d; ++j) {
      data.patterns(static_cast<Eigen::Index>(mu), static_cast<Eigen::Index>(j)) =
          pattern_entry(c, inv_sqrt_d, sqrt_delta, rng.normal());
    }
  }
  return data;
}

double phi(const LossModel& model, double h) {
  switch (model.activation) {
    case Activation::Linear:
      return h;
    case Activation::Door:
      return h * h - model.onset * model.onset;
  }
  return h;
}

double phi_prime(const LossModel& model, double h) {
  return model.activation == Activation::Door ? 2.0 * h : 1.0;
}

double phi_second(const LossModel& model, double /*h*/) {
  return model.activation == Activation::Door ? 2.0 : 0.0;
}

// ℓ(v) = ln(1 + e^{-v}) written as softplus(-v).
double logistic(double v) {
  return std::max(-v, 0.0) + std::log1p(std::exp(-std::abs(v)));
}

// ℓ'(v) = -1 / (1 + e^{v})
double logistic_prime(double v) {
  if (v >= 0.0) {
    const double e = std::exp(-v);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(v));
}

// ℓ''(v) = e^{-|v|} / (1 + e^{-|v|})^2
double logistic_second(double v) {
  const double e = std::exp(-std::abs(v));
  const double denom = 1.0 + e;
  return e / (denom * denom);
}

LossDerivs lambda_derivs(const LossModel& model, double y, double h) {
  const double f = phi(model, h);
  const double fp = phi_prime(model, h);
  const double fpp = phi_second(model, h);
  const double v = y * f;
  const double l1 = logistic_prime(v);
  // y^2 = 1
  return LossDerivs{logistic(v), y * l1 * fp, logistic_second(v) * fp * fp + y * l1 * fpp};
}

bool misclassified(const LossModel& model, double y, double h) {
  return y * phi(model, h) < 0.0;
}

}  // namespace gmdyn
