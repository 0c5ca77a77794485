#include "gmdyn/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gmdyn/analysis.hpp"
#include "gmdyn/errors.hpp"

namespace gmdyn {

std::size_t RunParams::n_samples() const {
  return static_cast<std::size_t>(std::llround(alpha * static_cast<double>(d)));
}

std::size_t RunParams::n_steps() const {
  return static_cast<std::size_t>(std::llround(horizon / eta));
}

void RunParams::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0");
  if (d < 1) throw ConfigError("d must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be > 0");
  if (!(b > 0.0 && b <= 1.0)) throw ConfigError("b must lie in (0, 1]");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be > 0");
  if (!(R >= 0.0) || !std::isfinite(R)) throw ConfigError("R must be >= 0");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("horizon must be > 0");
  if (alpha > 0.0 && n_samples() < 1) throw ConfigError("alpha * d rounds to zero samples");
  if (mask_scheme == MaskScheme::FullBatch && b != 1.0) {
    throw ConfigError("b must be 1 for full-batch training");
  }
  if (mask_scheme == MaskScheme::PersistentSGD) {
    mask_transition(b, tau, eta, tau_policy);
  }
}

MaskTransition mask_transition(double b, double tau, double eta, TauPolicy policy) {
  if (!(b > 0.0 && b <= 1.0)) throw ConfigError("b must lie in (0, 1]");
  double t = tau;
  if (policy == TauPolicy::Clamp) {
    t = std::max({tau, eta, (1.0 - b) * eta / b});
  }
  MaskTransition tr{eta / t, (1.0 - b) * eta / (b * t)};
  if (tr.p_on > 1.0 || tr.p_off > 1.0) {
    throw ConfigError("persistent mask transition probabilities exceed 1 (eta/tau = " +
                      std::to_string(tr.p_on) + ", (1-b)eta/(b tau) = " + std::to_string(tr.p_off) +
                      "); increase tau or set tau_policy = clamp");
  }
  return tr;
}

double mean_active_sojourn_steps(const MaskTransition& tr) {
  return 1.0 / tr.p_off;
}

MaskState initial_mask(const RunParams& params, std::size_t n, RandomStream& rng) {
  MaskState st{Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n))};
  if (params.mask_scheme == MaskScheme::FullBatch) return st;
  for (Eigen::Index mu = 0; mu < st.active.size(); ++mu) {
    st.active(mu) = rng.bernoulli(params.b) ? 1.0 : 0.0;
  }
  return st;
}

MaskState step_mask(const RunParams& params, const MaskState& state, RandomStream& rng) {
  MaskState next = state;
  switch (params.mask_scheme) {
    case MaskScheme::FullBatch:
      next.active.setOnes();
      break;
    case MaskScheme::SGD:
      for (Eigen::Index mu = 0; mu < next.active.size(); ++mu) {
        next.active(mu) = rng.bernoulli(params.b) ? 1.0 : 0.0;
      }
      break;
    case MaskScheme::PersistentSGD: {
      const MaskTransition tr = mask_transition(params.b, params.tau, params.eta, params.tau_policy);
      for (Eigen::Index mu = 0; mu < next.active.size(); ++mu) {
        const double u = rng.uniform();
        if (state.active(mu) > 0.5) {
          next.active(mu) = u < tr.p_off ? 0.0 : 1.0;
        } else {
          next.active(mu) = u < tr.p_on ? 1.0 : 0.0;
        }
      }
      break;
    }
  }
  return next;
}

Eigen::VectorXd init_weights(std::size_t d, double R, RandomStream& rng) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  if (R == 0.0) return w;
  const double sd = std::sqrt(R);
  for (Eigen::Index j = 0; j < w.size(); ++j) w(j) = sd * rng.normal();
  return w;
}

namespace {

// Forward pass h = X w / √d.
Eigen::VectorXd preactivations(const Dataset& data, const Eigen::VectorXd& w) {
  if (data.n() == 0) return Eigen::VectorXd();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(w.size()));
  return (data.patterns * w) * inv_sqrt_d;
}

Eigen::VectorXd update_from_preactivations(const RunParams& params, const LossModel& model,
                                           const Eigen::VectorXd& w, const Dataset& data,
                                           const MaskState& mask, const Eigen::VectorXd& h) {
  Eigen::VectorXd next = w - params.eta * params.lambda * w;
  if (data.n() > 0) {
    Eigen::VectorXd coeff(h.size());
    for (Eigen::Index mu = 0; mu < h.size(); ++mu) {
      coeff(mu) = mask.active(mu) * lambda_derivs(model, data.labels(mu), h(mu)).first;
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(w.size()));
    next.noalias() -= (params.eta * inv_sqrt_d) * (data.patterns.transpose() * coeff);
  }
  if (!next.allFinite()) {
    throw DivergenceError("gradient step produced non-finite weights");
  }
  return next;
}

}  // namespace

Eigen::VectorXd gd_step(const RunParams& params, const LossModel& model, const Eigen::VectorXd& w,
                        const Dataset& data, const MaskState& mask) {
  if (static_cast<std::size_t>(w.size()) != data.d() && data.n() > 0) {
    throw std::invalid_argument("weight dimension does not match dataset");
  }
  if (static_cast<std::size_t>(mask.active.size()) != data.n()) {
    throw std::invalid_argument("mask length does not match dataset");
  }
  return update_from_preactivations(params, model, w, data, mask, preactivations(data, w));
}

double masked_loss(const RunParams& params, const LossModel& model, const Eigen::VectorXd& w,
                   const Dataset& data, const MaskState& mask) {
  const Eigen::VectorXd h = preactivations(data, w);
  double total = 0.5 * params.lambda * w.squaredNorm();
  for (Eigen::Index mu = 0; mu < h.size(); ++mu) {
    total += mask.active(mu) * lambda_derivs(model, data.labels(mu), h(mu)).value;
  }
  return total;
}

TrainingRun run_training(const MixtureSpec& spec, const RunParams& params,
                         const StepObserver& observer) {
  spec.validate();
  params.validate();
  RandomStream data_rng(params.seed, Stream::Data);
  RandomStream init_rng(params.seed, Stream::Init);
  const Dataset data = sample_dataset(spec, params.d, params.n_samples(), data_rng);
  return run_training(spec, params, data, init_weights(params.d, params.R, init_rng), observer);
}

TrainingRun run_training(const MixtureSpec& spec, const RunParams& params, const Dataset& data,
                         Eigen::VectorXd w0, const StepObserver& observer) {
  const LossModel model = spec.loss_model();
  const std::size_t steps = params.n_steps();
  const double d = static_cast<double>(w0.size());
  const double alpha_eff = static_cast<double>(data.n()) / d;

  RandomStream mask_rng(params.seed, Stream::Mask);
  MaskState mask = initial_mask(params, data.n(), mask_rng);

  TrainingRun run;
  run.metrics.resize(steps + 1);
  Eigen::VectorXd w = std::move(w0);

  for (std::size_t k = 0; k <= steps; ++k) {
    const Eigen::VectorXd h = preactivations(data, w);

    MetricsSeries& ms = run.metrics;
    ms.times[k] = static_cast<double>(k) * params.eta;
    ms.m[k] = w.sum() / d;
    ms.q[k] = w.squaredNorm() / d;
    double loss = 0.0;
    std::size_t wrong = 0;
    for (Eigen::Index mu = 0; mu < h.size(); ++mu) {
      loss += lambda_derivs(model, data.labels(mu), h(mu)).value;
      if (misclassified(model, data.labels(mu), h(mu))) ++wrong;
    }
    const double n = static_cast<double>(data.n());
    ms.train_loss[k] = data.n() > 0 ? alpha_eff * loss / n : 0.0;
    ms.train_acc[k] = data.n() > 0 ? 1.0 - static_cast<double>(wrong) / n : 1.0;
    ms.gen_error[k] = gen_error(spec, ms.m[k], ms.q[k]);
    if (observer) observer(k, w);

    if (k == steps) break;
    w = update_from_preactivations(params, model, w, data, mask, h);
    mask = step_mask(params, mask, mask_rng);
  }
  run.final_weights = std::move(w);
  return run;
}

McEstimate mc_generalization(const Eigen::VectorXd& w, const MixtureSpec& spec, std::size_t n_test,
                             RandomStream& rng) {
  if (n_test < 1) throw std::invalid_argument("n_test must be >= 1");
  const LossModel model = spec.loss_model();
  const std::size_t d = static_cast<std::size_t>(w.size());
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double sqrt_delta = std::sqrt(spec.delta);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < n_test; ++i) {
    const int c = sample_coefficient(spec, rng);
    const double y = label_of(spec, c);
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dot += w(static_cast<Eigen::Index>(j)) * pattern_entry(c, inv_sqrt_d, sqrt_delta, rng.normal());
    }
    const double yhat = sign_of(phi(model, dot * inv_sqrt_d));
    if (yhat != y) ++wrong;
  }
  const double p = static_cast<double>(wrong) / static_cast<double>(n_test);
  return McEstimate{p, std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(n_test))};
}

}  // namespace gmdyn
