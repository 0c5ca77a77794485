#include "gmdyn/dmft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "gmdyn/analysis.hpp"
#include "gmdyn/errors.hpp"
#include "gmdyn/parallel.hpp"

namespace gmdyn {

namespace {

// Paths per accumulator block and blocks per merge wave. Both are fixed so
// the reduction tree never depends on the worker count.
constexpr std::size_t kBlockPaths = 128;
constexpr std::size_t kWaveBlocks = 16;

void check_length(Eigen::Index got, std::size_t want, const char* what) {
  if (static_cast<std::size_t>(got) != want) {
    throw std::invalid_argument(std::string(what) + " does not match the time grid");
  }
}

void check_path_inputs(const KernelSet& k, const PathDraws& d, const TimeGrid& grid) {
  const std::size_t n = grid.n_points();
  check_length(k.m.size(), n, "kernel set");
  check_length(k.memory.rows(), n, "memory kernel");
  check_length(d.mask.size(), n, "mask path");
  check_length(d.noise.size(), n, "noise path");
}

// h and r on the grid; Y is null for the unperturbed process.
void integrate_h(const KernelSet& k, const EffectiveProcess& p, const PathDraws& d, double dt,
                 const double* perturbation, double* h, double* r) {
  const std::size_t n = k.size();
  const double sd = std::sqrt(p.delta);
  const double shift = static_cast<double>(d.c) + sd * d.h0;
  h[0] = d.h_init;
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = sd * h[i] + k.m(static_cast<Eigen::Index>(i)) * shift;
    if (i + 1 == n) break;
    const auto ii = static_cast<Eigen::Index>(i);
    const double* mr = k.memory.row(ii).data();
    double mem = 0.0;
    for (std::size_t u = 0; u < i; ++u) mem += mr[u] * h[u];
    const double y_shift = perturbation ? perturbation[i] : 0.0;
    const double force = d.mask(ii) * lambda_derivs(p.model, d.y, r[i] - y_shift).first;
    h[i + 1] = h[i] + dt * (-(p.lambda + k.lambda_hat(ii)) * h[i] - sd * force + dt * mem +
                            d.noise(ii));
    if (!std::isfinite(h[i + 1])) {
      throw DivergenceError("effective process diverged at t = " +
                            std::to_string(static_cast<double>(i + 1) * dt) +
                            "; reduce the time step");
    }
  }
}

void integrate_response(const KernelSet& k, const EffectiveProcess& p, const PathDraws& d,
                        double dt, const double* r, RowMatrix& g) {
  const std::size_t n = k.size();
  const double sd = std::sqrt(p.delta);
  const double dt2 = dt * dt;
  g.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  g.setZero();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double s = d.mask(ii);
    const double curv = s * lambda_derivs(p.model, d.y, r[i]).second;
    const double a = 1.0 - dt * (p.lambda + k.lambda_hat(ii) + p.delta * curv);
    double* next = g.row(ii + 1).data();
    const double* cur = g.row(ii).data();
    for (std::size_t j = 0; j < i; ++j) next[j] = a * cur[j];
    const double* mr = k.memory.row(ii).data();
    for (std::size_t u = 1; u < i; ++u) {
      const double coef = dt2 * mr[u];
      if (coef == 0.0) continue;
      const double* gu = g.row(static_cast<Eigen::Index>(u)).data();
      for (std::size_t j = 0; j < u; ++j) next[j] += coef * gu[j];
    }
    next[i] = dt * sd * curv;
    for (std::size_t j = 0; j <= i; ++j) {
      if (!std::isfinite(next[j])) {
        throw DivergenceError("response function diverged; reduce the time step");
      }
    }
  }
}

// Σ_{u<i} M_R(i,u) m(u) for every i.
Eigen::VectorXd memory_times_m(const KernelSet& k) {
  const std::size_t n = k.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double* mr = k.memory.row(static_cast<Eigen::Index>(i)).data();
    double acc = 0.0;
    for (std::size_t u = 0; u < i; ++u) acc += mr[u] * k.m(static_cast<Eigen::Index>(u));
    out(static_cast<Eigen::Index>(i)) = acc;
  }
  return out;
}

void integrate_w(const KernelSet& k, const EffectiveProcess& p, const PathDraws& d, double dt,
                 const Eigen::VectorXd& mem_m, double* w) {
  const std::size_t n = k.size();
  w[0] = d.w_init;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double* mr = k.memory.row(ii).data();
    double mem = 0.0;
    for (std::size_t u = 0; u < i; ++u) mem += mr[u] * w[u];
    const double lh = k.lambda_hat(ii);
    w[i + 1] = w[i] + dt * (-(p.lambda + lh) * w[i] + dt * (mem - d.h0 * mem_m(ii)) + d.noise(ii) +
                            d.h0 * (lh * k.m(ii) - k.mu(ii)));
    if (!std::isfinite(w[i + 1])) {
      throw DivergenceError("weight process diverged; reduce the time step");
    }
  }
}

double inf_norm(const Eigen::Ref<const Eigen::MatrixXd>& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

double rel_change(const Eigen::Ref<const Eigen::MatrixXd>& next,
                  const Eigen::Ref<const Eigen::MatrixXd>& old) {
  return inf_norm(next - old) / (inf_norm(old) + 1e-12);
}

EffectiveProcess process_of(const MixtureSpec& spec, const RunParams& params) {
  return EffectiveProcess{params.alpha, spec.delta, params.lambda, spec.loss_model()};
}

// Streams the whole ensemble through fixed-size accumulator blocks.
KernelSet estimate_streaming(const KernelSet& kernels, const MixtureSpec& spec,
                             const RunParams& params, const SolverConfig& config, double m0,
                             const TimeGrid& grid, const NoiseSampler& sampler) {
  const std::size_t n = grid.n_points();
  const EffectiveProcess process = process_of(spec, params);
  const std::size_t n_blocks = (config.n_paths + kBlockPaths - 1) / kBlockPaths;

  KernelAccumulator total(n);
  for (std::size_t wave = 0; wave < n_blocks; wave += kWaveBlocks) {
    const std::size_t in_wave = std::min(kWaveBlocks, n_blocks - wave);
    std::vector<KernelAccumulator> accs(in_wave, KernelAccumulator(n));
    parallel_for(in_wave, config.workers, [&](std::size_t b) {
      const std::size_t block = wave + b;
      const std::size_t first = block * kBlockPaths;
      const std::size_t last = std::min(first + kBlockPaths, config.n_paths);
      std::vector<double> h(n), r(n);
      RowMatrix g;
      for (std::size_t path = first; path < last; ++path) {
        const PathDraws d = draw_path(path, params.seed, spec, params, config, m0, grid, sampler);
        integrate_h(kernels, process, d, grid.dt, nullptr, h.data(), r.data());
        integrate_response(kernels, process, d, grid.dt, r.data(), g);
        accs[b].add(std::span<const double>(d.mask.data(), n), r, d.y, d.c, d.h0, &g,
                    process.model, process.delta);
      }
    });
    for (const auto& acc : accs) total.merge(acc);
  }
  return total.finalize(process.alpha, process.delta, grid.dt);
}

// Slope of log residual against iteration over the post burn-in half.
bool residual_not_decreasing(const std::vector<double>& history) {
  if (history.size() < 6) return false;
  const std::size_t start = history.size() / 2;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double count = 0;
  for (std::size_t i = start; i < history.size(); ++i) {
    const double x = static_cast<double>(i);
    const double y = std::log(std::max(history[i], 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    count += 1.0;
  }
  const double denom = count * sxx - sx * sx;
  if (denom <= 0.0) return false;
  return (count * sxy - sx * sy) / denom >= 0.0;
}

}  // namespace

void TimeGrid::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("time step must be positive");
  if (n_steps < 1) throw ConfigError("time grid needs at least one step");
}

TimeGrid TimeGrid::from_run(const RunParams& params) {
  return TimeGrid{params.eta, params.n_steps()};
}

KernelSet KernelSet::zeros(std::size_t n_points) {
  const auto n = static_cast<Eigen::Index>(n_points);
  return KernelSet{RowMatrix::Zero(n, n), RowMatrix::Zero(n, n), Eigen::VectorXd::Zero(n),
                   Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
}

DmftMaskMode dmft_mask_mode(MaskScheme scheme) {
  switch (scheme) {
    case MaskScheme::FullBatch:
      return DmftMaskMode::FullBatch;
    case MaskScheme::SGD:
      return DmftMaskMode::SGDInspired;
    case MaskScheme::PersistentSGD:
      return DmftMaskMode::PersistentSGD;
  }
  return DmftMaskMode::FullBatch;
}

void SolverConfig::validate() const {
  if (n_paths < 1) throw ConfigError("n_paths must be >= 1");
  if (!(damping > 0.0 && damping <= 1.0)) throw ConfigError("damping must lie in (0, 1]");
  if (!(tol > 0.0)) throw ConfigError("tol must be > 0");
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (m0 && !std::isfinite(*m0)) throw ConfigError("m0 must be finite");
  if (d_ref && !(*d_ref > 0.0)) throw ConfigError("d_ref must be > 0");
}

NoiseSampler::NoiseSampler(const RowMatrix& cov) {
  const Eigen::Index n = cov.rows();
  if (cov.cols() != n) throw std::invalid_argument("noise covariance must be square");
  factor_ = RowMatrix::Zero(n, n);
  if (n == 0 || (cov.array() == 0.0).all()) {
    zero_ = true;
    return;
  }
  if (!cov.allFinite()) throw NonPsdKernelError("noise covariance has non-finite entries");
  const double max_diag = cov.diagonal().maxCoeff();
  if (!(max_diag > 0.0)) throw NonPsdKernelError("noise covariance has no positive diagonal entry");

  const Eigen::MatrixXd base = cov;
  Eigen::LLT<Eigen::MatrixXd> llt(base);
  if (llt.info() == Eigen::Success) {
    factor_ = llt.matrixL();
    return;
  }
  double eps = 1e-10 * max_diag;
  for (int attempt = 0; attempt < 3; ++attempt, eps *= 100.0) {
    llt.compute(base + eps * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) {
      factor_ = llt.matrixL();
      jitter_ = eps;
      return;
    }
  }
  throw NonPsdKernelError("noise covariance is not positive semidefinite (Cholesky failed after " +
                          std::to_string(eps / 100.0) + " jitter)");
}

void NoiseSampler::apply(const double* z, double* out) const {
  const auto n = static_cast<std::size_t>(factor_.rows());
  if (zero_) {
    std::fill(out, out + n, 0.0);
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = factor_.row(static_cast<Eigen::Index>(i)).data();
    double acc = 0.0;
    for (std::size_t j = 0; j <= i; ++j) acc += row[j] * z[j];
    out[i] = acc;
  }
}

Eigen::VectorXd NoiseSampler::apply(const Eigen::VectorXd& z) const {
  check_length(z.size(), static_cast<std::size_t>(factor_.rows()), "standard normal vector");
  Eigen::VectorXd out(z.size());
  apply(z.data(), out.data());
  return out;
}

Eigen::VectorXd NoiseSampler::sample(RandomStream& rng) const {
  Eigen::VectorXd z(factor_.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return apply(z);
}

Eigen::VectorXd sample_noise(const RowMatrix& cov, RandomStream& rng) {
  return NoiseSampler(cov).sample(rng);
}

Eigen::VectorXd preactivation_path(const Eigen::VectorXd& h, const Eigen::VectorXd& m, double delta,
                                   int c, double h0) {
  if (h.size() != m.size()) throw std::invalid_argument("h and m lengths differ");
  const double sd = std::sqrt(delta);
  const double shift = static_cast<double>(c) + sd * h0;
  Eigen::VectorXd r(h.size());
  for (Eigen::Index i = 0; i < h.size(); ++i) r(i) = sd * h(i) + m(i) * shift;
  return r;
}

Eigen::VectorXd simulate_h_path(const KernelSet& kernels, const EffectiveProcess& process,
                                const PathDraws& draws, const TimeGrid& grid,
                                std::span<const double> perturbation) {
  check_path_inputs(kernels, draws, grid);
  const std::size_t n = grid.n_points();
  if (!perturbation.empty() && perturbation.size() != n) {
    throw std::invalid_argument("perturbation does not match the time grid");
  }
  Eigen::VectorXd h(static_cast<Eigen::Index>(n));
  std::vector<double> r(n);
  integrate_h(kernels, process, draws, grid.dt, perturbation.empty() ? nullptr : perturbation.data(),
              h.data(), r.data());
  return h;
}

RowMatrix simulate_response_path(const KernelSet& kernels, const EffectiveProcess& process,
                                 const Eigen::VectorXd& h, const PathDraws& draws,
                                 const TimeGrid& grid) {
  check_path_inputs(kernels, draws, grid);
  check_length(h.size(), grid.n_points(), "h path");
  const Eigen::VectorXd r = preactivation_path(h, kernels.m, process.delta, draws.c, draws.h0);
  RowMatrix g;
  integrate_response(kernels, process, draws, grid.dt, r.data(), g);
  return g;
}

Eigen::VectorXd sample_mask_path(DmftMaskMode mode, double b, double tau, const TimeGrid& grid,
                                 RandomStream& rng, TauPolicy policy) {
  const auto n = static_cast<Eigen::Index>(grid.n_points());
  Eigen::VectorXd s = Eigen::VectorXd::Ones(n);
  switch (mode) {
    case DmftMaskMode::FullBatch:
      break;
    case DmftMaskMode::SGDInspired:
      for (Eigen::Index i = 0; i < n; ++i) s(i) = rng.bernoulli(b) ? 1.0 : 0.0;
      break;
    case DmftMaskMode::PersistentSGD: {
      const MaskTransition tr = mask_transition(b, tau, grid.dt, policy);
      s(0) = rng.bernoulli(b) ? 1.0 : 0.0;
      for (Eigen::Index i = 1; i < n; ++i) {
        const double u = rng.uniform();
        if (s(i - 1) > 0.5) {
          s(i) = u < tr.p_off ? 0.0 : 1.0;
        } else {
          s(i) = u < tr.p_on ? 1.0 : 0.0;
        }
      }
      break;
    }
  }
  return s;
}

Eigen::VectorXd integrate_magnetization(const Eigen::VectorXd& mu, double lambda, double m0,
                                        const TimeGrid& grid) {
  check_length(mu.size(), grid.n_points(), "mu");
  Eigen::VectorXd m(mu.size());
  m(0) = m0;
  for (Eigen::Index i = 0; i + 1 < mu.size(); ++i) {
    m(i + 1) = m(i) + grid.dt * (-lambda * m(i) - mu(i));
  }
  return m;
}

Eigen::VectorXd simulate_w_path(const KernelSet& kernels, const EffectiveProcess& process,
                                const PathDraws& draws, const TimeGrid& grid) {
  check_path_inputs(kernels, draws, grid);
  Eigen::VectorXd w(static_cast<Eigen::Index>(grid.n_points()));
  integrate_w(kernels, process, draws, grid.dt, memory_times_m(kernels), w.data());
  return w;
}

KernelAccumulator::KernelAccumulator(std::size_t n_points)
    : n_(n_points),
      lambda_hat_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_points))),
      mu_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_points))),
      noise_(RowMatrix::Zero(static_cast<Eigen::Index>(n_points),
                             static_cast<Eigen::Index>(n_points))),
      memory_(RowMatrix::Zero(static_cast<Eigen::Index>(n_points),
                              static_cast<Eigen::Index>(n_points))) {}

void KernelAccumulator::add(std::span<const double> mask, std::span<const double> preact, double y,
                            int c, double h0, const RowMatrix* response, const LossModel& model,
                            double delta) {
  if (mask.size() != n_ || preact.size() != n_) {
    throw std::invalid_argument("path length does not match the accumulator");
  }
  if (response && (static_cast<std::size_t>(response->rows()) != n_ ||
                   static_cast<std::size_t>(response->cols()) != n_)) {
    throw std::invalid_argument("response matrix does not match the accumulator");
  }
  const double shift = static_cast<double>(c) + std::sqrt(delta) * h0;
  std::vector<double> v(n_), u(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    const double s = mask[i];
    if (s == 0.0) {
      v[i] = 0.0;
      u[i] = 0.0;
      continue;
    }
    const LossDerivs ld = lambda_derivs(model, y, preact[i]);
    v[i] = s * ld.first;
    u[i] = s * ld.second;
  }
  for (std::size_t i = 0; i < n_; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    lambda_hat_(ii) += u[i];
    mu_(ii) += shift * v[i];
    if (v[i] != 0.0) {
      double* row = noise_.row(ii).data();
      for (std::size_t j = 0; j <= i; ++j) row[j] += v[i] * v[j];
    }
    if (response && u[i] != 0.0) {
      double* row = memory_.row(ii).data();
      const double* g = response->row(ii).data();
      for (std::size_t j = 0; j < i; ++j) row[j] += u[i] * g[j];
    }
  }
  ++count_;
}

void KernelAccumulator::merge(const KernelAccumulator& other) {
  if (other.n_ != n_) throw std::invalid_argument("accumulator sizes differ");
  lambda_hat_ += other.lambda_hat_;
  mu_ += other.mu_;
  noise_ += other.noise_;
  memory_ += other.memory_;
  count_ += other.count_;
}

KernelSet KernelAccumulator::finalize(double alpha, double delta, double dt) const {
  KernelSet k = KernelSet::zeros(n_);
  if (count_ == 0) return k;
  const double inv = 1.0 / static_cast<double>(count_);
  k.lambda_hat = (alpha * delta * inv) * lambda_hat_;
  k.mu = (alpha * inv) * mu_;
  k.noise = (alpha * delta * inv) * noise_;
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      k.noise(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
          k.noise(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  k.memory = (alpha * delta * std::sqrt(delta) * inv / dt) * memory_;
  return k;
}

KernelSet estimate_kernels(const PathEnsemble& ensemble, const EffectiveProcess& process) {
  const std::size_t n = ensemble.grid.n_points();
  KernelAccumulator acc(n);
  for (const EffectivePath& path : ensemble.paths) {
    check_length(path.r.size(), n, "preactivation path");
    const RowMatrix* g = path.response.size() > 0 ? &path.response : nullptr;
    acc.add(std::span<const double>(path.draws.mask.data(), n),
            std::span<const double>(path.r.data(), n), path.draws.y, path.draws.c, path.draws.h0, g,
            process.model, process.delta);
  }
  return acc.finalize(process.alpha, process.delta, ensemble.grid.dt);
}

KernelSet damp_kernels(const KernelSet& old, const KernelSet& estimate, double damping) {
  KernelSet next;
  const double keep = 1.0 - damping;
  next.lambda_hat = keep * old.lambda_hat + damping * estimate.lambda_hat;
  next.mu = keep * old.mu + damping * estimate.mu;
  next.noise = keep * old.noise + damping * estimate.noise;
  next.noise = (0.5 * (next.noise + next.noise.transpose())).eval();
  next.memory = keep * old.memory + damping * estimate.memory;
  next.m = old.m;
  return next;
}

KernelSet update_kernels(const PathEnsemble& ensemble, const EffectiveProcess& process,
                         const KernelSet& old, double damping) {
  if (ensemble.paths.empty()) throw std::invalid_argument("ensemble is empty");
  return damp_kernels(old, estimate_kernels(ensemble, process), damping);
}

double kernel_residual(const KernelSet& next, const KernelSet& old) {
  return std::max({rel_change(next.noise, old.noise), rel_change(next.memory, old.memory),
                   rel_change(next.lambda_hat, old.lambda_hat), rel_change(next.mu, old.mu),
                   rel_change(next.m, old.m)});
}

DysonSolution solve_dyson(const KernelSet& kernels, double lambda, double R, const TimeGrid& grid) {
  const std::size_t n = grid.n_points();
  check_length(kernels.m.size(), n, "kernel set");
  const double dt = grid.dt;
  const double dt2 = dt * dt;
  const auto& mr = kernels.memory;
  const auto& mc = kernels.noise;
  const auto& m = kernels.m;
  const auto N = static_cast<Eigen::Index>(n);

  DysonSolution sol{RowMatrix::Zero(N, N), RowMatrix::Zero(N, N)};
  RowMatrix& C = sol.correlation;
  RowMatrix& Rr = sol.response;
  C(0, 0) = std::max(R, m(0) * m(0));
  Rr(0, 0) = 1.0;

  for (Eigen::Index i = 0; i + 1 < N; ++i) {
    const double decay = 1.0 - dt * (lambda + kernels.lambda_hat(i));

    for (Eigen::Index k = 0; k <= i; ++k) {
      double acc = 0.0;
      for (Eigen::Index s = k; s < i; ++s) acc += mr(i, s) * Rr(s, k);
      Rr(i + 1, k) = decay * Rr(i, k) + dt2 * acc;
    }
    Rr(i + 1, i + 1) = 1.0;

    double mem_m = 0.0;
    for (Eigen::Index s = 0; s < i; ++s) mem_m += mr(i, s) * m(s);
    const double drive = dt * (kernels.lambda_hat(i) * m(i) - kernels.mu(i) - dt * mem_m);

    // off-diagonal C(i+1, j), j <= i
    for (Eigen::Index j = 0; j <= i; ++j) {
      double mem = 0.0;
      for (Eigen::Index s = 0; s < i; ++s) mem += mr(i, s) * C(s, j);
      double noise = 0.0;
      for (Eigen::Index k = 0; k < j; ++k) noise += mc(i, k) * Rr(j, k + 1);
      const double v = decay * C(i, j) + dt2 * mem + drive * m(j) + dt2 * noise;
      C(i + 1, j) = v;
      C(j, i + 1) = v;
    }
    // equal time
    double mem = 0.0;
    for (Eigen::Index s = 0; s < i; ++s) mem += mr(i, s) * C(i + 1, s);
    double noise = 0.0;
    for (Eigen::Index k = 0; k <= i; ++k) noise += mc(i, k) * Rr(i + 1, k + 1);
    C(i + 1, i + 1) = decay * C(i + 1, i) + dt2 * mem + drive * m(i + 1) + dt2 * noise;
  }
  return sol;
}

void DmftResult::require_converged() const {
  if (!diagnostics.converged) {
    throw NonConvergenceError("DMFT fixed point not reached after " +
                                  std::to_string(diagnostics.iterations) +
                                  " iterations (residual " + std::to_string(diagnostics.residual) +
                                  ")",
                              diagnostics.iterations, diagnostics.residual);
  }
}

double default_m0(const MixtureSpec& spec, const RunParams& params, const SolverConfig& config) {
  if (config.m0) return *config.m0;
  if (spec.kind == ClusterKind::TwoCluster) return 0.0;
  const double d_ref = config.d_ref ? *config.d_ref : static_cast<double>(params.d);
  // E|N(0, R/d)|
  return std::sqrt(2.0 * params.R / (std::numbers::pi * d_ref));
}

PathDraws draw_path(std::size_t index, std::uint64_t seed, const MixtureSpec& spec,
                    const RunParams& params, const SolverConfig& config, double m0,
                    const TimeGrid& grid, const NoiseSampler& sampler) {
  const std::size_t n = grid.n_points();
  const std::size_t stream_index = config.antithetic ? index / 2 : index;
  const bool mirrored = config.antithetic && (index % 2 == 1);

  RandomStream rng(seed, Stream::Path, stream_index);
  PathDraws d;
  d.c = sample_coefficient(spec, rng);
  d.h0 = rng.normal();
  d.h_init = std::sqrt(params.R) * rng.normal();
  const double z_w = rng.normal();
  Eigen::VectorXd z(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  d.noise = sampler.apply(z);

  RandomStream mask_rng(seed, Stream::PathMask, stream_index);
  d.mask = sample_mask_path(config.mask_mode, params.b, params.tau, grid, mask_rng, params.tau_policy);

  if (mirrored) {
    d.c = -d.c;
    d.h0 = -d.h0;
  }
  d.y = label_of(spec, d.c);
  d.w_init = m0 * d.h0 + std::sqrt(std::max(params.R - m0 * m0, 0.0)) * z_w;
  return d;
}

PathEnsemble sample_ensemble(const KernelSet& kernels, const MixtureSpec& spec,
                             const RunParams& params, const SolverConfig& config,
                             bool with_response, bool with_weights) {
  const TimeGrid grid = TimeGrid::from_run(params);
  const EffectiveProcess process = process_of(spec, params);
  const double m0 = kernels.m.size() > 0 ? kernels.m(0) : 0.0;
  const NoiseSampler sampler(kernels.noise);
  const Eigen::VectorXd mem_m = memory_times_m(kernels);
  const std::size_t n = grid.n_points();

  PathEnsemble ens{grid, kernels.m, std::vector<EffectivePath>(config.n_paths)};
  parallel_for(config.n_paths, config.workers, [&](std::size_t p) {
    EffectivePath& path = ens.paths[p];
    path.draws = draw_path(p, params.seed, spec, params, config, m0, grid, sampler);
    path.h.resize(static_cast<Eigen::Index>(n));
    path.r.resize(static_cast<Eigen::Index>(n));
    integrate_h(kernels, process, path.draws, grid.dt, nullptr, path.h.data(), path.r.data());
    if (with_response) {
      integrate_response(kernels, process, path.draws, grid.dt, path.r.data(), path.response);
    }
    if (with_weights) {
      path.w.resize(static_cast<Eigen::Index>(n));
      integrate_w(kernels, process, path.draws, grid.dt, mem_m, path.w.data());
    }
  });
  return ens;
}

DmftResult solve_dmft(const MixtureSpec& spec, const RunParams& params, const SolverConfig& config,
                      const KernelSet* warm_start) {
  spec.validate();
  params.validate();
  config.validate();
  const TimeGrid grid = TimeGrid::from_run(params);
  grid.validate();
  const std::size_t n = grid.n_points();
  const EffectiveProcess process = process_of(spec, params);
  const double m0 = default_m0(spec, params, config);

  DmftResult result;
  KernelSet kernels;
  if (warm_start) {
    if (warm_start->size() != n) {
      throw ConfigError("warm-start kernels have " + std::to_string(warm_start->size()) +
                        " time points, expected " + std::to_string(n));
    }
    kernels = *warm_start;
  } else {
    kernels = KernelSet::zeros(n);
    kernels.m = integrate_magnetization(kernels.mu, params.lambda, m0, grid);
  }

  DmftDiagnostics& diag = result.diagnostics;
  for (std::size_t it = 1; it <= config.max_iters; ++it) {
    const NoiseSampler sampler(kernels.noise);
    diag.noise_jitter = std::max(diag.noise_jitter, sampler.jitter());
    const KernelSet estimate =
        estimate_streaming(kernels, spec, params, config, m0, grid, sampler);
    KernelSet next = damp_kernels(kernels, estimate, config.damping);
    next.m = integrate_magnetization(next.mu, params.lambda, m0, grid);
    const double res = kernel_residual(next, kernels);
    diag.residual_history.push_back(res);
    diag.iterations = it;
    diag.residual = res;
    kernels = std::move(next);
    if (res < config.tol) {
      diag.converged = true;
      break;
    }
  }
  diag.residual_alert = residual_not_decreasing(diag.residual_history);

  // Observables under the final kernels.
  const NoiseSampler sampler(kernels.noise);
  const Eigen::VectorXd mem_m = memory_times_m(kernels);
  const auto P = static_cast<Eigen::Index>(config.n_paths);
  const auto N = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd preacts(P, N);
  Eigen::MatrixXd weights(P, N);
  std::vector<double> labels(config.n_paths);
  const std::size_t n_blocks = (config.n_paths + kBlockPaths - 1) / kBlockPaths;
  parallel_for(n_blocks, config.workers, [&](std::size_t block) {
    const std::size_t first = block * kBlockPaths;
    const std::size_t last = std::min(first + kBlockPaths, config.n_paths);
    std::vector<double> h(n), r(n), w(n);
    for (std::size_t path = first; path < last; ++path) {
      const PathDraws d = draw_path(path, params.seed, spec, params, config, m0, grid, sampler);
      integrate_h(kernels, process, d, grid.dt, nullptr, h.data(), r.data());
      integrate_w(kernels, process, d, grid.dt, mem_m, w.data());
      const auto row = static_cast<Eigen::Index>(path);
      for (std::size_t i = 0; i < n; ++i) {
        preacts(row, static_cast<Eigen::Index>(i)) = r[i];
        weights(row, static_cast<Eigen::Index>(i)) = w[i];
      }
      labels[path] = d.y;
    }
  });

  const LossAccuracy la = ensemble_loss_accuracy(labels, preacts, process.alpha, process.model);
  MetricsSeries& ms = result.metrics;
  ms.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    double sq = 0.0;
    for (Eigen::Index p = 0; p < P; ++p) sq += weights(p, ii) * weights(p, ii);
    ms.times[i] = grid.time(i);
    ms.m[i] = kernels.m(ii);
    ms.q[i] = sq / static_cast<double>(P);
    ms.train_loss[i] = la.loss[i];
    ms.train_acc[i] = la.accuracy[i];
    ms.gen_error[i] = gen_error(spec, ms.m[i], ms.q[i]);
  }
  result.kernels = std::move(kernels);
  return result;
}

}  // namespace gmdyn
