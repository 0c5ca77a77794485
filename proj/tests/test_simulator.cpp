#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gmdyn/analysis.hpp"
#include "gmdyn/errors.hpp"
#include "gmdyn/simulator.hpp"

using namespace gmdyn;

namespace {

MixtureSpec two(double delta = 0.5) { return MixtureSpec{ClusterKind::TwoCluster, delta, 0.0, 0.5}; }

RunParams reference_run(double b, MaskScheme scheme) {
  RunParams p;
  p.alpha = 2;
  p.d = 500;
  p.lambda = 0;
  p.eta = 0.2;
  p.b = b;
  p.tau = 1 / 0.6;
  p.R = 0.01;
  p.horizon = 20;
  p.mask_scheme = scheme;
  return p;
}

// Loss written from its definition, independent of the library's stable forms.
double reference_loss(const RunParams& p, const LossModel& model, const Eigen::VectorXd& w,
                      const Dataset& data, const MaskState& mask) {
  double total = 0.5 * p.lambda * w.squaredNorm();
  const double inv = 1.0 / std::sqrt(double(w.size()));
  for (std::size_t mu = 0; mu < data.n(); ++mu) {
    const double h = data.patterns.row(mu).dot(w) * inv;
    const double f = model.activation == Activation::Door ? h * h - model.onset * model.onset : h;
    total += mask.active(mu) * std::log1p(std::exp(-data.labels(mu) * f));
  }
  return total;
}

}  // namespace

TEST(InitWeights, ZeroVarianceGivesZeros) {
  RandomStream rng(1);
  const Eigen::VectorXd w = init_weights(50, 0.0, rng);
  EXPECT_TRUE((w.array() == 0.0).all());
}

TEST(InitWeights, ChiSquareConcentration) {
  RandomStream rng(2);
  const Eigen::VectorXd w = init_weights(10000, 1.0, rng);
  const double q = w.squaredNorm() / 10000.0;
  EXPECT_GE(q, 0.94);
  EXPECT_LE(q, 1.06);
}

TEST(InitWeights, SameSeedSameVector) {
  RandomStream a(3), b(3);
  EXPECT_EQ(init_weights(100, 0.5, a), init_weights(100, 0.5, b));
}

TEST(RunParams, Validation) {
  RunParams p = reference_run(1, MaskScheme::FullBatch);
  EXPECT_NO_THROW(p.validate());
  p.b = 0.5;
  EXPECT_THROW(p.validate(), ConfigError);
  p.mask_scheme = MaskScheme::SGD;
  EXPECT_NO_THROW(p.validate());
  p.b = 1.5;
  EXPECT_THROW(p.validate(), ConfigError);
  p = reference_run(1, MaskScheme::FullBatch);
  p.eta = 0;
  EXPECT_THROW(p.validate(), ConfigError);
  EXPECT_EQ(reference_run(1, MaskScheme::FullBatch).n_samples(), 1000u);
  EXPECT_EQ(reference_run(1, MaskScheme::FullBatch).n_steps(), 100u);
}

TEST(MaskTransition, InfeasibleStrictThrowsClampKeepsStationaryFraction) {
  // b = 0.1, 1/τ = 0.6, η = 0.2 gives (1-b)η/(bτ) = 1.08
  EXPECT_THROW(mask_transition(0.1, 1 / 0.6, 0.2, TauPolicy::Strict), ConfigError);
  const MaskTransition tr = mask_transition(0.1, 1 / 0.6, 0.2, TauPolicy::Clamp);
  EXPECT_LE(tr.p_off, 1.0);
  EXPECT_LE(tr.p_on, 1.0);
  EXPECT_NEAR(tr.p_on / (tr.p_on + tr.p_off), 0.1, 1e-15);
  const MaskTransition ok = mask_transition(0.3, 1 / 0.6, 0.2, TauPolicy::Clamp);
  EXPECT_NEAR(ok.p_on, 0.12, 1e-15);
  EXPECT_NEAR(ok.p_off, 0.28, 1e-15);
}

TEST(StepMask, PersistentWithFullBatchFractionStaysAllOnes) {
  RunParams p = reference_run(1, MaskScheme::PersistentSGD);
  RandomStream rng(4);
  MaskState s = initial_mask(p, 200, rng);
  for (int k = 0; k < 100; ++k) {
    s = step_mask(p, s, rng);
    ASSERT_TRUE((s.active.array() == 1.0).all());
  }
}

TEST(StepMask, FullBatchIsAllOnes) {
  RunParams p = reference_run(1, MaskScheme::FullBatch);
  RandomStream rng(4);
  MaskState s = initial_mask(p, 20, rng);
  s.active.setZero();
  EXPECT_TRUE((step_mask(p, s, rng).active.array() == 1.0).all());
}

TEST(StepMask, PersistentStationaryFractionAndSojourn) {
  for (double b : {0.3, 0.2}) {
    RunParams p = reference_run(b, MaskScheme::PersistentSGD);
    p.tau = b == 0.3 ? 1 / 0.6 : 1 / 0.2;
    const MaskTransition tr = mask_transition(p.b, p.tau, p.eta, p.tau_policy);
    const std::size_t n = 10, steps = 100000;
    RandomStream rng(5);
    MaskState s = initial_mask(p, n, rng);
    double active = 0;
    std::vector<std::size_t> run(n, 0);
    double runs = 0, run_steps = 0;
    for (std::size_t k = 0; k < steps; ++k) {
      active += s.active.sum();
      MaskState next = step_mask(p, s, rng);
      for (std::size_t mu = 0; mu < n; ++mu) {
        if (s.active(mu) == 1.0) ++run[mu];
        if (s.active(mu) == 1.0 && next.active(mu) == 0.0) {
          runs += 1;
          run_steps += double(run[mu]);
          run[mu] = 0;
        }
      }
      s = next;
    }
    const double frac = active / double(n * steps);
    // two-state chain: Var of the time average carries (1+λ)/(1-λ), λ = 1 - p_on - p_off
    const double lam = 1 - tr.p_on - tr.p_off;
    const double sigma = std::sqrt(b * (1 - b) / double(n * steps) * (1 + lam) / (1 - lam));
    EXPECT_LT(std::abs(frac - b), 4 * sigma) << "b=" << b;
    const double sojourn = run_steps / runs * p.eta;
    EXPECT_NEAR(sojourn / (p.tau * b / (1 - b)), 1.0, 0.05) << "b=" << b;
  }
}

TEST(StepMask, SgdFreshBernoulli) {
  RunParams p = reference_run(0.3, MaskScheme::SGD);
  RandomStream rng(6);
  MaskState s = initial_mask(p, 1000, rng);
  double active = 0;
  for (int k = 0; k < 1000; ++k) {
    s = step_mask(p, s, rng);
    active += s.active.sum();
  }
  EXPECT_LT(std::abs(active / 1e6 - 0.3), 4 * std::sqrt(0.21 / 1e6));
}

TEST(GdStep, ZeroMaskNoRidgeLeavesWeights) {
  RunParams p = reference_run(0.3, MaskScheme::SGD);
  RandomStream rng(7);
  const Dataset ds = sample_dataset(two(), 8, 6, rng);
  const Eigen::VectorXd w = init_weights(8, 1.0, rng);
  MaskState zero{Eigen::VectorXd::Zero(6)};
  EXPECT_EQ(gd_step(p, two().loss_model(), w, ds, zero), w);
  p.lambda = 0.7;
  const Eigen::VectorXd next = gd_step(p, two().loss_model(), w, ds, zero);
  EXPECT_LT((next - (1 - p.eta * p.lambda) * w).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GdStep, MatchesFiniteDifferenceOfLossOnSmallInstances) {
  std::mt19937_64 gen(2024);
  std::uniform_int_distribution<int> dim(1, 8);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  int checked = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const bool door = inst % 2 == 1;
    const MixtureSpec spec = door ? MixtureSpec{ClusterKind::ThreeCluster, 0.3, 0.7, 0.5} : two(0.5);
    RunParams p;
    p.eta = 0.1 + unif(gen);
    p.lambda = inst % 3 == 0 ? 0.0 : unif(gen);
    p.b = 0.5;
    p.mask_scheme = MaskScheme::SGD;
    const std::size_t d = dim(gen), n = dim(gen);
    RandomStream rng(1000 + inst);
    const Dataset ds = sample_dataset(spec, d, n, rng);
    const Eigen::VectorXd w = init_weights(d, 1.0, rng);
    MaskState mask{Eigen::VectorXd(n)};
    for (std::size_t mu = 0; mu < n; ++mu) mask.active(mu) = unif(gen) < 0.6 ? 1.0 : 0.0;

    const LossModel model = spec.loss_model();
    const Eigen::VectorXd step = gd_step(p, model, w, ds, mask) - w;
    Eigen::VectorXd fd(d);
    const double eps = 1e-5;
    for (std::size_t i = 0; i < d; ++i) {
      Eigen::VectorXd wp = w, wm = w;
      wp(i) += eps;
      wm(i) -= eps;
      fd(i) = -p.eta * (reference_loss(p, model, wp, ds, mask) - reference_loss(p, model, wm, ds, mask)) /
              (2 * eps);
    }
    const double scale = std::max(step.norm(), 1e-12);
    EXPECT_LE((fd - step).norm() / scale, 1e-5) << "instance " << inst;
    EXPECT_NEAR(masked_loss(p, model, w, ds, mask), reference_loss(p, model, w, ds, mask), 1e-12);
    ++checked;
  }
  EXPECT_EQ(checked, 100);
}

TEST(RunTraining, FullBatchReachesPerfectTrainingAccuracy) {
  const TrainingRun run = run_training(two(), reference_run(1, MaskScheme::FullBatch));
  bool reached = false;
  for (std::size_t k = 0; k < run.metrics.size(); ++k) {
    EXPECT_GE(run.metrics.q[k], 0.0);
    EXPECT_GE(run.metrics.train_acc[k], 0.0);
    EXPECT_LE(run.metrics.train_acc[k], 1.0);
    EXPECT_GE(run.metrics.gen_error[k], 0.0);
    EXPECT_LE(run.metrics.gen_error[k], 1.0);
    if (run.metrics.times[k] <= 20.0 + 1e-9 && run.metrics.train_acc[k] == 1.0) reached = true;
  }
  EXPECT_TRUE(reached);
  EXPECT_DOUBLE_EQ(run.metrics.times.back(), 20.0);
}

TEST(RunTraining, NoDataKeepsWeights) {
  RunParams p = reference_run(1, MaskScheme::FullBatch);
  p.alpha = 0;
  p.horizon = 2;
  const TrainingRun run = run_training(two(), p);
  for (std::size_t k = 0; k < run.metrics.size(); ++k) {
    EXPECT_EQ(run.metrics.gen_error[k], run.metrics.gen_error[0]);
    EXPECT_EQ(run.metrics.q[k], run.metrics.q[0]);
  }
}

TEST(RunTraining, PureRidgeDecay) {
  RunParams p = reference_run(1, MaskScheme::FullBatch);
  p.alpha = 0;
  p.lambda = 1;
  p.R = 1;
  p.horizon = 2;
  const TrainingRun run = run_training(two(), p);
  const double q0 = run.metrics.q[0];
  for (std::size_t k = 0; k < run.metrics.size(); ++k) {
    EXPECT_NEAR(run.metrics.q[k], std::pow(1 - p.eta * p.lambda, 2.0 * k) * q0, 1e-12 * q0);
  }
}

TEST(RunTraining, FullBatchEquivalenceAtUnitBatchFraction) {
  const TrainingRun full = run_training(two(), reference_run(1, MaskScheme::FullBatch));
  const TrainingRun sgd = run_training(two(), reference_run(1, MaskScheme::SGD));
  const TrainingRun psgd = run_training(two(), reference_run(1, MaskScheme::PersistentSGD));
  EXPECT_EQ(full.final_weights, sgd.final_weights);
  EXPECT_EQ(full.final_weights, psgd.final_weights);
  EXPECT_EQ(full.metrics.gen_error, sgd.metrics.gen_error);
  EXPECT_EQ(full.metrics.gen_error, psgd.metrics.gen_error);
  EXPECT_EQ(full.metrics.train_loss, psgd.metrics.train_loss);
}

TEST(RunTraining, SameSeedIsReproducible) {
  const RunParams p = reference_run(0.3, MaskScheme::PersistentSGD);
  EXPECT_EQ(run_training(two(), p).final_weights, run_training(two(), p).final_weights);
}

TEST(McGeneralization, ZeroWeightsErrHalf) {
  RandomStream rng(8);
  const McEstimate e = mc_generalization(Eigen::VectorXd::Zero(50), two(), 100000, rng);
  EXPECT_LT(std::abs(e.value - 0.5), 4 * e.std_error + 1e-12);
  EXPECT_THROW(mc_generalization(Eigen::VectorXd::Zero(5), two(), 0, rng), std::invalid_argument);
}

TEST(McGeneralization, AlignedWeightsMatchClosedForm) {
  const double delta = 0.5;
  const std::size_t d = 200;
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(d, 1e3);
  RandomStream rng(9);
  const McEstimate e = mc_generalization(w, two(delta), 400000, rng);
  const double closed = 0.5 * std::erfc(1.0 / std::sqrt(2 * delta));
  EXPECT_LT(std::abs(e.value - closed), 3 * e.std_error);
}

TEST(McGeneralization, ClosedFormAuditAlongTrainedTrajectory) {
  RunParams p = reference_run(1, MaskScheme::FullBatch);
  p.d = 2000;
  p.alpha = 0.5;
  p.horizon = 1.0;
  const MixtureSpec spec = two();
  int audited = 0;
  RandomStream test_rng(77);
  run_training(spec, p, [&](std::size_t step, const Eigen::VectorXd& w) {
    if (step % 2 != 1) return;
    const McEstimate mc = mc_generalization(w, spec, 100000, test_rng);
    const double d = double(w.size());
    const double closed = gen_error(spec, w.sum() / d, w.squaredNorm() / d);
    EXPECT_LT(std::abs(mc.value - closed), 3 * mc.std_error) << "step " << step;
    ++audited;
  });
  EXPECT_EQ(audited, 3);
}
