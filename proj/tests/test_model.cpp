#include <cmath>

#include <gtest/gtest.h>

#include "gmdyn/errors.hpp"
#include "gmdyn/model.hpp"
#include "gmdyn/rng.hpp"
#include "oracles.hpp"

using namespace gmdyn;

namespace {

MixtureSpec two(double delta = 0.5) { return MixtureSpec{ClusterKind::TwoCluster, delta, 0.0, 0.5}; }
MixtureSpec three(double rho = 0.5, double delta = 0.05, double onset = 0.7) {
  return MixtureSpec{ClusterKind::ThreeCluster, delta, onset, rho};
}

}  // namespace

TEST(SampleCoefficient, TwoClusterPlusFrequencyWithinFourSigma) {
  RandomStream rng(11);
  const int n = 1'000'000;
  int plus = 0;
  for (int i = 0; i < n; ++i) {
    const int c = sample_coefficient(two(), rng);
    ASSERT_TRUE(c == 1 || c == -1);
    plus += c == 1;
  }
  const double sigma = std::sqrt(0.25 / n);
  EXPECT_LT(std::abs(plus / double(n) - 0.5), 4 * sigma);
}

TEST(SampleCoefficient, ThreeClusterChiSquareAtHalfAndPointThree) {
  for (double rho : {0.5, 0.3}) {
    RandomStream rng(12);
    const int n = 1'000'000;
    double counts[3] = {0, 0, 0};
    for (int i = 0; i < n; ++i) counts[sample_coefficient(three(rho), rng) + 1] += 1;
    const double expected[3] = {rho / 2 * n, (1 - rho) * n, rho / 2 * n};
    double chi2 = 0;
    for (int k = 0; k < 3; ++k) chi2 += std::pow(counts[k] - expected[k], 2) / expected[k];
    // 2 degrees of freedom, 99.9% quantile 13.8
    EXPECT_LT(chi2, 13.8) << "rho=" << rho;
  }
}

TEST(SampleCoefficient, ThreeClusterHalfHasZeroWithProbabilityHalf) {
  RandomStream rng(13);
  const int n = 1'000'000;
  int zeros = 0;
  for (int i = 0; i < n; ++i) zeros += sample_coefficient(three(), rng) == 0;
  EXPECT_LT(std::abs(zeros / double(n) - 0.5), 4 * std::sqrt(0.25 / n));
}

TEST(LabelOf, Examples) {
  EXPECT_EQ(label_of(three(), 0), -1);
  EXPECT_EQ(label_of(three(), -1), 1);
  EXPECT_EQ(label_of(three(), 1), 1);
  EXPECT_EQ(label_of(two(), -1), -1);
  EXPECT_EQ(label_of(two(), 1), 1);
  EXPECT_THROW(label_of(two(), 0), std::invalid_argument);
  EXPECT_THROW(label_of(three(), 2), std::invalid_argument);
}

TEST(LabelOf, EmpiricalLabelFrequenciesFollowLaw) {
  RandomStream rng(14);
  const int n = 1'000'000;
  const double rho = 0.3;
  int neg = 0;
  for (int i = 0; i < n; ++i) neg += label_of(three(rho), sample_coefficient(three(rho), rng)) == -1;
  EXPECT_LT(std::abs(neg / double(n) - (1 - rho)), 4 * std::sqrt(rho * (1 - rho) / n));
}

TEST(MixtureSpec, Validation) {
  EXPECT_NO_THROW(two().validate());
  EXPECT_THROW((MixtureSpec{ClusterKind::TwoCluster, 0.0, 0.0, 0.5}.validate()), ConfigError);
  EXPECT_THROW((MixtureSpec{ClusterKind::ThreeCluster, 0.1, 0.0, 0.5}.validate()), ConfigError);
  EXPECT_THROW((MixtureSpec{ClusterKind::ThreeCluster, 0.1, 0.7, 1.0}.validate()), ConfigError);
  EXPECT_THROW((MixtureSpec{ClusterKind::ThreeCluster, 0.1, 0.7, 0.0}.validate()), ConfigError);
}

TEST(SampleDataset, NoiselessRowsEqualClusterCenter) {
  RandomStream rng(1);
  const Dataset ds = sample_dataset(two(1e-40), 9, 20, rng);
  for (std::size_t mu = 0; mu < ds.n(); ++mu) {
    for (std::size_t i = 0; i < ds.d(); ++i) {
      EXPECT_NEAR(ds.patterns(mu, i), ds.coefficients[mu] / 3.0, 1e-15);
    }
    EXPECT_EQ(ds.labels(mu), ds.coefficients[mu]);
  }
}

TEST(SampleDataset, DimensionOneIsCenterPlusNoise) {
  const MixtureSpec spec = two(0.5);
  RandomStream rng(21);
  const Dataset ds = sample_dataset(spec, 1, 1, rng);
  RandomStream replay(21);
  const int c = sample_coefficient(spec, replay);
  const double z = replay.normal();
  EXPECT_EQ(ds.coefficients[0], c);
  EXPECT_EQ(ds.patterns(0, 0), c * 1.0 + std::sqrt(0.5) * z);
}

TEST(SampleDataset, ReconstructionFromStoredNoiseIsBitExact) {
  const MixtureSpec spec = three(0.3, 0.2, 0.7);
  const std::size_t d = 17, n = 31;
  RandomStream rng(99);
  const Dataset ds = sample_dataset(spec, d, n, rng);
  RandomStream replay(99);
  for (std::size_t mu = 0; mu < n; ++mu) {
    const int c = sample_coefficient(spec, replay);
    ASSERT_EQ(c, ds.coefficients[mu]);
    EXPECT_EQ(ds.labels(mu), label_of(spec, c));
    for (std::size_t i = 0; i < d; ++i) {
      const double z = replay.normal();
      EXPECT_EQ(ds.patterns(mu, i), pattern_entry(c, 1.0 / std::sqrt(double(d)), std::sqrt(0.2), z));
    }
  }
}

TEST(SampleDataset, PositiveClusterMeanIsCenter) {
  const std::size_t d = 1000, n = 2000;
  const double delta = 0.5;
  RandomStream rng(5);
  const Dataset ds = sample_dataset(two(delta), d, n, rng);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  double count = 0;
  for (std::size_t mu = 0; mu < n; ++mu) {
    if (ds.coefficients[mu] == 1) {
      sum += ds.patterns.row(mu).transpose();
      count += 1;
    }
  }
  const double sigma = std::sqrt(delta / count);
  double mean_z2 = 0;
  double max_z = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const double z = (sum(i) / count - 1.0 / std::sqrt(double(d))) / sigma;
    mean_z2 += z * z / d;
    max_z = std::max(max_z, std::abs(z));
  }
  EXPECT_LT(max_z, 5.0);
  EXPECT_NEAR(mean_z2, 1.0, 0.15);
}

TEST(Activation, Examples) {
  const LossModel lin{Activation::Linear, 0.0, Loss::Logistic};
  const LossModel door{Activation::Door, 0.7, Loss::Logistic};
  EXPECT_EQ(phi(lin, 0.3), 0.3);
  EXPECT_EQ(phi_prime(lin, 0.3), 1.0);
  EXPECT_NEAR(phi(door, 0.7), 0.0, 1e-16);
  EXPECT_NEAR(phi(door, 1.0), 0.51, 1e-15);
  EXPECT_EQ(phi_prime(door, 0.5), 1.0);
  EXPECT_EQ(phi_second(door, 0.5), 2.0);
}

TEST(LambdaDerivs, LinearAtZero) {
  const LossModel lin{Activation::Linear, 0.0, Loss::Logistic};
  const LossDerivs ld = lambda_derivs(lin, 1.0, 0.0);
  EXPECT_NEAR(ld.value, std::log(2.0), 1e-15);
  EXPECT_NEAR(ld.first, -0.5, 1e-15);
  EXPECT_NEAR(ld.second, 0.25, 1e-15);
}

TEST(LambdaDerivs, SaturationWithoutOverflow) {
  const LossModel lin{Activation::Linear, 0.0, Loss::Logistic};
  const LossDerivs ld = lambda_derivs(lin, 1.0, 40.0);
  EXPECT_NEAR(ld.value / std::exp(-40.0), 1.0, 1e-12);
  for (double h : {700.0, -700.0, 1e4, -1e4}) {
    for (double y : {1.0, -1.0}) {
      const LossDerivs e = lambda_derivs(lin, y, h);
      EXPECT_TRUE(std::isfinite(e.value) && std::isfinite(e.first) && std::isfinite(e.second));
    }
  }
  EXPECT_NEAR(logistic(-700.0), 700.0, 1e-12);
  EXPECT_GT(logistic(700.0), 0.0);
  const LossModel door{Activation::Door, 0.7, Loss::Logistic};
  const LossDerivs d = lambda_derivs(door, -1.0, 30.0);
  EXPECT_TRUE(std::isfinite(d.value) && std::isfinite(d.first) && std::isfinite(d.second));
}

TEST(LambdaDerivs, FiniteDifferencesOnGrid) {
  const double step = 1e-5;
  const auto close = [](double fd, double exact) {
    return std::abs(fd - exact) <= 1e-6 * std::max(std::abs(exact), 1e-2);
  };
  for (bool door : {false, true}) {
    const LossModel model{door ? Activation::Door : Activation::Linear, 0.7, Loss::Logistic};
    for (double y : {1.0, -1.0}) {
      for (double h = -3.05; h < 3.1; h += 0.25) {
        const LossDerivs ld = lambda_derivs(model, y, h);
        EXPECT_TRUE(close(oracle::fd_lambda_prime(door, 0.7, y, h, step), ld.first))
            << "door=" << door << " y=" << y << " h=" << h;
        const double fd2 = (lambda_derivs(model, y, h + step).first -
                            lambda_derivs(model, y, h - step).first) /
                           (2 * step);
        EXPECT_TRUE(close(fd2, ld.second)) << "door=" << door << " y=" << y << " h=" << h;
      }
    }
  }
}

TEST(LambdaDerivs, DoorExampleAtHalf) {
  const LossModel door{Activation::Door, 0.7, Loss::Logistic};
  const double step = 1e-5;
  const LossDerivs ld = lambda_derivs(door, -1.0, 0.5);
  EXPECT_NEAR(oracle::fd_lambda_prime(true, 0.7, -1.0, 0.5, step) / ld.first, 1.0, 1e-6);
  const auto lam = [&](double h) { return lambda_derivs(door, -1.0, h).value; };
  const double fd2 = (lam(0.5 + step) - 2 * lam(0.5) + lam(0.5 - step)) / (step * step);
  EXPECT_NEAR(fd2 / ld.second, 1.0, 1e-4);
}

TEST(Classification, SignConventionAndMisclassification) {
  const LossModel lin{Activation::Linear, 0.0, Loss::Logistic};
  const LossModel door{Activation::Door, 0.7, Loss::Logistic};
  EXPECT_EQ(sign_of(0.0), 1.0);
  EXPECT_EQ(sign_of(-1e-300), -1.0);
  EXPECT_FALSE(misclassified(lin, 1.0, 0.0));
  EXPECT_FALSE(misclassified(lin, -1.0, 0.0));
  EXPECT_TRUE(misclassified(lin, -1.0, 0.1));
  EXPECT_TRUE(misclassified(door, 1.0, 0.1));
  EXPECT_FALSE(misclassified(door, -1.0, 0.1));
  EXPECT_FALSE(misclassified(door, 1.0, 0.7));
}

TEST(RandomStream, DerivedStreamsAreDistinctAndReproducible) {
  EXPECT_NE(derive_seed(1, Stream::Data), derive_seed(1, Stream::Init));
  EXPECT_NE(derive_seed(1, Stream::Path, 0), derive_seed(1, Stream::Path, 1));
  EXPECT_NE(derive_seed(1, Stream::Data), derive_seed(2, Stream::Data));
  RandomStream a(7, Stream::Mask, 3), b(7, Stream::Mask, 3);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.normal(), b.normal());
}
