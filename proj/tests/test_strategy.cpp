#include "fedapa/strategy.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "fedapa/rng.hpp"
#include "testutil.hpp"

using fedapa::fedavg_aggregate;
using fedapa::ParamMatrix;
using fedapa::ParamVector;
using fedapa::postprocess;
using fedapa::SignConvention;
using fedapa::update_weights;
using fedapa::WeightVector;
using testutil::columns;
using testutil::flat;

namespace {

double surrogate(const ParamMatrix& theta, std::span<const double> a,
                 const ParamVector& target) {
  const auto blend = fedapa::weighted_sum(theta, a);
  double acc = 0.0;
  for (std::size_t k = 0; k < blend.size(); ++k) {
    const double d = blend[k] - target[k];
    acc += d * d;
  }
  return 0.5 * acc;
}

// central finite differences of the surrogate loss in the weights
std::vector<double> fd_surrogate_grad(const ParamMatrix& theta,
                                      std::vector<double> a,
                                      const ParamVector& target,
                                      double h = 1e-5) {
  std::vector<double> g(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double saved = a[j];
    a[j] = saved + h;
    const double up = surrogate(theta, a, target);
    a[j] = saved - h;
    const double down = surrogate(theta, a, target);
    a[j] = saved;
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace

TEST(UpdateWeights, ZeroDeltaIsFixedPointUnderBothConventions) {
  const auto theta = columns({{1.0, 2.0}, {3.0, -1.0}});
  const std::vector<double> a{0.7, 0.3};
  const auto zero = flat({0.0, 0.0});
  for (auto sign :
       {SignConvention::kSurrogateDescent, SignConvention::kLiteralPaper}) {
    const auto raw = update_weights(a, theta, zero, 0.5, sign);
    EXPECT_EQ(raw[0], 0.7);
    EXPECT_EQ(raw[1], 0.3);
  }
}

TEST(UpdateWeights, ForcedArithmeticExample) {
  const auto theta = columns({{1.0, 0.0}, {0.0, 2.0}});
  const std::vector<double> a{1.0, 0.0};
  const auto delta = flat({0.0, 0.4});  // returned (1, 0.4) minus sent (1, 0)

  const auto descent =
      update_weights(a, theta, delta, 0.1, SignConvention::kSurrogateDescent);
  EXPECT_DOUBLE_EQ(descent[0], 1.0);
  EXPECT_DOUBLE_EQ(descent[1], 0.08);

  const auto literal =
      update_weights(a, theta, delta, 0.1, SignConvention::kLiteralPaper);
  EXPECT_DOUBLE_EQ(literal[0], 1.0);
  EXPECT_DOUBLE_EQ(literal[1], -0.08);
}

TEST(UpdateWeights, SurrogateDescentMatchesFiniteDifferenceGradient) {
  fedapa::Rng rng(404);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = 2 + rng.uniform_int(5);
    const std::size_t dim = 3 + rng.uniform_int(8);
    std::vector<std::vector<double>> cols(m, std::vector<double>(dim));
    for (auto& c : cols) {
      for (auto& v : c) v = rng.normal();
    }
    const auto theta = columns(cols);
    std::vector<double> a(m);
    for (auto& v : a) v = rng.uniform_range(-0.5, 1.0);
    std::vector<double> target(dim);
    for (auto& v : target) v = rng.normal();
    const auto target_pv = flat(target);

    // delta = theta_returned - theta_bar with theta_returned = target
    const auto blend = fedapa::weighted_sum(theta, a);
    const auto d = fedapa::delta(target_pv, blend);

    const double eta = 0.01;
    const auto raw =
        update_weights(a, theta, d, eta, SignConvention::kSurrogateDescent);
    const auto fd = fd_surrogate_grad(theta, a, target_pv);
    for (std::size_t j = 0; j < m; ++j) {
      const double applied = (raw[j] - a[j]) / eta;  // should be -grad
      EXPECT_NEAR(applied, -fd[j], 1e-6 * std::max(1.0, std::abs(fd[j])));
    }
  }
}

TEST(Postprocess, WorkedExampleTwoClients) {
  const auto w = postprocess({1.0, 0.08}, 0, 0.5);
  EXPECT_NEAR(w.a[0], 0.8620689655172413, 1e-12);
  EXPECT_NEAR(w.a[1], 0.13793103448275862, 1e-12);
  EXPECT_NEAR(w.a[0] + w.a[1], 1.0, 1e-15);
}

TEST(Postprocess, WorkedExampleThreeClients) {
  const auto w = postprocess({-0.3, 1.4, 0.2}, 1, 0.5);
  EXPECT_NEAR(w.a[0], 0.0, 1e-15);
  EXPECT_NEAR(w.a[1], 0.7142857142857143, 1e-12);
  EXPECT_NEAR(w.a[2], 0.2857142857142857, 1e-12);
}

TEST(Postprocess, AllAblationsGiveIdentity) {
  const std::vector<double> raw{-0.3, 1.4, 0.2};
  const auto w = postprocess(raw, 1, 0.5, true, true, true);
  EXPECT_EQ(w.a, raw);
}

TEST(Postprocess, IndividualSteps) {
  // clip only
  auto w = postprocess({-0.5, 2.0, 0.3}, 0, 0.9, false, true, true);
  EXPECT_EQ(w.a, (std::vector<double>{0.0, 1.0, 0.3}));
  // self-weight only
  w = postprocess({0.2, 0.3, 0.4}, 2, 0.9, true, false, true);
  EXPECT_EQ(w.a, (std::vector<double>{0.2, 0.3, 0.9}));
  // normalize only
  w = postprocess({1.0, 3.0}, 0, 0.5, true, true, false);
  EXPECT_DOUBLE_EQ(w.a[0], 0.25);
  EXPECT_DOUBLE_EQ(w.a[1], 0.75);
}

TEST(Postprocess, RejectsZeroSumNormalization) {
  EXPECT_THROW(postprocess({0.0, 0.0}, 0, 0.0), std::invalid_argument);
}

TEST(Postprocess, MuOneFromIdentityStaysIdentity) {
  // self-weight 1 with all other raw weights 0 normalizes back to e_i
  const auto w = postprocess({0.3, 0.0, 0.0}, 0, 1.0);
  EXPECT_EQ(w.a[0], 1.0);
  EXPECT_EQ(w.a[1], 0.0);
  EXPECT_EQ(w.a[2], 0.0);
}

TEST(WeightVectorType, IdentityInitialization) {
  const auto w = WeightVector::identity(4, 2);
  EXPECT_EQ(w.a, (std::vector<double>{0.0, 0.0, 1.0, 0.0}));
  EXPECT_EQ(w.owner, 2u);
}

TEST(FedAvg, EqualSizesAverage) {
  const auto theta = columns({{1.0, 0.0}, {0.0, 2.0}});
  const std::vector<std::size_t> sizes{10, 10};
  const auto g = fedavg_aggregate(theta, sizes);
  EXPECT_DOUBLE_EQ(g[0], 0.5);
  EXPECT_DOUBLE_EQ(g[1], 1.0);
}

TEST(FedAvg, SizeWeightedAverage) {
  const auto theta = columns({{0.0, 0.0}, {4.0, 4.0}});
  const std::vector<std::size_t> sizes{1, 3};
  const auto g = fedavg_aggregate(theta, sizes);
  EXPECT_DOUBLE_EQ(g[0], 3.0);
  EXPECT_DOUBLE_EQ(g[1], 3.0);
}

TEST(FedAvg, SingleParticipantIsIdentity) {
  const auto theta = columns({{1.5, -2.5, 0.25}});
  const std::vector<std::size_t> sizes{7};
  const auto g = fedavg_aggregate(theta, sizes);
  EXPECT_EQ(g[0], 1.5);
  EXPECT_EQ(g[1], -2.5);
  EXPECT_EQ(g[2], 0.25);
}

TEST(FedAvg, RejectsEmptyAndZeroSizes) {
  const auto theta = columns({{1.0}, {2.0}});
  const std::vector<std::size_t> none{};
  EXPECT_THROW(fedavg_aggregate(theta, none), std::invalid_argument);
  const std::vector<std::size_t> zero{1, 0};
  EXPECT_THROW(fedavg_aggregate(theta, zero), std::invalid_argument);
}
