// Copyright 2026 The mjls Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>

#include "mjls/mjls.hpp"
#include "test_util.hpp"

namespace mjls {
namespace {

using testing::MeanVar;
using testing::within_se;

// d = k = 1, two modes, one of them open-loop unstable.
MjlsModel scalar_pair(double gamma = 0.9) {
  ModelData m;
  m.A = {Matrix::Constant(1, 1, 0.8), Matrix::Constant(1, 1, 1.1)};
  m.B = {Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 0.5)};
  m.Q = {Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 2.0)};
  m.R = {Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 0.5)};
  m.trans.resize(2, 2);
  m.trans << 0.7, 0.3, 0.4, 0.6;
  m.rho = Vector::Constant(2, 0.5);
  m.gamma = gamma;
  m.sigma0_cov = Matrix::Identity(1, 1);
  return validate_model(std::move(m));
}

GainPolicy scalar_pair_policy() {
  GainPolicy p = GainPolicy::zeros(2, 1, 1, 0.5);
  p.gains[0](0, 0) = 0.2;
  p.gains[1](0, 0) = 0.5;
  return p;
}

double log_density(const Vector& x, const Vector& u, int w, const GainPolicy& p) {
  const double s = p.sigma;
  const Vector r = u + p.gains[w] * x;
  return -0.5 * static_cast<double>(u.size()) * std::log(2.0 * M_PI * s * s) -
         r.squaredNorm() / (2.0 * s * s);
}

TEST(Score, HandExample) {
  GainPolicy p = GainPolicy::zeros(2, 1, 2, 0.5);
  p.gains[1] << 1.0, -1.0;
  Vector x(2), u(1);
  x << 1.0, 2.0;
  u << 0.5;
  // u + K_2 x = 0.5 - 1 = -0.5; score = -(1/0.25)(-0.5) [1 2] = [2 4].
  const Matrix s = score_gain(x, u, 1, p);
  EXPECT_EQ(s.cols(), 4);
  EXPECT_DOUBLE_EQ(s(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(s(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(s(0, 2), 2.0);
  EXPECT_DOUBLE_EQ(s(0, 3), 4.0);
  // -1/0.5 + 0.25/0.125 = 0.
  EXPECT_DOUBLE_EQ(score_sigma(x, u, 1, p), 0.0);
}

TEST(Score, MatchesFiniteDifferenceOfLogDensity) {
  RandomStream rs(4);
  GainPolicy p = GainPolicy::zeros(3, 2, 3, 0.7);
  for (auto& g : p.gains) rs.fill_normal(g);
  Vector x(3), u(2);
  rs.fill_normal(x);
  rs.fill_normal(u);
  const int w = 2;
  const Matrix s = score_gain(x, u, w, p);
  const Vector theta = testing::oracle::flatten(p);
  auto f = [&](const Vector& v) {
    return log_density(x, u, w, testing::oracle::unflatten(v, 3, 2, 3));
  };
  const Vector fd = testing::oracle::central_difference(f, theta, 1e-6);
  Vector an(theta.size());
  an.head(s.size()) = testing::as_vector(s);
  an(an.size() - 1) = score_sigma(x, u, w, p);
  EXPECT_LT((fd - an).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Score, HasZeroMean) {
  RandomStream rs(9);
  GainPolicy p = GainPolicy::zeros(2, 2, 2, 0.4);
  p.gains[0] << 0.3, -0.2, 0.1, 0.5;
  Vector x(2);
  x << 0.7, -1.2;
  MeanVar mv;
  for (int s = 0; s < 100000; ++s) {
    Vector u = -p.gains[0] * x;
    for (Eigen::Index j = 0; j < u.size(); ++j) u(j) += p.sigma * rs.normal();
    Vector v(9);
    v.head(8) = testing::as_vector(score_gain(x, u, 0, p));
    v(8) = score_sigma(x, u, 0, p);
    mv.add(v);
  }
  EXPECT_TRUE(within_se(mv.mean(), mv.standard_error(), Vector::Zero(9), 4.0));
}

TEST(Score, ZeroSigmaRaises) {
  const GainPolicy p = GainPolicy::zeros(1, 1, 1);
  EXPECT_THROW(score_gain(Vector::Ones(1), Vector::Ones(1), 0, p), Error);
  EXPECT_THROW(score_sigma(Vector::Ones(1), Vector::Ones(1), 0, p), Error);
  const MjlsModel m = scalar_pair();
  try {
    estimate(BlackBoxSystem(m, 1), GainPolicy::zeros(m), 10, 10, 0.9, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroSigma);
  }
}

// Batch means of the estimate against the exact gradient. gamma = 0.9 keeps
// the truncation at T_F = 100 far below the Monte Carlo error.
void expect_unbiased(BaselineMode mode) {
  const MjlsModel m = scalar_pair();
  const GainPolicy p = scalar_pair_policy();
  const ExactGradient g = exact_gradient(m, p);
  const BlackBoxSystem sys(m, 77);
  EstimatorOptions opts;
  opts.baseline = mode;
  MeanVar mv;
  for (int b = 0; b < 100; ++b) {
    const GradientEstimate e = estimate(sys, p, 500, 100, m.gamma(), b, opts);
    mv.add(Eigen::Vector3d(e.grad_K_hat(0, 0), e.grad_K_hat(0, 1), e.grad_sigma_hat));
  }
  const Vector exact = Eigen::Vector3d(g.grad_K(0, 0), g.grad_K(0, 1), g.grad_sigma);
  EXPECT_TRUE(within_se(mv.mean(), mv.standard_error(), exact, 4.0));
}

TEST(Estimate, UnbiasedWithLeaveOneOutBaseline) { expect_unbiased(BaselineMode::kLeaveOneOut); }
TEST(Estimate, UnbiasedWithoutBaseline) { expect_unbiased(BaselineMode::kNone); }

TEST(Estimate, BaselineReducesVariance) {
  const MjlsModel m = scalar_pair();
  const GainPolicy p = scalar_pair_policy();
  const BlackBoxSystem sys(m, 5);
  MeanVar with, without;
  for (int b = 0; b < 60; ++b) {
    EstimatorOptions opts;
    opts.baseline = BaselineMode::kLeaveOneOut;
    const GradientEstimate a = estimate(sys, p, 200, 60, m.gamma(), b, opts);
    opts.baseline = BaselineMode::kNone;
    const GradientEstimate c = estimate(sys, p, 200, 60, m.gamma(), b, opts);
    with.add(testing::as_vector(a.grad_K_hat));
    without.add(testing::as_vector(c.grad_K_hat));
    // Same rollouts, so chi_hat does not depend on the baseline.
    EXPECT_EQ(a.chi_hat, c.chi_hat);
  }
  EXPECT_LT(with.variance().sum(), 0.5 * without.variance().sum());
}

TEST(Estimate, SingleTrajectoryCumulativeBaselineCancels) {
  const MjlsModel m = builtin::small441();
  const GradientEstimate e =
      estimate(BlackBoxSystem(m, 3), GainPolicy::zeros(m, 0.5), 1, 50, m.gamma(), 0);
  EXPECT_EQ(e.grad_K_hat.norm(), 0.0);
  EXPECT_EQ(e.grad_sigma_hat, 0.0);
  EXPECT_GT(e.chi_hat.norm(), 0.0);
}

TEST(Estimate, ChiMatchesTruncatedSecondMoments) {
  const MjlsModel m = builtin::small441();
  GainPolicy p = GainPolicy::zeros(m, 0.5);
  const int horizon = 300;
  const GradientEstimate e = estimate(BlackBoxSystem(m, 12), p, 20000, horizon, m.gamma(), 0);
  const auto exact = compute_chi(m, p, ChiMethod::kTruncatedSum, horizon);
  for (int i = 0; i < 2; ++i) {
    EXPECT_LT((e.chi_blocks[i] - exact.chi_blocks[i]).norm(), 0.05 * exact.chi_blocks[i].norm())
        << i;
    EXPECT_EQ(e.chi_blocks[i], e.chi_blocks[i].transpose());
  }
  // Block-diagonal: nothing couples different modes.
  EXPECT_EQ(e.chi_hat.topRightCorner(3, 3).norm(), 0.0);
  EXPECT_EQ(e.chi_hat.bottomLeftCorner(3, 3).norm(), 0.0);
}

TEST(Estimate, IndependentOfThreadCount) {
  const MjlsModel m = builtin::structured443();
  const BlackBoxSystem sys(m, 31);
  GainPolicy p = GainPolicy::zeros(m, 0.5);
  p.gains[1] << 0.1, 0.0, -0.2, 0.0;
  EstimatorOptions one;
  const GradientEstimate a = estimate(sys, p, 300, 80, m.gamma(), 4, one);
  for (int threads : {2, 3}) {
    EstimatorOptions many;
    many.threads = threads;
    many.chunk = 7;
    const GradientEstimate b = estimate(sys, p, 300, 80, m.gamma(), 4, many);
    EXPECT_EQ(a.grad_K_hat, b.grad_K_hat);
    EXPECT_EQ(a.grad_sigma_hat, b.grad_sigma_hat);
    EXPECT_EQ(a.chi_hat, b.chi_hat);
  }
  EXPECT_NE(a.grad_K_hat, estimate(sys, p, 300, 80, m.gamma(), 5, one).grad_K_hat);
}

TEST(Estimate, AllDivergedRaises) {
  const MjlsModel m = testing::scalar_model(3.0, 1.0, 1.0, 1.0, 0.99);
  try {
    estimate(BlackBoxSystem(m, 1), GainPolicy::zeros(m, 0.1), 5, 500, 0.99, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAllDiverged);
  }
}

TEST(Estimate, RejectsBadArguments) {
  const MjlsModel m = builtin::small441();
  const BlackBoxSystem sys(m, 1);
  EXPECT_THROW(estimate(sys, GainPolicy::zeros(m, 0.5), 0, 10, 0.99, 0), Error);
  EXPECT_THROW(estimate(sys, GainPolicy::zeros(3, 1, 3, 0.5), 5, 10, 0.99, 0), Error);
}

TEST(RegularizeChi, DefaultFloor) {
  std::vector<Matrix> blocks = {Matrix::Identity(2, 2) * 3.0, Matrix::Identity(2, 2)};
  const RegularizedChi r = regularize_chi(blocks);
  EXPECT_DOUBLE_EQ(r.floor, 1e-8 * 8.0 / 4.0);
  EXPECT_NEAR(r.condition, 3.0, 1e-6);
}

TEST(RegularizeChi, SingularBlockNeedsFloor) {
  Matrix s(2, 2);
  s << 1.0, 1.0, 1.0, 1.0;
  try {
    regularize_chi({s}, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingularChi);
  }
  const RegularizedChi r = regularize_chi({s}, 1e-3);
  EXPECT_NEAR(r.condition, (2.0 + 1e-3) / 1e-3, 1e-6);
  EXPECT_THROW(regularize_chi({s}, -1.0), Error);
}

TEST(RegularizeChi, SolveRight) {
  RandomStream rs(2);
  std::vector<Matrix> blocks = {testing::random_spd(3, rs), testing::random_spd(3, rs)};
  Matrix g(2, 6);
  rs.fill_normal(g);
  const Matrix x = regularize_chi(blocks, 0.0).solve_right(g);
  EXPECT_LT((x * block_diagonal(blocks) - g).norm(), 1e-12);
}

}  // namespace
}  // namespace mjls
