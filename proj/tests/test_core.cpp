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

#include <numeric>

#include "mjls/mjls.hpp"
#include "test_util.hpp"

namespace mjls {
namespace {

using testing::random_model;
using testing::random_policy;
using testing::scalar_model;

ModelData small441_data() { return builtin::small441().data(); }

TEST(ValidateModel, PrintedSmallModelIsValid) {
  const MjlsModel m = validate_model(small441_data());
  EXPECT_EQ(m.n_modes(), 2);
  EXPECT_EQ(m.state_dim(), 3);
  EXPECT_EQ(m.input_dim(), 1);
  EXPECT_DOUBLE_EQ(m.A(0)(0, 1), 0.6);
  EXPECT_DOUBLE_EQ(m.B(1)(2, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.R(1)(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(m.trans()(1, 0), 0.4);
}

TEST(ValidateModel, NonStochasticRow) {
  ModelData d = small441_data();
  d.trans.row(0) << 0.7, 0.2;
  try {
    validate_model(d);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    ASSERT_TRUE(e.has(ErrorCode::kNotStochastic));
    EXPECT_EQ(e.violations().front().field, "trans");
    EXPECT_EQ(e.violations().front().index, 0);
  }
}

TEST(ValidateModel, NegativeDefiniteQ) {
  ModelData d = small441_data();
  d.Q[0] = -Matrix::Identity(3, 3);
  try {
    validate_model(d);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    ASSERT_TRUE(e.has(ErrorCode::kNotPositiveDefinite));
    EXPECT_EQ(e.violations().front().field, "Q");
    EXPECT_EQ(e.violations().front().index, 0);
  }
}

TEST(ValidateModel, CollectsEveryViolation) {
  ModelData d = small441_data();
  d.gamma = 1.0;
  d.rho << 0.6, 0.6;
  d.R[1] = Matrix::Zero(1, 1);
  try {
    validate_model(d);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_TRUE(e.has(ErrorCode::kBadDiscount));
    EXPECT_TRUE(e.has(ErrorCode::kNotStochastic));
    EXPECT_TRUE(e.has(ErrorCode::kNotPositiveDefinite));
    EXPECT_EQ(e.violations().size(), 3u);
  }
}

TEST(ValidateModel, ShapeMismatch) {
  ModelData d = small441_data();
  d.B[1] = Matrix::Zero(2, 1);
  try {
    validate_model(d);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_TRUE(e.has(ErrorCode::kDimensionMismatch));
    EXPECT_EQ(e.violations().front().field, "B");
    EXPECT_EQ(e.violations().front().index, 1);
  }
}

TEST(ValidateModel, AsymmetricR) {
  ModelData d = builtin::structured443().data();
  d.R[0](0, 1) = 0.1;
  try {
    validate_model(d);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_TRUE(e.has(ErrorCode::kNotPositiveDefinite));
  }
}

TEST(ClosedLoopOperator, ZeroDynamics) {
  const MjlsModel m = scalar_model(0.0, 1.0, 1.0, 1.0);
  EXPECT_EQ(closed_loop_operator(m, GainPolicy::zeros(m)).norm(), 0.0);
}

TEST(ClosedLoopOperator, ScalarCase) {
  const double a = 0.8, b = 0.5, kappa = 0.3, g = 0.9;
  const MjlsModel m = scalar_model(a, b, 1.0, 1.0, g);
  GainPolicy p = GainPolicy::zeros(m);
  p.gains[0](0, 0) = kappa;
  const Matrix T = closed_loop_operator(m, p);
  ASSERT_EQ(T.rows(), 1);
  EXPECT_NEAR(T(0, 0), g * (a - b * kappa) * (a - b * kappa), 1e-15);
}

TEST(ClosedLoopOperator, MatchesOneStepOfCovarianceRecursion) {
  const MjlsModel m = builtin::small441();
  const GainPolicy p = GainPolicy::zeros(m);
  const int d = m.state_dim();
  RandomStream rs(7);
  std::vector<Matrix> X;
  Vector stacked(2 * d * d);
  for (int i = 0; i < 2; ++i) {
    X.push_back(testing::random_spd(d, rs));
    stacked.segment(i * d * d, d * d) = testing::as_vector(X[i]);
  }
  const Vector pushed = closed_loop_operator(m, p) * stacked;
  for (int j = 0; j < 2; ++j) {
    Matrix direct = Matrix::Zero(d, d);
    for (int i = 0; i < 2; ++i) {
      direct += m.trans()(i, j) * m.A(i) * X[i] * m.A(i).transpose();
    }
    direct *= m.gamma();
    EXPECT_LT((pushed.segment(j * d * d, d * d) - testing::as_vector(direct)).norm(),
              1e-12);
  }
}

TEST(Stability, SmallModelZeroGainIsStable) {
  const MjlsModel m = builtin::small441();
  const StabilityReport r = is_ms_stabilizing(m, GainPolicy::zeros(m));
  EXPECT_TRUE(r.stable);
  EXPECT_LT(r.spectral_radius, 1.0);
}

TEST(Stability, ScalarUnstable) {
  const MjlsModel m = scalar_model(2.0, 0.0, 1.0, 1.0, 0.99);
  const StabilityReport r = is_ms_stabilizing(m, GainPolicy::zeros(m));
  EXPECT_FALSE(r.stable);
  EXPECT_NEAR(r.spectral_radius, 3.96, 1e-12);
}

TEST(Stability, StructuredOptimumIsStable) {
  const MjlsModel m = builtin::structured443();
  const GainPolicy k = optimal_gains(m, solve_coupled_are(m));
  EXPECT_TRUE(is_ms_stabilizing(m, k).stable);
}

TEST(Stability, DimensionMismatch) {
  const MjlsModel m = builtin::small441();
  GainPolicy p = GainPolicy::zeros(m);
  p.gains[1] = Matrix::Zero(2, 3);
  try {
    is_ms_stabilizing(m, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(Stability, InvariantUnderModeRelabeling) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const MjlsModel m = random_model(3, 2, 1, seed, 1.05, 0.95);
    const GainPolicy p = GainPolicy::zeros(m);
    const std::vector<int> perm = {2, 0, 1};
    const MjlsModel mp = testing::permute_modes(m, perm);
    const StabilityReport a = is_ms_stabilizing(m, p);
    const StabilityReport b = is_ms_stabilizing(mp, testing::permute_policy(p, perm));
    EXPECT_EQ(a.stable, b.stable);
    EXPECT_NEAR(a.spectral_radius, b.spectral_radius, 1e-10);
  }
}

TEST(Stability, RadiusContinuousInGains) {
  for (const MjlsModel& m : {builtin::small441(), builtin::structured443()}) {
    const GainPolicy k = optimal_gains(m, solve_coupled_are(m));
    RandomStream rs(3);
    for (int trial = 0; trial < 10; ++trial) {
      GainPolicy perturbed = k;
      double norm2 = 0.0;
      std::vector<Matrix> delta;
      for (auto& g : perturbed.gains) {
        Matrix dg(g.rows(), g.cols());
        rs.fill_normal(dg);
        delta.push_back(dg);
        norm2 += dg.squaredNorm();
      }
      for (std::size_t i = 0; i < delta.size(); ++i) {
        perturbed.gains[i] += 1e-8 * delta[i] / std::sqrt(norm2);
      }
      EXPECT_LT(std::abs(is_ms_stabilizing(m, perturbed).spectral_radius -
                         is_ms_stabilizing(m, k).spectral_radius),
                1e-4);
    }
  }
}

TEST(ModeMarginals, SmallModelFirstStep) {
  const auto q = mode_marginals(builtin::small441(), 1);
  EXPECT_NEAR(q[0](0), 0.5, 1e-15);
  EXPECT_NEAR(q[1](0), 0.55, 1e-15);
  EXPECT_NEAR(q[1](1), 0.45, 1e-15);
}

TEST(ModeMarginals, IdentityTransition) {
  ModelData d = small441_data();
  d.trans = Matrix::Identity(2, 2);
  d.rho << 0.3, 0.7;
  const auto q = mode_marginals(validate_model(d), 20);
  for (const auto& qt : q) {
    EXPECT_DOUBLE_EQ(qt(0), 0.3);
    EXPECT_DOUBLE_EQ(qt(1), 0.7);
  }
}

TEST(ModeMarginals, StructuredModelStationaryLimit) {
  const MjlsModel m = builtin::structured443();
  const auto q = mode_marginals(m, 2000);
  EXPECT_NEAR(q.back()(0), 0.6, 1e-12);
  EXPECT_NEAR(q.back()(1), 0.4, 1e-12);
  const Vector pi = stationary_distribution(m);
  EXPECT_NEAR(pi(0), 0.6, 1e-14);
}

TEST(ModeMarginals, RowsSumToOne) {
  const MjlsModel m = random_model(4, 1, 1, 11);
  const auto q = mode_marginals(m, 10000);
  for (const auto& qt : q) EXPECT_NEAR(qt.sum(), 1.0, 1e-12);
}

TEST(ModeMarginals, NegativeHorizon) {
  EXPECT_THROW(mode_marginals(builtin::small441(), -1), Error);
}

TEST(StructureMask, ApplyZeroesMaskedEntries) {
  const StructureMask mask = builtin::first_state_mask();
  GainPolicy p = GainPolicy::zeros(2, 2, 2);
  for (auto& g : p.gains) g.setConstant(3.0);
  const GainPolicy masked = mask.apply(p);
  for (const auto& g : masked.gains) {
    EXPECT_EQ(g(0, 1), 0.0);
    EXPECT_EQ(g(1, 1), 0.0);
    EXPECT_EQ(g(0, 0), 3.0);
  }
}

TEST(GainPolicy, ConcatenationRoundTrip) {
  const MjlsModel m = random_model(3, 2, 2, 5);
  const GainPolicy p = random_policy(m, 9, 0.1, 0.3);
  const Matrix k = p.concatenated();
  EXPECT_EQ(k.cols(), 6);
  const GainPolicy back = GainPolicy::from_concatenated(k, 3, p.sigma);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(back.gains[i], p.gains[i]);
  EXPECT_THROW(GainPolicy::from_concatenated(Matrix::Zero(2, 5), 3, 0.0), Error);
}

}  // namespace
}  // namespace mjls
