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

// Model-free REINFORCE estimates of the policy gradient (gains and sigma) with
// a cumulative-average baseline, plus the Monte Carlo estimate of chi.

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <thread>
#include <vector>

#include "mjls/core.hpp"
#include "mjls/exactsolve.hpp"
#include "mjls/sim.hpp"

namespace mjls {

enum class BaselineMode {
  // b_t is updated with the current trajectory's return before that
  // trajectory's gradient term is formed.
  kCumulative,
  // b_t averages only the trajectories before the current one.
  kLeaveOneOut,
  kNone,
};

struct EstimatorOptions {
  BaselineMode baseline = BaselineMode::kCumulative;
  int threads = 1;  // rollout workers; results do not depend on this
  int chunk = 64;   // trajectories buffered per parallel batch
};

struct GradientEstimate {
  Matrix grad_K_hat;        // k x (n_s d)
  double grad_sigma_hat = 0.0;
  std::vector<Matrix> chi_blocks;
  Matrix chi_hat;           // block-diagonal (n_s d) x (n_s d)
  int n_trajectories = 0;   // requested N
  int used = 0;             // N minus diverged rollouts
  int horizon = 0;          // T_F
  int diverged_count = 0;
};

namespace detail {
inline void require_sigma(const GainPolicy& policy) {
  if (!(policy.sigma > 0.0)) {
    throw Error(ErrorCode::kZeroSigma, "score function needs sigma > 0");
  }
}
}  // namespace detail

// Score of the gains: -(1/sigma^2) (u + K_w x) (e_w (x) x)^T. Only the columns
// of mode w are nonzero.
inline Matrix score_gain(const Vector& x, const Vector& u, int omega,
                         const GainPolicy& policy) {
  detail::require_sigma(policy);
  const Eigen::Index d = x.size();
  const Eigen::Index k = u.size();
  Matrix g = Matrix::Zero(k, d * policy.n_modes());
  const Vector innov = u + policy.gains[omega] * x;
  g.middleCols(omega * d, d) =
      -(1.0 / (policy.sigma * policy.sigma)) * innov * x.transpose();
  return g;
}

// Score of sigma: -k/sigma + |u + K_w x|^2 / sigma^3.
inline double score_sigma(const Vector& x, const Vector& u, int omega,
                          const GainPolicy& policy) {
  detail::require_sigma(policy);
  const Vector innov = u + policy.gains[omega] * x;
  const double s = policy.sigma;
  return -static_cast<double>(u.size()) / s + innov.squaredNorm() / (s * s * s);
}

namespace detail {

// Running sums of one estimate. Trajectories must be fed in index order.
class EstimateAccumulator {
 public:
  EstimateAccumulator(const GainPolicy& policy, int d, int k, int horizon,
                      double gamma, BaselineMode mode)
      : policy_(policy), d_(d), k_(k), gamma_(gamma), mode_(mode),
        baseline_(Vector::Zero(horizon + 1)),
        grad_blocks_(policy.n_modes(), Matrix::Zero(k, d)),
        chi_blocks_(policy.n_modes(), Matrix::Zero(d, d)),
        innov_(k) {}

  void add(const Trajectory& traj) {
    if (traj.diverged) {
      ++diverged_;
      return;
    }
    ++used_;
    reward_to_go(traj.c, gamma_, q_hat_);
    const double n = static_cast<double>(used_);
    const int steps = traj.length();
    advantage_.resize(steps);
    switch (mode_) {
      case BaselineMode::kCumulative:
        baseline_ = ((n - 1.0) * baseline_ + q_hat_) / n;
        advantage_ = q_hat_ - baseline_;
        break;
      case BaselineMode::kLeaveOneOut:
        advantage_ = q_hat_ - baseline_;
        baseline_ = ((n - 1.0) * baseline_ + q_hat_) / n;
        break;
      case BaselineMode::kNone:
        advantage_ = q_hat_;
        break;
    }
    const double s = policy_.sigma;
    const double inv_s2 = 1.0 / (s * s);
    dispatch_dims(d_, k_, [&](auto dc, auto kc) {
      accumulate<decltype(dc)::value, decltype(kc)::value>(traj, steps, s, inv_s2);
    });
  }

  GradientEstimate finish(int requested, int horizon) const {
    if (used_ == 0) {
      throw Error(ErrorCode::kAllDiverged,
                  "all " + std::to_string(requested) + " rollouts diverged");
    }
    const double inv_n = 1.0 / used_;
    GradientEstimate est;
    est.n_trajectories = requested;
    est.used = used_;
    est.horizon = horizon;
    est.diverged_count = diverged_;
    est.grad_K_hat.resize(k_, d_ * policy_.n_modes());
    for (int i = 0; i < policy_.n_modes(); ++i) {
      est.grad_K_hat.middleCols(i * d_, d_) = inv_n * grad_blocks_[i];
      Matrix c = chi_blocks_[i].selfadjointView<Eigen::Lower>();
      est.chi_blocks.push_back(inv_n * c);
    }
    est.grad_sigma_hat = inv_n * grad_sigma_;
    est.chi_hat = block_diagonal(est.chi_blocks);
    return est;
  }

 private:
  template <int D, int K>
  void accumulate(const Trajectory& traj, int steps, double s, double inv_s2) {
    const int d = fixed_or<D>(d_), k = fixed_or<K>(k_);
    const double* xs = traj.x.data();
    const double* us = traj.u.data();
    double* innov = innov_.data();
    double sigma_sum = 0.0;
    double discount = 1.0;
    for (int t = 0; t < steps; ++t) {
      const int mode = traj.omega[t];
      const double* x = xs + static_cast<std::ptrdiff_t>(t) * d;
      const double* u = us + static_cast<std::ptrdiff_t>(t) * k;
      const double* gain = policy_.gains[mode].data();
      double norm2 = 0.0;
      for (int r = 0; r < k; ++r) {
        double v = u[r];
        for (int j = 0; j < d; ++j) v += gain[j * k + r] * x[j];
        innov[r] = v;
        norm2 += v * v;
      }
      const double weighted = discount * advantage_(t);
      const double w = weighted * inv_s2;
      double* grad = grad_blocks_[mode].data();
      for (int j = 0; j < d; ++j) {
        const double wx = w * x[j];
        for (int r = 0; r < k; ++r) grad[j * k + r] -= wx * innov[r];
      }
      sigma_sum += weighted * (-k / s + norm2 * inv_s2 / s);
      double* chi = chi_blocks_[mode].data();
      for (int j = 0; j < d; ++j) {
        const double dx = discount * x[j];
        for (int i = j; i < d; ++i) chi[j * d + i] += dx * x[i];
      }
      discount *= gamma_;
    }
    grad_sigma_ += sigma_sum;
  }

  const GainPolicy& policy_;
  int d_, k_;
  double gamma_;
  BaselineMode mode_;
  Vector baseline_;
  std::vector<Matrix> grad_blocks_;
  std::vector<Matrix> chi_blocks_;
  double grad_sigma_ = 0.0;
  int used_ = 0;
  int diverged_ = 0;
  Vector q_hat_, advantage_, innov_;
};

}  // namespace detail

// Batch estimate from N rollouts of horizon T_F drawn from substreams
// (iteration, 0..N-1). Rollouts may run on several threads; they are consumed
// in trajectory order, so the result is identical for any thread count.
inline GradientEstimate estimate(const BlackBoxSystem& system,
                                 const GainPolicy& policy, int n_traj,
                                 int horizon, double gamma,
                                 std::uint64_t iteration,
                                 const EstimatorOptions& opts = {}) {
  detail::require_sigma(policy);
  if (n_traj < 1) throw Error(ErrorCode::kInvalidArgument, "N must be >= 1");
  if (policy.n_modes() != system.n_modes()) {
    throw Error(ErrorCode::kDimensionMismatch, "policy/system mode count");
  }
  const int d = system.state_dim(), k = system.input_dim();
  detail::EstimateAccumulator acc(policy, d, k, horizon, gamma, opts.baseline);

  const int threads = std::max(1, opts.threads);
  if (threads == 1) {
    Trajectory traj;
    for (int i = 0; i < n_traj; ++i) {
      rollout_into(system, policy, horizon, iteration, i, traj);
      acc.add(traj);
    }
    return acc.finish(n_traj, horizon);
  }

  const int chunk = std::max(opts.chunk, threads);
  std::vector<Trajectory> buffer(chunk);
  for (int begin = 0; begin < n_traj; begin += chunk) {
    const int count = std::min(chunk, n_traj - begin);
    std::vector<std::thread> workers;
    for (int w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        for (int j = w; j < count; j += threads) {
          rollout_into(system, policy, horizon, iteration, begin + j, buffer[j]);
        }
      });
    }
    for (auto& worker : workers) worker.join();
    for (int j = 0; j < count; ++j) acc.add(buffer[j]);
  }
  return acc.finish(n_traj, horizon);
}

struct RegularizedChi {
  std::vector<Matrix> blocks;  // chi_hat blocks + floor * I
  double floor = 0.0;
  double condition = 0.0;      // lambda_max / lambda_min after the floor

  // G chi^{-1} for G of shape k x (n_s d).
  Matrix solve_right(const Matrix& g) const {
    const Eigen::Index d = blocks.front().rows();
    Matrix out(g.rows(), g.cols());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(i) * d;
      Eigen::LLT<Matrix> llt(blocks[i]);
      out.middleCols(c0, d) =
          llt.solve(g.middleCols(c0, d).transpose()).transpose();
    }
    return out;
  }
};

// Default floor: 1e-8 * tr(chi_hat) / (n_s d).
inline double default_chi_floor(const std::vector<Matrix>& blocks) {
  double trace = 0.0;
  for (const auto& b : blocks) trace += b.trace();
  const double dim =
      static_cast<double>(blocks.size()) * static_cast<double>(blocks.front().rows());
  return 1e-8 * trace / dim;
}

// Adds floor * I to every block so chi_hat can be inverted. A zero floor on a
// singular block raises SingularChi.
inline RegularizedChi regularize_chi(const std::vector<Matrix>& chi_blocks,
                                     std::optional<double> floor = std::nullopt) {
  RegularizedChi out;
  out.floor = floor ? *floor : default_chi_floor(chi_blocks);
  if (out.floor < 0.0) throw Error(ErrorCode::kInvalidArgument, "negative floor");
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t i = 0; i < chi_blocks.size(); ++i) {
    Matrix b = 0.5 * (chi_blocks[i] + chi_blocks[i].transpose());
    b.diagonal().array() += out.floor;
    Eigen::SelfAdjointEigenSolver<Matrix> es(b, Eigen::EigenvaluesOnly);
    const double bmin = es.eigenvalues().minCoeff();
    const double bmax = es.eigenvalues().maxCoeff();
    if (!(bmin > 1e-300) || !(bmin > 1e-15 * bmax)) {
      throw Error(ErrorCode::kSingularChi,
                  "chi block " + std::to_string(i) + " is singular");
    }
    lo = std::min(lo, bmin);
    hi = std::max(hi, bmax);
    out.blocks.push_back(std::move(b));
  }
  out.condition = hi / lo;
  return out;
}

}  // namespace mjls
