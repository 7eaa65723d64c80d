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

// Seeded simulation of the jump system under Gaussian feedback policies.
// Learners only ever see a BlackBoxSystem: they can start episodes and apply
// inputs, observing the state, the mode and the stage cost.

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstddef>
#include <type_traits>
#include <cmath>
#include <cstdint>
#include <memory>
#include <ostream>
#include <vector>

#include "mjls/core.hpp"
#include "mjls/random.hpp"

namespace mjls {

// Rollouts stop once ||x_t|| exceeds this (or becomes non-finite).
inline constexpr double kDivergenceThreshold = 1e8;

// Columns are time steps: x.col(t) = x_t, u.col(t) = u_t. Modes are 0-based.
struct Trajectory {
  Matrix x;                // d x (T_F + 1)
  Matrix u;                // k x (T_F + 1)
  std::vector<int> omega;  // T_F + 1 entries
  Vector c;                // stage costs x^T Q x + u^T R u
  bool diverged = false;

  int length() const { return static_cast<int>(c.size()); }
};

class BlackBoxSystem;

namespace detail {
template <int D, int K>
void rollout_kernel(const BlackBoxSystem& system, const GainPolicy& policy,
                    int horizon, std::uint64_t iteration,
                    std::uint64_t trajectory, Trajectory& traj);
}  // namespace detail

// One running episode. Holds its own environment stream, so episodes of the
// same system can run concurrently.
class Episode {
 public:
  const Vector& state() const { return x_; }
  int mode() const { return mode_; }

  // Applies u_t in the current (x_t, w_t), returns c_t and advances to t+1.
  double step(const Eigen::Ref<const Vector>& u);

 private:
  friend class BlackBoxSystem;
  template <int D, int K>
  friend void detail::rollout_kernel(const BlackBoxSystem&, const GainPolicy&,
                                     int, std::uint64_t, std::uint64_t,
                                     Trajectory&);
  template <int D, int K>
  double advance(const double* u);
  struct Plant;
  Episode(std::shared_ptr<const Plant> plant, std::uint64_t seed);

  std::shared_ptr<const Plant> plant_;
  RandomStream rng_;
  Vector x_;
  Vector next_;
  Vector noise_;
  int mode_ = 0;
};

struct Episode::Plant {
  explicit Plant(const MjlsModel& model) : model(model) {
    const Matrix& cov = model.sigma0_cov();
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    const Vector lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    x0_factor = es.eigenvectors() * lam.asDiagonal();
  }
  MjlsModel model;
  Matrix x0_factor;  // F with F F^T = Sigma0
};

// Opaque wrapper around a model and a master seed.
class BlackBoxSystem {
 public:
  BlackBoxSystem(const MjlsModel& model, std::uint64_t master_seed)
      : plant_(std::make_shared<const Episode::Plant>(model)),
        master_seed_(master_seed) {}

  int n_modes() const { return plant_->model.n_modes(); }
  int state_dim() const { return plant_->model.state_dim(); }
  int input_dim() const { return plant_->model.input_dim(); }
  std::uint64_t master_seed() const { return master_seed_; }

  // Episode `trajectory` of learning iteration `iteration`; its environment
  // noise depends only on (master seed, iteration, trajectory).
  Episode start(std::uint64_t iteration, std::uint64_t trajectory) const {
    return Episode(plant_, derive_seed(master_seed_, 2 * iteration,
                                       trajectory));
  }

  // Seed for the agent-side (exploration) noise of the same episode.
  std::uint64_t agent_seed(std::uint64_t iteration,
                           std::uint64_t trajectory) const {
    return derive_seed(master_seed_, 2 * iteration + 1, trajectory);
  }

 private:
  std::shared_ptr<const Episode::Plant> plant_;
  std::uint64_t master_seed_;
};

inline Episode::Episode(std::shared_ptr<const Plant> plant, std::uint64_t seed)
    : plant_(std::move(plant)), rng_(seed) {
  const MjlsModel& m = plant_->model;
  const int d = m.state_dim();
  mode_ = rng_.categorical(m.rho());
  noise_.resize(d);
  rng_.fill_normal(noise_);
  x_ = plant_->x0_factor * noise_;
  next_.resize(d);
}

namespace detail {

// Size known at compile time when N > 0, else taken from `runtime`.
template <int N>
constexpr int fixed_or(int runtime) {
  if constexpr (N > 0) {
    return N;
  } else {
    return runtime;
  }
}

// y = M x, or y += M x, for column-major M of size rows x cols.
template <int R, int C>
inline void matvec(const double* __restrict a, int rows, int cols,
                   const double* __restrict x, double* __restrict y,
                   bool accumulate = false) {
  const int nr = fixed_or<R>(rows), nc = fixed_or<C>(cols);
  if (!accumulate) {
    for (int i = 0; i < nr; ++i) y[i] = 0.0;
  }
  for (int j = 0; j < nc; ++j) {
    const double xj = x[j];
    const double* col = a + j * nr;
    for (int i = 0; i < nr; ++i) y[i] += col[i] * xj;
  }
}

// x^T M x for square M of size n.
template <int N>
inline double quad_form(const double* __restrict a, int n,
                        const double* __restrict x) {
  const int nn = fixed_or<N>(n);
  double total = 0.0;
  for (int j = 0; j < nn; ++j) {
    const double* col = a + j * nn;
    double s = 0.0;
    for (int i = 0; i < nn; ++i) s += col[i] * x[i];
    total += s * x[j];
  }
  return total;
}

// Calls f(std::integral_constant<int, D>, std::integral_constant<int, K>)
// with the dimensions fixed for common small shapes and 0 (dynamic) otherwise.
template <typename F>
inline void dispatch_dims(int d, int k, F&& f) {
  using std::integral_constant;
  if (d == 1 && k == 1) return f(integral_constant<int, 1>{}, integral_constant<int, 1>{});
  if (d == 2 && k == 1) return f(integral_constant<int, 2>{}, integral_constant<int, 1>{});
  if (d == 2 && k == 2) return f(integral_constant<int, 2>{}, integral_constant<int, 2>{});
  if (d == 3 && k == 1) return f(integral_constant<int, 3>{}, integral_constant<int, 1>{});
  if (d == 10 && k == 3) return f(integral_constant<int, 10>{}, integral_constant<int, 3>{});
  return f(integral_constant<int, 0>{}, integral_constant<int, 0>{});
}

}  // namespace detail

template <int D, int K>
inline double Episode::advance(const double* u) {
  const MjlsModel& m = plant_->model;
  const int d = detail::fixed_or<D>(static_cast<int>(x_.size()));
  const int k = detail::fixed_or<K>(m.input_dim());
  const int i = mode_;
  const double cost = detail::quad_form<D>(m.Q(i).data(), d, x_.data()) +
                      detail::quad_form<K>(m.R(i).data(), k, u);
  detail::matvec<D, D>(m.A(i).data(), d, d, x_.data(), next_.data());
  detail::matvec<D, K>(m.B(i).data(), d, k, u, next_.data(), true);
  if (m.eps() > 0.0) {
    const double eps = m.eps();
    for (int j = 0; j < d; ++j) next_(j) += eps * rng_.normal();
  }
  x_.swap(next_);
  mode_ = rng_.categorical(m.trans().row(i));
  return cost;
}

inline double Episode::step(const Eigen::Ref<const Vector>& u) {
  if (u.size() != plant_->model.input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "input has wrong size");
  }
  const Vector copy = u;
  return advance<0, 0>(copy.data());
}

namespace detail {

template <int D, int K>
void rollout_kernel(const BlackBoxSystem& system, const GainPolicy& policy,
                    int horizon, std::uint64_t iteration,
                    std::uint64_t trajectory, Trajectory& traj) {
  const int d = fixed_or<D>(system.state_dim());
  const int k = fixed_or<K>(system.input_dim());
  const int steps = horizon + 1;
  Episode ep = system.start(iteration, trajectory);
  RandomStream agent(system.agent_seed(iteration, trajectory));
  const double limit = kDivergenceThreshold * kDivergenceThreshold;
  const double sigma = policy.sigma;
  double* xs = traj.x.data();
  double* us = traj.u.data();
  int t = 0;
  for (; t < steps; ++t) {
    const double* x = ep.x_.data();
    double norm2 = 0.0;
    for (int j = 0; j < d; ++j) norm2 += x[j] * x[j];
    if (!(norm2 <= limit)) {
      traj.diverged = true;
      break;
    }
    const int mode = ep.mode_;
    double* u = us + static_cast<std::ptrdiff_t>(t) * k;
    matvec<K, D>(policy.gains[mode].data(), k, d, x, u);
    for (int j = 0; j < k; ++j) u[j] = -u[j];
    if (sigma > 0.0) {
      for (int j = 0; j < k; ++j) u[j] += sigma * agent.normal();
    }
    double* xt = xs + static_cast<std::ptrdiff_t>(t) * d;
    for (int j = 0; j < d; ++j) xt[j] = x[j];
    traj.omega[t] = mode;
    traj.c(t) = ep.template advance<D, K>(u);
  }
  if (traj.diverged) {
    traj.x.conservativeResize(d, t);
    traj.u.conservativeResize(k, t);
    traj.omega.resize(t);
    traj.c.conservativeResize(t);
  }
}

}  // namespace detail

// Runs T_F + 1 steps of u_t = -K_{w_t} x_t + sigma v_t, v_t ~ N(0, I), into
// `traj` (resized as needed). A diverging run is truncated and tagged.
inline void rollout_into(const BlackBoxSystem& system, const GainPolicy& policy,
                         int horizon, std::uint64_t iteration,
                         std::uint64_t trajectory, Trajectory& traj) {
  if (horizon < 0) throw Error(ErrorCode::kInvalidArgument, "T_F must be >= 0");
  const int d = system.state_dim();
  const int k = system.input_dim();
  if (policy.n_modes() != system.n_modes()) {
    throw Error(ErrorCode::kDimensionMismatch, "policy/system mode count");
  }
  for (const Matrix& g : policy.gains) {
    if (g.rows() != k || g.cols() != d) {
      throw Error(ErrorCode::kDimensionMismatch, "gain must be k x d");
    }
  }
  const int steps = horizon + 1;
  traj.x.resize(d, steps);
  traj.u.resize(k, steps);
  traj.omega.resize(steps);
  traj.c.resize(steps);
  traj.diverged = false;

  detail::dispatch_dims(d, k, [&](auto dc, auto kc) {
    detail::rollout_kernel<decltype(dc)::value, decltype(kc)::value>(
        system, policy, horizon, iteration, trajectory, traj);
  });
}

inline Trajectory rollout(const BlackBoxSystem& system,
                          const GainPolicy& policy, int horizon,
                          std::uint64_t iteration = 0,
                          std::uint64_t trajectory = 0) {
  Trajectory traj;
  rollout_into(system, policy, horizon, iteration, trajectory, traj);
  return traj;
}

// w_0 ~ rho, w_{t+1} ~ trans.row(w_t); returns T+1 modes (0-based).
inline std::vector<int> sample_mode_chain(const Matrix& trans,
                                          const Vector& rho, int horizon,
                                          RandomStream& stream) {
  std::vector<int> modes;
  modes.reserve(static_cast<std::size_t>(horizon) + 1);
  modes.push_back(stream.categorical(rho));
  for (int t = 0; t < horizon; ++t) {
    modes.push_back(stream.categorical(trans.row(modes.back())));
  }
  return modes;
}

// sum_{t'=t_start}^{T_F} gamma^{t' - t_start} c_{t'}.
inline double discounted_return(const Trajectory& traj, double gamma,
                                int t_start) {
  if (t_start < 0 || t_start >= traj.length()) {
    throw Error(ErrorCode::kInvalidArgument, "t_start out of range");
  }
  double total = 0.0, w = 1.0;
  for (int t = t_start; t < traj.length(); ++t) {
    total += w * traj.c(t);
    w *= gamma;
  }
  return total;
}

// Reward-to-go for every t by backward recursion G_t = c_t + gamma G_{t+1}.
inline void reward_to_go(const Vector& costs, double gamma, Vector& out) {
  const Eigen::Index n = costs.size();
  out.resize(n);
  double acc = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    acc = costs(t) + gamma * acc;
    out(t) = acc;
  }
}

// CSV with columns t, omega, x_1..x_d, u_1..u_k, c; omega is written 1-based.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const Eigen::Index d = traj.x.rows(), k = traj.u.rows();
  os << "t,omega";
  for (Eigen::Index i = 1; i <= d; ++i) os << ",x_" << i;
  for (Eigen::Index i = 1; i <= k; ++i) os << ",u_" << i;
  os << ",c\n";
  os.precision(17);
  for (int t = 0; t < traj.length(); ++t) {
    os << t << ',' << traj.omega[t] + 1;
    for (Eigen::Index i = 0; i < d; ++i) os << ',' << traj.x(i, t);
    for (Eigen::Index i = 0; i < k; ++i) os << ',' << traj.u(i, t);
    os << ',' << traj.c(t) << '\n';
  }
}

}  // namespace mjls
