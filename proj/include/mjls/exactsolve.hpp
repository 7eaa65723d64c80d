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

// Model-based ground truth: coupled Riccati and Lyapunov equations, policy
// cost, and the discounted per-mode state second moments (chi).

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mjls/core.hpp"

namespace mjls {

// Per-mode value matrices P_i and noise offsets z_i.
struct CoupledValue {
  std::vector<Matrix> P;
  Vector z;
  int iterations = 0;
  double residual = 0.0;  // max_i ||RHS_i - P_i||_F / (1 + ||P_i||_F)
};

struct ModeCovariances {
  std::vector<std::vector<Matrix>> X;  // X[t][i] = E[x_t x_t^T 1{w_t = i}]
  std::vector<Vector> q;               // mode marginals used
  Vector discounted_q;                 // sum_t gamma^t q(t) (linear solve)
  std::vector<Matrix> chi_blocks;      // sum_t gamma^t X_i(t)
  Matrix chi;                          // block-diagonal assembly
};

inline Matrix block_diagonal(const std::vector<Matrix>& blocks) {
  Eigen::Index rows = 0, cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  Matrix out = Matrix::Zero(rows, cols);
  Eigen::Index r = 0, c = 0;
  for (const auto& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

namespace detail {

inline Vector stack_vec(const std::vector<Matrix>& blocks) {
  const Eigen::Index n = blocks.front().size();
  Vector out(n * static_cast<Eigen::Index>(blocks.size()));
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    out.segment(static_cast<Eigen::Index>(i) * n, n) =
        Eigen::Map<const Vector>(blocks[i].data(), n);
  }
  return out;
}

inline std::vector<Matrix> unstack_vec(const Vector& v, int n_modes,
                                       Eigen::Index d) {
  std::vector<Matrix> out;
  out.reserve(n_modes);
  for (int i = 0; i < n_modes; ++i) {
    Matrix m = Eigen::Map<const Matrix>(v.data() + i * d * d, d, d);
    out.push_back(0.5 * (m + m.transpose()));
  }
  return out;
}

inline double sym_norm(const Matrix& m) { return m.norm(); }

// LU of I - T for the lifted closed-loop operator T. Solving with it gives
// chi; solving with its transpose gives the coupled Lyapunov solution.
struct LiftedSystem {
  Eigen::PartialPivLU<Matrix> lu;
  Eigen::Index d = 0;
  int n_modes = 0;

  LiftedSystem(const MjlsModel& model, const GainPolicy& policy)
      : d(model.state_dim()), n_modes(model.n_modes()) {
    Matrix T = closed_loop_operator(model, policy);
    T *= -1.0;
    T.diagonal().array() += 1.0;
    lu.compute(T);
  }

  std::vector<Matrix> solve(const std::vector<Matrix>& rhs) const {
    return unstack_vec(lu.solve(stack_vec(rhs)), n_modes, d);
  }
  std::vector<Matrix> solve_transposed(const std::vector<Matrix>& rhs) const {
    return unstack_vec(lu.transpose().solve(stack_vec(rhs)), n_modes, d);
  }
};

// For positive definite right-hand sides, the fixed point of a positive
// operator is positive definite iff the operator's spectral radius is < 1.
inline bool all_positive_definite(const std::vector<Matrix>& blocks) {
  for (const auto& b : blocks) {
    if (!b.allFinite()) return false;
    Eigen::LLT<Matrix> llt(b);
    if (llt.info() != Eigen::Success) return false;
    if (min_symmetric_eigenvalue(b) <= 0.0) return false;
  }
  return true;
}

inline Matrix lyapunov_rhs_term(const MjlsModel& model, const Matrix& closed,
                                const Matrix& expected) {
  return model.gamma() * closed.transpose() * expected * closed;
}

}  // namespace detail

struct AreOptions {
  double tol = 1e-12;       // target relative residual
  double accept_tol = 1e-9; // residual accepted on stall or iteration cap
  int max_iters = 100000;
};

// Right-hand side of the coupled Riccati equations evaluated at P.
inline std::vector<Matrix> riccati_rhs(const MjlsModel& model,
                                       const std::vector<Matrix>& P) {
  const double g = model.gamma();
  std::vector<Matrix> out;
  out.reserve(model.n_modes());
  for (int i = 0; i < model.n_modes(); ++i) {
    const Matrix E = expected_next(model, P, i);
    const Matrix EB = E * model.B(i);
    const Matrix S = model.R(i) + g * model.B(i).transpose() * EB;
    const Matrix G = g * EB.transpose() * model.A(i);
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::kSingularMatrix,
                  "R + gamma B^T E B not positive definite in mode " +
                      std::to_string(i));
    }
    Matrix next = model.Q(i) + g * model.A(i).transpose() * E * model.A(i) -
                  G.transpose() * llt.solve(G);
    out.push_back(0.5 * (next + next.transpose()));
  }
  return out;
}

// Coupled Riccati solution by value iteration from P_i = Q_i.
inline CoupledValue solve_coupled_are(const MjlsModel& model,
                                      const AreOptions& opts = {}) {
  std::vector<Matrix> P(model.data().Q);
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int it = 1; it <= opts.max_iters; ++it) {
    std::vector<Matrix> next = riccati_rhs(model, P);
    double residual = 0.0;
    for (int i = 0; i < model.n_modes(); ++i) {
      if (!next[i].allFinite() || next[i].norm() > 1e150) {
        throw Error(ErrorCode::kNoConvergence,
                    "Riccati iteration diverged at iteration " +
                        std::to_string(it) + " (not stabilizable?)");
      }
      residual = std::max(residual, (next[i] - P[i]).norm() /
                                        (1.0 + detail::sym_norm(P[i])));
    }
    if (residual <= opts.tol) return {P, Vector::Zero(model.n_modes()), it, residual};
    if (residual < best) {
      best = residual;
      since_best = 0;
    } else if (++since_best > 1000 && residual <= opts.accept_tol) {
      return {P, Vector::Zero(model.n_modes()), it, residual};
    }
    if (it == opts.max_iters && residual <= opts.accept_tol) {
      return {P, Vector::Zero(model.n_modes()), it, residual};
    }
    P = std::move(next);
  }
  throw Error(ErrorCode::kNoConvergence,
              "coupled Riccati iteration did not converge in " +
                  std::to_string(opts.max_iters) + " iterations");
}

// K_i = gamma (R_i + gamma B_i^T E_i(P) B_i)^{-1} B_i^T E_i(P) A_i, sigma = 0.
inline GainPolicy optimal_gains(const MjlsModel& model,
                                const CoupledValue& value) {
  const double g = model.gamma();
  GainPolicy out;
  out.sigma = 0.0;
  for (int i = 0; i < model.n_modes(); ++i) {
    const Matrix E = expected_next(model, value.P, i);
    const Matrix S = model.R(i) + g * model.B(i).transpose() * E * model.B(i);
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::kSingularMatrix,
                  "R + gamma B^T E B singular in mode " + std::to_string(i));
    }
    out.gains.push_back(llt.solve(g * model.B(i).transpose() * E * model.A(i)));
  }
  return out;
}

// P_i = Q_i + K_i^T R_i K_i + gamma (A_i - B_i K_i)^T E_i(P) (A_i - B_i K_i),
// solved as one linear system in the stacked vec(P_i).
inline CoupledValue solve_coupled_lyapunov(const MjlsModel& model,
                                           const GainPolicy& policy) {
  check_policy(model, policy);
  const int ns = model.n_modes();
  std::vector<Matrix> W;
  W.reserve(ns);
  for (int i = 0; i < ns; ++i) {
    W.push_back(model.Q(i) + policy.gains[i].transpose() * model.R(i) *
                                 policy.gains[i]);
  }
  const detail::LiftedSystem lifted(model, policy);
  std::vector<Matrix> P = lifted.solve_transposed(W);
  if (!detail::all_positive_definite(P)) {
    throw Error(ErrorCode::kNotStabilizing,
                "policy does not mean-square stabilize the scaled closed loop");
  }
  const auto closed = closed_loop_matrices(model, policy);
  auto residual_of = [&](const std::vector<Matrix>& cand,
                         std::vector<Matrix>* res) {
    double worst = 0.0;
    const auto E = expected_next_all(model, cand);
    for (int i = 0; i < ns; ++i) {
      Matrix r = W[i] + detail::lyapunov_rhs_term(model, closed[i], E[i]) -
                 cand[i];
      worst = std::max(worst, r.norm() / (1.0 + cand[i].norm()));
      if (res) (*res)[i] = std::move(r);
    }
    return worst;
  };
  std::vector<Matrix> res(ns);
  double residual = residual_of(P, &res);
  // One step of iterative refinement recovers accuracy lost to conditioning.
  for (int pass = 0; pass < 2 && residual > 1e-13; ++pass) {
    const auto correction = lifted.solve_transposed(res);
    std::vector<Matrix> refined(ns);
    for (int i = 0; i < ns; ++i) refined[i] = P[i] + correction[i];
    std::vector<Matrix> refined_res(ns);
    const double r2 = residual_of(refined, &refined_res);
    if (r2 >= residual) break;
    P = std::move(refined);
    res = std::move(refined_res);
    residual = r2;
  }
  return {std::move(P), Vector::Zero(ns), 1, residual};
}

// z = (I - gamma trans)^{-1} b with
// b_i = sigma^2 tr(R_i + gamma B_i^T E_i B_i) + gamma eps^2 tr(E_i).
inline CoupledValue solve_z(const MjlsModel& model, CoupledValue value,
                            double sigma) {
  const int ns = model.n_modes();
  const double g = model.gamma();
  const double eps2 = model.eps() * model.eps();
  Vector b(ns);
  for (int i = 0; i < ns; ++i) {
    const Matrix E = expected_next(model, value.P, i);
    b(i) = sigma * sigma *
               (model.R(i) + g * model.B(i).transpose() * E * model.B(i))
                   .trace() +
           g * eps2 * E.trace();
  }
  Matrix system = -g * model.trans();
  system.diagonal().array() += 1.0;
  value.z = system.partialPivLu().solve(b);
  return value;
}

struct PolicyEvaluation {
  CoupledValue value;  // P and z
  double cost = 0.0;
};

inline PolicyEvaluation evaluate_policy(const MjlsModel& model,
                                        const GainPolicy& policy) {
  CoupledValue v = solve_z(model, solve_coupled_lyapunov(model, policy),
                           policy.sigma);
  double cost = 0.0;
  for (int i = 0; i < model.n_modes(); ++i) {
    cost += model.rho()(i) *
            ((v.P[i] * model.sigma0_cov()).trace() + v.z(i));
  }
  return {std::move(v), cost};
}

// C(K, sigma) = sum_i rho_i (tr(P_i Sigma0) + z_i).
inline double evaluate_cost(const MjlsModel& model, const GainPolicy& policy) {
  return evaluate_policy(model, policy).cost;
}

// Per-mode process noise injected when the chain is in mode i:
// sigma^2 B_i B_i^T + eps^2 I.
inline Matrix injected_noise(const MjlsModel& model, int i, double sigma) {
  Matrix n = sigma * sigma * model.B(i) * model.B(i).transpose();
  n.diagonal().array() += model.eps() * model.eps();
  return n;
}

// X_i(0) = rho_i Sigma0 and
// X_j(t+1) = sum_i p_ij [(A_i - B_i K_i) X_i(t) (A_i - B_i K_i)^T
//                        + (sigma^2 B_i B_i^T + eps^2 I) q_i(t)].
inline ModeCovariances covariance_sequence(const MjlsModel& model,
                                           const GainPolicy& policy,
                                           int horizon) {
  check_policy(model, policy);
  const int ns = model.n_modes();
  const Eigen::Index d = model.state_dim();
  ModeCovariances out;
  out.q = mode_marginals(model, horizon);
  const auto closed = closed_loop_matrices(model, policy);
  std::vector<Matrix> noise;
  for (int i = 0; i < ns; ++i) noise.push_back(injected_noise(model, i, policy.sigma));

  std::vector<Matrix> X;
  for (int i = 0; i < ns; ++i) X.push_back(model.rho()(i) * model.sigma0_cov());
  out.X.reserve(static_cast<std::size_t>(horizon) + 1);
  out.X.push_back(X);
  for (int t = 0; t < horizon; ++t) {
    std::vector<Matrix> pushed(ns);
    for (int i = 0; i < ns; ++i) {
      pushed[i] = closed[i] * X[i] * closed[i].transpose() +
                  out.q[t](i) * noise[i];
    }
    std::vector<Matrix> next(ns, Matrix::Zero(d, d));
    for (int j = 0; j < ns; ++j) {
      for (int i = 0; i < ns; ++i) {
        const double p = model.trans()(i, j);
        if (p != 0.0) next[j] += p * pushed[i];
      }
      next[j] = 0.5 * (next[j] + next[j].transpose());
    }
    X = std::move(next);
    out.X.push_back(X);
  }
  return out;
}

enum class ChiMethod { kLinearSolve, kTruncatedSum };

// chi = sum_t gamma^t diag(X_1(t), ..., X_{n_s}(t)).
//
// kLinearSolve uses the discounted fixed point
//   (I - T) vec(chi) = vec(X(0)) + gamma * sum_i p_ij qbar_i vec(N_i),
// with qbar = (I - gamma trans^T)^{-1} rho and N_i the injected noise.
// kTruncatedSum adds the first `horizon`+1 terms of the series.
inline ModeCovariances compute_chi(const MjlsModel& model,
                                   const GainPolicy& policy,
                                   ChiMethod method = ChiMethod::kLinearSolve,
                                   int horizon = 5000) {
  check_policy(model, policy);
  const int ns = model.n_modes();
  const Eigen::Index d = model.state_dim();
  const double g = model.gamma();
  ModeCovariances out;
  if (method == ChiMethod::kTruncatedSum) {
    out = covariance_sequence(model, policy, horizon);
    out.chi_blocks.assign(ns, Matrix::Zero(d, d));
    double w = 1.0;
    for (const auto& Xt : out.X) {
      for (int i = 0; i < ns; ++i) out.chi_blocks[i] += w * Xt[i];
      w *= g;
    }
    out.chi = block_diagonal(out.chi_blocks);
    return out;
  }

  const detail::LiftedSystem lifted(model, policy);
  // Feasibility certificate on the adjoint (Lyapunov) side.
  if (!detail::all_positive_definite(lifted.solve_transposed(
          std::vector<Matrix>(ns, Matrix::Identity(d, d))))) {
    throw Error(ErrorCode::kNotStabilizing,
                "policy does not mean-square stabilize the scaled closed loop");
  }
  Matrix system = -g * model.trans().transpose();
  system.diagonal().array() += 1.0;
  const Vector qbar = system.partialPivLu().solve(model.rho());
  std::vector<Matrix> rhs(ns);
  for (int j = 0; j < ns; ++j) {
    rhs[j] = model.rho()(j) * model.sigma0_cov();
    for (int i = 0; i < ns; ++i) {
      const double p = model.trans()(i, j);
      if (p != 0.0) rhs[j] += g * p * qbar(i) * injected_noise(model, i, policy.sigma);
    }
  }
  out.chi_blocks = lifted.solve(rhs);
  out.chi = block_diagonal(out.chi_blocks);
  out.discounted_q = qbar;
  return out;
}

}  // namespace mjls
