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

// Exact policy gradient, Fisher information of the Gaussian policy, and the
// model-based natural policy gradient iteration with its convergence
// certificate.

#pragma once

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mjls/core.hpp"
#include "mjls/exactsolve.hpp"

namespace mjls {

inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

struct ExactGradient {
  Matrix grad_K;            // F_K, k x (n_s d); block i = 2 L_i chi_i
  double grad_sigma = 0.0;  // dC/dsigma
  std::vector<Matrix> L;    // L_i(K)
  std::vector<Matrix> chi_blocks;
  std::vector<Matrix> P;
};

// L_i(K) = (R_i + gamma B_i^T E_i(P) B_i) K_i - gamma B_i^T E_i(P) A_i.
inline std::vector<Matrix> gain_kernels(const MjlsModel& model,
                                        const GainPolicy& policy,
                                        const std::vector<Matrix>& P) {
  const double g = model.gamma();
  std::vector<Matrix> L;
  L.reserve(model.n_modes());
  for (int i = 0; i < model.n_modes(); ++i) {
    const Matrix E = expected_next(model, P, i);
    const Matrix BtE = model.B(i).transpose() * E;
    L.push_back((model.R(i) + g * BtE * model.B(i)) * policy.gains[i] -
                g * BtE * model.A(i));
  }
  return L;
}

inline std::vector<Matrix> gain_kernels(const MjlsModel& model,
                                        const GainPolicy& policy) {
  return gain_kernels(model, policy, solve_coupled_lyapunov(model, policy).P);
}

// dC/dsigma = 2 sigma rho^T (I - gamma trans)^{-1} c,
// c_i = tr(R_i + gamma B_i^T E_i(P) B_i).
inline double sigma_gradient(const MjlsModel& model, double sigma,
                             const std::vector<Matrix>& P) {
  const int ns = model.n_modes();
  const double g = model.gamma();
  Vector c(ns);
  for (int i = 0; i < ns; ++i) {
    const Matrix E = expected_next(model, P, i);
    c(i) = (model.R(i) + g * model.B(i).transpose() * E * model.B(i)).trace();
  }
  Matrix system = -g * model.trans();
  system.diagonal().array() += 1.0;
  return 2.0 * sigma * model.rho().dot(system.partialPivLu().solve(c));
}

inline ExactGradient exact_gradient(const MjlsModel& model,
                                    const GainPolicy& policy) {
  ExactGradient out;
  out.P = solve_coupled_lyapunov(model, policy).P;
  out.L = gain_kernels(model, policy, out.P);
  out.chi_blocks = compute_chi(model, policy).chi_blocks;
  const Eigen::Index d = model.state_dim();
  out.grad_K.resize(model.input_dim(), d * model.n_modes());
  for (int i = 0; i < model.n_modes(); ++i) {
    out.grad_K.middleCols(i * d, d) = 2.0 * out.L[i] * out.chi_blocks[i];
  }
  out.grad_sigma = sigma_gradient(model, policy.sigma, out.P);
  return out;
}

struct FisherInfo {
  Matrix gain_block;         // (n_s d k) x (n_s d k), ordered as vec(K_hat)
  double sigma_entry = 0.0;  // information of sigma
  Matrix full;               // gain block plus the sigma row/column
};

// Fisher information from per-mode discounted second moments, assembled
// entry by entry. For flat index m of vec(K_hat): input row m mod k, column
// c = m / k of K_hat, i.e. mode c / d and state c mod d. Only pairs sharing
// the input row and the mode contribute. `discount_mass` is sum_t gamma^t over
// the horizon the moments were accumulated on.
inline FisherInfo fisher_from_chi(const std::vector<Matrix>& chi_blocks,
                                  int input_dim, double sigma,
                                  double discount_mass) {
  if (!(sigma > 0.0)) {
    throw Error(ErrorCode::kZeroSigma, "Fisher information needs sigma > 0");
  }
  const Eigen::Index d = chi_blocks.front().rows();
  const Eigen::Index k = input_dim;
  const Eigen::Index n = static_cast<Eigen::Index>(chi_blocks.size()) * d * k;
  const double inv_s2 = 1.0 / (sigma * sigma);
  FisherInfo out;
  out.gain_block = Matrix::Zero(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    const Eigen::Index row_a = a % k, col_a = a / k;
    for (Eigen::Index b = 0; b < n; ++b) {
      const Eigen::Index row_b = b % k, col_b = b / k;
      if (row_a != row_b || col_a / d != col_b / d) continue;
      out.gain_block(a, b) =
          inv_s2 * chi_blocks[col_a / d](col_a % d, col_b % d);
    }
  }
  out.sigma_entry = 2.0 * static_cast<double>(k) * inv_s2 * discount_mass;
  out.full = Matrix::Zero(n + 1, n + 1);
  out.full.topLeftCorner(n, n) = out.gain_block;
  out.full(n, n) = out.sigma_entry;
  return out;
}

inline FisherInfo fisher_matrix(const MjlsModel& model,
                                const GainPolicy& policy) {
  if (!(policy.sigma > 0.0)) {
    throw Error(ErrorCode::kZeroSigma, "Fisher information needs sigma > 0");
  }
  return fisher_from_chi(compute_chi(model, policy).chi_blocks,
                         model.input_dim(), policy.sigma,
                         1.0 / (1.0 - model.gamma()));
}

// Largest scaled step for which one NPG step provably stays feasible:
// 1 / (2 max_i ||R_i + gamma B_i^T E_i(P^K) B_i||).
inline double feasible_step_bound(const MjlsModel& model,
                                  const GainPolicy& policy) {
  const auto P = solve_coupled_lyapunov(model, policy).P;
  double worst = 0.0;
  for (int i = 0; i < model.n_modes(); ++i) {
    const Matrix E = expected_next(model, P, i);
    worst = std::max(worst, spectral_norm(model.R(i) + model.gamma() *
                                          model.B(i).transpose() * E *
                                          model.B(i)));
  }
  return 0.5 / worst;
}

struct NpgOptions {
  // Multiply by an explicitly inverted chi instead of using the cancelled
  // form grad_K chi^{-1} = 2 [L_1 ... L_{n_s}].
  bool explicit_chi = false;
};

// K+ = K - eta_tilde grad_K chi^{-1} = K - 2 eta_tilde [L_1 ... L_{n_s}],
// sigma+ = sigma - alpha sigma^2 F_sigma (1 - gamma) / (2k).
inline GainPolicy npg_step_exact(const MjlsModel& model,
                                 const GainPolicy& policy, double eta_tilde,
                                 double alpha, const NpgOptions& opts = {}) {
  check_policy(model, policy);
  const auto P = solve_coupled_lyapunov(model, policy).P;
  GainPolicy next = policy;
  if (opts.explicit_chi) {
    const ExactGradient grad = exact_gradient(model, policy);
    const Eigen::Index d = model.state_dim();
    for (int i = 0; i < model.n_modes(); ++i) {
      Eigen::LLT<Matrix> llt(grad.chi_blocks[i]);
      if (llt.info() != Eigen::Success) {
        throw Error(ErrorCode::kSingularChi,
                    "chi block " + std::to_string(i) + " is singular");
      }
      // grad_i chi_i^{-1} = (chi_i^{-1} grad_i^T)^T since chi_i is symmetric.
      const Matrix block = grad.grad_K.middleCols(i * d, d);
      next.gains[i] -= eta_tilde * llt.solve(block.transpose()).transpose();
    }
  } else {
    const auto L = gain_kernels(model, policy, P);
    for (int i = 0; i < model.n_modes(); ++i) {
      next.gains[i] -= 2.0 * eta_tilde * L[i];
    }
  }
  if (alpha != 0.0 && policy.sigma > 0.0) {
    const double fs = sigma_gradient(model, policy.sigma, P);
    next.sigma = policy.sigma - alpha * policy.sigma * policy.sigma * fs *
                                    (1.0 - model.gamma()) /
                                    (2.0 * model.input_dim());
  }
  return next;
}

struct ConvergenceCertificate {
  double eta_tilde_max = 0.0;  // certified constant scaled step size
  double contraction = 1.0;    // per-step factor on the optimality gap
  double mu = 0.0;             // min_i rho_i * sigma_min(Sigma0)
  double chi_star_norm = 0.0;  // ||chi_{K*}(0)||
  double sigma_min_R = 0.0;    // sigma_min(R_hat)
  double norm_R = 0.0;         // ||R_hat||
  double norm_B = 0.0;         // ||B_hat||
  double initial_cost = 0.0;   // C(K0, 0)
  double optimal_cost = 0.0;   // C(K*, 0)
  GainPolicy optimal;

  // Contraction factor for an arbitrary scaled step.
  double contraction_at(double eta_tilde) const {
    return 1.0 - 2.0 * eta_tilde * mu * sigma_min_R / chi_star_norm;
  }
};

// eta_tilde_max = 1/2 (||R_hat|| + gamma ||B_hat||^2 C(K0, 0) / mu)^{-1} and
// contraction = 1 - 2 eta_tilde_max mu sigma_min(R_hat) / ||chi_{K*}(0)||.
inline ConvergenceCertificate certify_convergence(const MjlsModel& model,
                                                  const GainPolicy& initial) {
  check_policy(model, initial);
  ConvergenceCertificate c;
  c.mu = model.rho().minCoeff() *
         detail::min_symmetric_eigenvalue(model.sigma0_cov());
  if (!(c.mu > 0.0)) {
    throw Error(ErrorCode::kDegenerateInit,
                "mu = min rho_i * sigma_min(Sigma0) must be positive");
  }
  GainPolicy k0 = initial;
  k0.sigma = 0.0;
  c.initial_cost = evaluate_cost(model, k0);
  c.sigma_min_R = std::numeric_limits<double>::infinity();
  for (int i = 0; i < model.n_modes(); ++i) {
    c.norm_R = std::max(c.norm_R, spectral_norm(model.R(i)));
    c.norm_B = std::max(c.norm_B, spectral_norm(model.B(i)));
    c.sigma_min_R =
        std::min(c.sigma_min_R, detail::min_symmetric_eigenvalue(model.R(i)));
  }
  c.eta_tilde_max = 0.5 / (c.norm_R + model.gamma() * c.norm_B * c.norm_B *
                                          c.initial_cost / c.mu);
  c.optimal = optimal_gains(model, solve_coupled_are(model));
  c.optimal_cost = evaluate_cost(model, c.optimal);
  for (const auto& block : compute_chi(model, c.optimal).chi_blocks) {
    c.chi_star_norm = std::max(c.chi_star_norm, spectral_norm(block));
  }
  c.contraction = c.contraction_at(c.eta_tilde_max);
  return c;
}

struct NpgTrace {
  std::vector<GainPolicy> policies;  // K^0 ... K^steps
  std::vector<double> costs;         // C(K^n, 0)
  std::vector<double> gaps;          // C(K^n, 0) - C*
  std::vector<bool> contraction_ok;  // per step, gap_{n+1} <= rho gap_n
  ConvergenceCertificate certificate;
  double eta_tilde = 0.0;
  double contraction = 1.0;  // factor at eta_tilde
  bool above_certified_bound = false;
};

// Runs `steps` exact NPG iterations with a constant scaled step and checks the
// per-step contraction of the optimality gap.
inline NpgTrace run_model_based_npg(const MjlsModel& model,
                                    const GainPolicy& initial, int steps,
                                    double eta_tilde, double alpha = 0.0) {
  if (steps < 0) throw Error(ErrorCode::kInvalidArgument, "steps must be >= 0");
  NpgTrace trace;
  trace.certificate = certify_convergence(model, initial);
  trace.eta_tilde = eta_tilde;
  trace.contraction = trace.certificate.contraction_at(eta_tilde);
  trace.above_certified_bound = eta_tilde > trace.certificate.eta_tilde_max;
  const double c_star = trace.certificate.optimal_cost;
  // Slack for rounding in the cost evaluations themselves.
  const double slack = 1e-12 * (1.0 + std::abs(c_star));

  GainPolicy policy = initial;
  auto record = [&](const GainPolicy& p) {
    GainPolicy deterministic = p;
    deterministic.sigma = 0.0;
    const double cost = evaluate_cost(model, deterministic);
    trace.policies.push_back(p);
    trace.costs.push_back(cost);
    trace.gaps.push_back(cost - c_star);
  };
  record(policy);
  for (int n = 0; n < steps; ++n) {
    policy = npg_step_exact(model, policy, eta_tilde, alpha);
    record(policy);
    const double prev = trace.gaps[trace.gaps.size() - 2];
    trace.contraction_ok.push_back(trace.gaps.back() <=
                                   trace.contraction * prev + slack);
  }
  return trace;
}

}  // namespace mjls
