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

// Domain types for discrete-time Markov jump linear systems
//
//   x_{t+1} = A_{w_t} x_t + B_{w_t} u_t + e_t,   e_t ~ N(0, eps^2 I),
//
// with mode w_t driven by a finite Markov chain, plus the mean-square
// stability test for the sqrt(gamma)-scaled closed loop.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mjls/errors.hpp"

namespace mjls {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Unvalidated model data, as read from a file or assembled by a generator.
struct ModelData {
  std::vector<Matrix> A;  // n_s blocks, d x d
  std::vector<Matrix> B;  // n_s blocks, d x k
  std::vector<Matrix> Q;  // n_s blocks, d x d, symmetric positive definite
  std::vector<Matrix> R;  // n_s blocks, k x k, symmetric positive definite
  Matrix trans;           // n_s x n_s row-stochastic, trans(i, j) = p_ij
  Vector rho;             // initial mode distribution
  double gamma = 0.99;
  double eps = 0.0;
  Matrix sigma0_cov;      // E[x0 x0^T]; empty means identity
};

class MjlsModel;
MjlsModel validate_model(ModelData raw);

// A validated MJLS. Immutable once constructed; the only way to obtain one is
// through validate_model.
class MjlsModel {
 public:
  int n_modes() const { return static_cast<int>(data_.A.size()); }
  int state_dim() const { return static_cast<int>(data_.A.front().rows()); }
  int input_dim() const { return static_cast<int>(data_.B.front().cols()); }

  const Matrix& A(int i) const { return data_.A[i]; }
  const Matrix& B(int i) const { return data_.B[i]; }
  const Matrix& Q(int i) const { return data_.Q[i]; }
  const Matrix& R(int i) const { return data_.R[i]; }
  const Matrix& trans() const { return data_.trans; }
  const Vector& rho() const { return data_.rho; }
  double gamma() const { return data_.gamma; }
  double eps() const { return data_.eps; }
  const Matrix& sigma0_cov() const { return data_.sigma0_cov; }

  const ModelData& data() const { return data_; }

  // Copies with one scalar replaced; the result is re-validated.
  MjlsModel with_gamma(double gamma) const {
    ModelData d = data_;
    d.gamma = gamma;
    return validate_model(std::move(d));
  }
  MjlsModel with_eps(double eps) const {
    ModelData d = data_;
    d.eps = eps;
    return validate_model(std::move(d));
  }
  MjlsModel with_sigma0_cov(Matrix cov) const {
    ModelData d = data_;
    d.sigma0_cov = std::move(cov);
    return validate_model(std::move(d));
  }

 private:
  explicit MjlsModel(ModelData data) : data_(std::move(data)) {}
  friend MjlsModel validate_model(ModelData raw);

  ModelData data_;
};

// Per-mode feedback gains K_i (k x d) and exploration level sigma. The policy
// is u_t ~ N(-K_{w_t} x_t, sigma^2 I).
struct GainPolicy {
  std::vector<Matrix> gains;
  double sigma = 0.0;

  static GainPolicy zeros(int n_modes, int input_dim, int state_dim,
                          double sigma = 0.0) {
    return {std::vector<Matrix>(n_modes, Matrix::Zero(input_dim, state_dim)),
            sigma};
  }
  static GainPolicy zeros(const MjlsModel& model, double sigma = 0.0) {
    return zeros(model.n_modes(), model.input_dim(), model.state_dim(), sigma);
  }

  int n_modes() const { return static_cast<int>(gains.size()); }

  // K_hat = [K_1 ... K_{n_s}], k x (n_s * d).
  Matrix concatenated() const {
    if (gains.empty()) return {};
    const Eigen::Index k = gains.front().rows();
    const Eigen::Index d = gains.front().cols();
    Matrix out(k, d * static_cast<Eigen::Index>(gains.size()));
    for (std::size_t i = 0; i < gains.size(); ++i) {
      out.middleCols(static_cast<Eigen::Index>(i) * d, d) = gains[i];
    }
    return out;
  }

  static GainPolicy from_concatenated(const Matrix& k_hat, int n_modes,
                                      double sigma) {
    if (n_modes <= 0 || k_hat.cols() % n_modes != 0) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "concatenated gain has " + std::to_string(k_hat.cols()) +
                      " columns, not a multiple of n_modes=" +
                      std::to_string(n_modes));
    }
    const Eigen::Index d = k_hat.cols() / n_modes;
    GainPolicy p;
    p.sigma = sigma;
    for (int i = 0; i < n_modes; ++i) {
      p.gains.push_back(k_hat.middleCols(i * d, d));
    }
    return p;
  }
};

// Sparsity pattern for structured gains: 1 marks a free entry, 0 an entry
// forced to zero.
struct StructureMask {
  std::vector<Matrix> mask;

  static StructureMask full(int n_modes, int input_dim, int state_dim) {
    return {std::vector<Matrix>(n_modes, Matrix::Ones(input_dim, state_dim))};
  }

  // Same k x d pattern for every mode.
  static StructureMask uniform(int n_modes, const Matrix& pattern) {
    return {std::vector<Matrix>(n_modes, pattern)};
  }

  Matrix concatenated() const {
    return GainPolicy{mask, 0.0}.concatenated();
  }

  // Gains with every masked entry zeroed.
  GainPolicy apply(const GainPolicy& policy) const {
    GainPolicy out = policy;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      out.gains[i] = policy.gains[i].cwiseProduct(mask[i]);
    }
    return out;
  }
};

namespace detail {

inline bool is_finite(const Matrix& m) { return m.allFinite(); }

inline double min_symmetric_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double symmetry_error(const Matrix& m) {
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

}  // namespace detail

// Checks every model invariant and returns the validated model, or throws a
// ValidationError listing all violations. An empty sigma0_cov is replaced by
// the identity.
inline MjlsModel validate_model(ModelData raw) {
  std::vector<Violation> bad;
  auto fail = [&bad](ErrorCode code, std::string field, int index,
                     std::string detail) {
    bad.push_back({code, std::move(field), index, std::move(detail)});
  };
  constexpr double kStochTol = 1e-12;
  constexpr double kSymTol = 1e-12;

  const int ns = static_cast<int>(raw.A.size());
  if (ns == 0) {
    fail(ErrorCode::kDimensionMismatch, "A", -1, "no modes");
    throw ValidationError(std::move(bad));
  }
  auto check_count = [&](const std::vector<Matrix>& v, const char* name) {
    if (static_cast<int>(v.size()) != ns) {
      fail(ErrorCode::kDimensionMismatch, name, -1,
           "expected " + std::to_string(ns) + " modes, got " +
               std::to_string(v.size()));
      return false;
    }
    return true;
  };
  const bool counts_ok = check_count(raw.B, "B") & check_count(raw.Q, "Q") &
                         check_count(raw.R, "R");
  if (!counts_ok) throw ValidationError(std::move(bad));

  const Eigen::Index d = raw.A[0].rows();
  const Eigen::Index k = raw.B[0].cols();
  if (d == 0 || k == 0) {
    fail(ErrorCode::kDimensionMismatch, d == 0 ? "A" : "B", 0,
         "zero dimension");
    throw ValidationError(std::move(bad));
  }
  bool shapes_ok = true;
  for (int i = 0; i < ns; ++i) {
    auto shape = [&](const Matrix& m, Eigen::Index r, Eigen::Index c,
                     const char* name) {
      if (m.rows() != r || m.cols() != c) {
        fail(ErrorCode::kDimensionMismatch, name, i,
             "expected " + std::to_string(r) + "x" + std::to_string(c) +
                 ", got " + std::to_string(m.rows()) + "x" +
                 std::to_string(m.cols()));
        shapes_ok = false;
      } else if (!m.allFinite()) {
        fail(ErrorCode::kInvalidArgument, name, i, "non-finite entry");
        shapes_ok = false;
      }
    };
    shape(raw.A[i], d, d, "A");
    shape(raw.B[i], d, k, "B");
    shape(raw.Q[i], d, d, "Q");
    shape(raw.R[i], k, k, "R");
  }
  if (raw.trans.rows() != ns || raw.trans.cols() != ns) {
    fail(ErrorCode::kDimensionMismatch, "trans", -1,
         "expected " + std::to_string(ns) + "x" + std::to_string(ns));
    shapes_ok = false;
  }
  if (raw.rho.size() != ns) {
    fail(ErrorCode::kDimensionMismatch, "rho", -1,
         "expected length " + std::to_string(ns));
    shapes_ok = false;
  }
  if (raw.sigma0_cov.size() == 0) raw.sigma0_cov = Matrix::Identity(d, d);
  if (raw.sigma0_cov.rows() != d || raw.sigma0_cov.cols() != d) {
    fail(ErrorCode::kDimensionMismatch, "sigma0_cov", -1,
         "expected " + std::to_string(d) + "x" + std::to_string(d));
    shapes_ok = false;
  }
  if (!shapes_ok) throw ValidationError(std::move(bad));

  for (int i = 0; i < ns; ++i) {
    const double row_sum = raw.trans.row(i).sum();
    if (raw.trans.row(i).minCoeff() < 0.0 ||
        std::abs(row_sum - 1.0) > kStochTol) {
      fail(ErrorCode::kNotStochastic, "trans", i,
           "row sum " + std::to_string(row_sum));
    }
  }
  if (raw.rho.minCoeff() < 0.0 || std::abs(raw.rho.sum() - 1.0) > kStochTol) {
    fail(ErrorCode::kNotStochastic, "rho", -1,
         "sum " + std::to_string(raw.rho.sum()));
  }
  auto check_pd = [&](const Matrix& m, const char* name, int i) {
    if (detail::symmetry_error(m) > kSymTol) {
      fail(ErrorCode::kNotPositiveDefinite, name, i, "not symmetric");
    } else if (detail::min_symmetric_eigenvalue(m) <= 0.0) {
      fail(ErrorCode::kNotPositiveDefinite, name, i,
           "minimum eigenvalue <= 0");
    }
  };
  for (int i = 0; i < ns; ++i) {
    check_pd(raw.Q[i], "Q", i);
    check_pd(raw.R[i], "R", i);
  }
  if (!(raw.gamma > 0.0 && raw.gamma < 1.0)) {
    fail(ErrorCode::kBadDiscount, "gamma", -1,
         "gamma=" + std::to_string(raw.gamma) + " not in (0,1)");
  }
  if (!(raw.eps >= 0.0) || !std::isfinite(raw.eps)) {
    fail(ErrorCode::kInvalidArgument, "eps", -1, "must be >= 0");
  }
  if (detail::symmetry_error(raw.sigma0_cov) > kSymTol ||
      detail::min_symmetric_eigenvalue(raw.sigma0_cov) < -1e-12) {
    fail(ErrorCode::kNotPositiveDefinite, "sigma0_cov", -1,
         "must be symmetric positive semidefinite");
  }
  if (!bad.empty()) throw ValidationError(std::move(bad));
  return MjlsModel(std::move(raw));
}

// Throws DimensionMismatch unless the policy has one k x d gain per mode and
// a valid sigma.
inline void check_policy(const MjlsModel& model, const GainPolicy& policy) {
  if (policy.n_modes() != model.n_modes()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "policy has " + std::to_string(policy.n_modes()) +
                    " gains, model has " + std::to_string(model.n_modes()) +
                    " modes");
  }
  for (int i = 0; i < model.n_modes(); ++i) {
    const Matrix& g = policy.gains[i];
    if (g.rows() != model.input_dim() || g.cols() != model.state_dim()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "gain[" + std::to_string(i) + "] is " +
                      std::to_string(g.rows()) + "x" +
                      std::to_string(g.cols()) + ", expected " +
                      std::to_string(model.input_dim()) + "x" +
                      std::to_string(model.state_dim()));
    }
  }
  if (!(policy.sigma >= 0.0) || !std::isfinite(policy.sigma)) {
    throw Error(ErrorCode::kInvalidArgument, "sigma must be >= 0");
  }
}

inline void check_mask(const MjlsModel& model, const StructureMask& mask) {
  if (static_cast<int>(mask.mask.size()) != model.n_modes()) {
    throw Error(ErrorCode::kDimensionMismatch, "mask mode count");
  }
  for (int i = 0; i < model.n_modes(); ++i) {
    const Matrix& m = mask.mask[i];
    if (m.rows() != model.input_dim() || m.cols() != model.state_dim()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "mask[" + std::to_string(i) + "] shape");
    }
    if (((m.array() != 0.0) && (m.array() != 1.0)).any()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "mask[" + std::to_string(i) + "] is not binary");
    }
  }
}

// Closed-loop matrices A_i - B_i K_i.
inline std::vector<Matrix> closed_loop_matrices(const MjlsModel& model,
                                                const GainPolicy& policy) {
  std::vector<Matrix> out;
  out.reserve(model.n_modes());
  for (int i = 0; i < model.n_modes(); ++i) {
    out.push_back(model.A(i) - model.B(i) * policy.gains[i]);
  }
  return out;
}

// E_i(P) = sum_j p_ij P_j.
inline Matrix expected_next(const MjlsModel& model,
                            const std::vector<Matrix>& P, int i) {
  Matrix e = Matrix::Zero(P.front().rows(), P.front().cols());
  for (int j = 0; j < model.n_modes(); ++j) {
    const double p = model.trans()(i, j);
    if (p != 0.0) e += p * P[j];
  }
  return e;
}

inline std::vector<Matrix> expected_next_all(const MjlsModel& model,
                                             const std::vector<Matrix>& P) {
  std::vector<Matrix> out;
  out.reserve(model.n_modes());
  for (int i = 0; i < model.n_modes(); ++i) {
    out.push_back(expected_next(model, P, i));
  }
  return out;
}

// Mean-square propagation of the gamma-scaled, noiseless closed loop acting on
// stacked column-major vec(X_i). Block (j, i), of size d^2 x d^2, equals
// gamma * p_ij * (A_i - B_i K_i) (x) (A_i - B_i K_i).
inline Matrix closed_loop_operator(const MjlsModel& model,
                                   const GainPolicy& policy) {
  check_policy(model, policy);
  const int ns = model.n_modes();
  const Eigen::Index d2 =
      static_cast<Eigen::Index>(model.state_dim()) * model.state_dim();
  Matrix T = Matrix::Zero(ns * d2, ns * d2);
  const auto closed = closed_loop_matrices(model, policy);
  for (int i = 0; i < ns; ++i) {
    const Matrix kron = Eigen::kroneckerProduct(closed[i], closed[i]).eval();
    for (int j = 0; j < ns; ++j) {
      const double p = model.trans()(i, j);
      if (p != 0.0) T.block(j * d2, i * d2, d2, d2) = model.gamma() * p * kron;
    }
  }
  return T;
}

inline double spectral_radius(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::kNoConvergence, "eigenvalue solver failed");
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

struct StabilityReport {
  bool stable = false;
  double spectral_radius = 0.0;
};

// Margin applied to the strict inequality rho(T) < 1.
inline constexpr double kStabilityTol = 1e-9;

// Membership test for the feasible set: the sqrt(gamma)-scaled closed loop is
// mean-square stable iff the lifted operator has spectral radius below one.
inline StabilityReport is_ms_stabilizing(const MjlsModel& model,
                                         const GainPolicy& policy) {
  const double r = spectral_radius(closed_loop_operator(model, policy));
  return {r < 1.0 - kStabilityTol, r};
}

// Mode marginals q(0..horizon) with q(0) = rho and q(t+1) = trans^T q(t).
inline std::vector<Vector> mode_marginals(const MjlsModel& model,
                                          int horizon) {
  if (horizon < 0) {
    throw Error(ErrorCode::kInvalidArgument, "horizon must be >= 0");
  }
  std::vector<Vector> q;
  q.reserve(static_cast<std::size_t>(horizon) + 1);
  q.push_back(model.rho());
  const Matrix trans_t = model.trans().transpose();
  for (int t = 0; t < horizon; ++t) q.push_back(trans_t * q.back());
  return q;
}

// Stationary distribution of the mode chain (left Perron vector of trans).
inline Vector stationary_distribution(const MjlsModel& model) {
  const int ns = model.n_modes();
  Matrix system = model.trans().transpose() - Matrix::Identity(ns, ns);
  system.row(ns - 1).setOnes();
  Vector rhs = Vector::Zero(ns);
  rhs(ns - 1) = 1.0;
  return system.fullPivLu().solve(rhs);
}

}  // namespace mjls
