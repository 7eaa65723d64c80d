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

// Random benchmark models: per-mode stable dynamics and Dirichlet transition
// rows.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>

#include "mjls/core.hpp"
#include "mjls/random.hpp"

namespace mjls {

struct GenSpec {
  int n_modes = 10;
  int state_dim = 10;
  int input_dim = 3;
  double spectral_cap = 0.95;
  // Dirichlet parameters, row i for transition row i. Empty means 99 I + 1.
  Matrix concentration;
  std::uint64_t seed = 0;
  double gamma = 0.99;
  double eps = 0.0;
  int max_retries = 100;

  Matrix concentration_or_default() const {
    if (concentration.size() != 0) return concentration;
    Matrix c = Matrix::Ones(n_modes, n_modes);
    c.diagonal().array() += 99.0;
    return c;
  }

  void validate() const {
    if (n_modes < 1 || state_dim < 1 || input_dim < 1) {
      throw Error(ErrorCode::kInvalidArgument, "dimensions must be positive");
    }
    if (!(spectral_cap > 0.0 && spectral_cap < 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "spectral_cap must be in (0,1)");
    }
    const Matrix c = concentration_or_default();
    if (c.rows() != n_modes || c.cols() != n_modes) {
      throw Error(ErrorCode::kDimensionMismatch, "concentration shape");
    }
    if (!(c.minCoeff() > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "concentration entries must be > 0");
    }
  }
};

// A_i: Gaussian matrix rescaled to a spectral radius drawn uniformly from
// [0.2, spectral_cap]. B_i: Gaussian entries scaled by 1/sqrt(d).
inline std::pair<Matrix, Matrix> gen_stable_mode(const GenSpec& spec,
                                                 RandomStream& stream) {
  const int d = spec.state_dim, k = spec.input_dim;
  Matrix a(d, d), b(d, k);
  double radius = 0.0;
  do {
    stream.fill_normal(a);
    radius = spectral_radius(a);
  } while (!(radius > 1e-12));
  const double target = 0.2 + (spec.spectral_cap - 0.2) * stream.uniform();
  a *= target / radius;
  stream.fill_normal(b);
  b /= std::sqrt(static_cast<double>(d));
  return {std::move(a), std::move(b)};
}

// Row i ~ Dirichlet(concentration.row(i)) via normalized Gamma draws.
inline Matrix gen_transition(const GenSpec& spec, RandomStream& stream) {
  const Matrix c = spec.concentration_or_default();
  const int n = spec.n_modes;
  Matrix p(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      // Dirichlet draws are a.s. positive; keep them so in floating point.
      p(i, j) = std::max(stream.gamma(c(i, j)), 1e-300);
    }
    p.row(i) /= p.row(i).sum();
    // Push the rounding residue onto the largest entry so the row sums to 1.
    Eigen::Index arg;
    p.row(i).maxCoeff(&arg);
    p(i, arg) += 1.0 - p.row(i).sum();
  }
  return p;
}

// Full model with Q_i = I, R_i = I, uniform rho and Sigma0 = I. Candidates are
// resampled until the zero policy mean-square stabilizes the scaled system.
inline MjlsModel generate_model(const GenSpec& spec) {
  spec.validate();
  RandomStream stream(derive_seed(spec.seed, 0x6e6ULL));
  for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
    ModelData m;
    for (int i = 0; i < spec.n_modes; ++i) {
      auto [a, b] = gen_stable_mode(spec, stream);
      m.A.push_back(std::move(a));
      m.B.push_back(std::move(b));
      m.Q.push_back(Matrix::Identity(spec.state_dim, spec.state_dim));
      m.R.push_back(Matrix::Identity(spec.input_dim, spec.input_dim));
    }
    m.trans = gen_transition(spec, stream);
    m.rho = Vector::Constant(spec.n_modes, 1.0 / spec.n_modes);
    m.gamma = spec.gamma;
    m.eps = spec.eps;
    m.sigma0_cov = Matrix::Identity(spec.state_dim, spec.state_dim);
    MjlsModel model = validate_model(std::move(m));
    if (is_ms_stabilizing(model, GainPolicy::zeros(model)).stable) return model;
  }
  throw Error(ErrorCode::kNoConvergence,
              "no mean-square stable model after " +
                  std::to_string(spec.max_retries) + " attempts");
}

}  // namespace mjls
