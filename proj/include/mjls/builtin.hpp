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

// Published benchmark systems.

#pragma once

#include <string>
#include <string_view>

#include "mjls/core.hpp"

namespace mjls::builtin {

// Both benchmarks draw x0 uniformly from [-1/2, 1/2]^d, whose covariance is
// I/12; the published costs are reproduced with this Sigma0 and gamma = 0.99.
inline constexpr double kDiscount = 0.99;
inline constexpr double kUniformVariance = 1.0 / 12.0;

// Two-mode, three-state, single-input system whose modes are not individually
// stabilizable but whose switched system is.
inline MjlsModel small441() {
  ModelData m;
  Matrix a1(3, 3), a2(3, 3), b1(3, 1), b2(3, 1);
  a1 << 0.4, 0.6, -0.1,
        -0.4, -0.6, 0.3,
        0.0, 0.0, 1.0;
  a2 << 0.9, 0.5, -0.1,
        0.0, 1.0, 0.0,
        -0.1, 0.5, -0.4;
  b1 << 1.0, 1.0, 0.0;
  b2 << 1.0, 0.0, 1.0;
  m.A = {a1, a2};
  m.B = {b1, b2};
  m.Q = {Matrix::Identity(3, 3), 2.0 * Matrix::Identity(3, 3)};
  m.R = {Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 2.0)};
  m.trans.resize(2, 2);
  m.trans << 0.7, 0.3,
             0.4, 0.6;
  m.rho = Vector::Constant(2, 0.5);
  m.gamma = kDiscount;
  m.eps = 0.0;
  m.sigma0_cov = kUniformVariance * Matrix::Identity(3, 3);
  return validate_model(std::move(m));
}

// Two-mode, two-state, two-input system used for structured control.
inline MjlsModel structured443() {
  ModelData m;
  Matrix a1(2, 2), a2(2, 2), b(2, 2), q(2, 2);
  a1 << -0.4, 1.0,
        0.0, 0.9;
  a2 << 0.0, 1.0,
        -0.4, 0.9;
  b << 1.0, 0.5,
       0.0, 2.0;
  q << 10.0, 0.0,
       0.0, 20.0;
  m.A = {a1, a2};
  m.B = {b, b};
  m.Q = {q, q};
  m.R = {Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
  m.trans.resize(2, 2);
  m.trans << 0.8, 0.2,
             0.3, 0.7;
  m.rho = Vector::Constant(2, 0.5);
  m.gamma = kDiscount;
  m.eps = 0.0;
  m.sigma0_cov = kUniformVariance * Matrix::Identity(2, 2);
  return validate_model(std::move(m));
}

// Only the first state is measured: K_i = [* 0; * 0].
inline StructureMask first_state_mask() {
  Matrix pattern(2, 2);
  pattern << 1.0, 0.0,
             1.0, 0.0;
  return StructureMask::uniform(2, pattern);
}

// Resolves "small441" / "structured443" (with or without a "builtin:" prefix).
inline MjlsModel by_name(std::string_view name) {
  constexpr std::string_view kPrefix = "builtin:";
  if (name.substr(0, kPrefix.size()) == kPrefix) name.remove_prefix(kPrefix.size());
  if (name == "small441") return small441();
  if (name == "structured443") return structured443();
  throw Error(ErrorCode::kInvalidArgument,
              "unknown builtin model '" + std::string(name) + "'");
}

}  // namespace mjls::builtin
