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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mjls {

enum class ErrorCode {
  kDimensionMismatch,
  kNotStochastic,
  kNotPositiveDefinite,
  kBadDiscount,
  kInvalidArgument,
  kNoConvergence,
  kNotStabilizing,
  kSingularMatrix,
  kSingularChi,
  kZeroSigma,
  kDegenerateInit,
  kAllDiverged,
  kParseError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNotStochastic: return "NotStochastic";
    case ErrorCode::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::kBadDiscount: return "BadDiscount";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kNotStabilizing: return "NotStabilizing";
    case ErrorCode::kSingularMatrix: return "SingularMatrix";
    case ErrorCode::kSingularChi: return "SingularChi";
    case ErrorCode::kZeroSigma: return "ZeroSigma";
    case ErrorCode::kDegenerateInit: return "DegenerateInit";
    case ErrorCode::kAllDiverged: return "AllDiverged";
    case ErrorCode::kParseError: return "ParseError";
  }
  return "Unknown";
}

// Base exception for every failure raised by the library. The code lets
// callers (the CLI in particular) map failures onto exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// One violated model invariant. `index` is the mode index (or -1 when the
// field is not per-mode).
struct Violation {
  ErrorCode code;
  std::string field;
  int index = -1;
  std::string detail;
};

// Thrown by validate_model with every violated invariant, not just the first.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<Violation> violations)
      : Error(violations.empty() ? ErrorCode::kInvalidArgument
                                 : violations.front().code,
              describe(violations)),
        violations_(std::move(violations)) {}

  const std::vector<Violation>& violations() const noexcept {
    return violations_;
  }

  bool has(ErrorCode code) const {
    for (const auto& v : violations_) {
      if (v.code == code) return true;
    }
    return false;
  }

 private:
  static std::string describe(const std::vector<Violation>& violations) {
    std::string out;
    for (const auto& v : violations) {
      if (!out.empty()) out += "; ";
      out += std::string(to_string(v.code)) + " in " + v.field;
      if (v.index >= 0) out += "[" + std::to_string(v.index) + "]";
      if (!v.detail.empty()) out += " (" + v.detail + ")";
    }
    return out;
  }

  std::vector<Violation> violations_;
};

}  // namespace mjls
