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

// Serialization: the "mjls-v1" JSON model schema, policies, learning traces.

#pragma once

#include <nlohmann/json.hpp>

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mjls/core.hpp"
#include "mjls/grad.hpp"
#include "mjls/learner.hpp"

namespace mjls::io {

using nlohmann::json;

inline constexpr const char* kSchema = "mjls-v1";

// Row-major nested arrays.
inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) {
    throw Error(ErrorCode::kParseError, field + ": expected nested array");
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Matrix(0, 0);
  const auto cols = static_cast<Eigen::Index>(j.at(0).size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j.at(r);
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw Error(ErrorCode::kParseError, field + ": ragged matrix");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row.at(c).is_number()) {
        throw Error(ErrorCode::kParseError, field + ": non-numeric entry");
      }
      m(r, c) = row.at(c).get<double>();
    }
  }
  return m;
}

inline json vector_to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Vector vector_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw Error(ErrorCode::kParseError, field + ": expected array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw Error(ErrorCode::kParseError, field + ": non-numeric entry");
    }
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline json matrices_to_json(const std::vector<Matrix>& ms) {
  json a = json::array();
  for (const auto& m : ms) a.push_back(matrix_to_json(m));
  return a;
}

inline std::vector<Matrix> matrices_from_json(const json& j,
                                              const std::string& field) {
  if (!j.is_array()) throw Error(ErrorCode::kParseError, field + ": expected array");
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(matrix_from_json(j[i], field + "[" + std::to_string(i) + "]"));
  }
  return out;
}

inline json model_to_json(const MjlsModel& model) {
  return {
      {"schema", kSchema},
      {"n_modes", model.n_modes()},
      {"state_dim", model.state_dim()},
      {"input_dim", model.input_dim()},
      {"A", matrices_to_json(model.data().A)},
      {"B", matrices_to_json(model.data().B)},
      {"Q", matrices_to_json(model.data().Q)},
      {"R", matrices_to_json(model.data().R)},
      {"trans", matrix_to_json(model.trans())},
      {"rho", vector_to_json(model.rho())},
      {"gamma", model.gamma()},
      {"eps", model.eps()},
      {"sigma0_cov", matrix_to_json(model.sigma0_cov())},
  };
}

inline MjlsModel model_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kParseError, "model must be an object");
  if (!j.contains("schema") || j.at("schema") != kSchema) {
    throw Error(ErrorCode::kParseError,
                std::string("missing or unsupported schema (expected ") + kSchema + ")");
  }
  for (const char* key : {"n_modes", "state_dim", "input_dim", "A", "B", "Q",
                          "R", "trans", "rho", "gamma"}) {
    if (!j.contains(key)) {
      throw Error(ErrorCode::kParseError, std::string("missing key '") + key + "'");
    }
  }
  ModelData m;
  m.A = matrices_from_json(j.at("A"), "A");
  m.B = matrices_from_json(j.at("B"), "B");
  m.Q = matrices_from_json(j.at("Q"), "Q");
  m.R = matrices_from_json(j.at("R"), "R");
  m.trans = matrix_from_json(j.at("trans"), "trans");
  m.rho = vector_from_json(j.at("rho"), "rho");
  m.gamma = j.at("gamma").get<double>();
  m.eps = j.value("eps", 0.0);
  if (j.contains("sigma0_cov")) m.sigma0_cov = matrix_from_json(j.at("sigma0_cov"), "sigma0_cov");
  const int ns = j.at("n_modes").get<int>();
  const int d = j.at("state_dim").get<int>();
  const int k = j.at("input_dim").get<int>();
  if (static_cast<int>(m.A.size()) != ns ||
      (!m.A.empty() && (m.A[0].rows() != d || m.B[0].cols() != k))) {
    throw Error(ErrorCode::kDimensionMismatch,
                "declared n_modes/state_dim/input_dim disagree with matrices");
  }
  return validate_model(std::move(m));
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kParseError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + path);
  out << content;
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, what + ": " + e.what());
  }
}

inline MjlsModel load_model(const std::string& path) {
  return model_from_json(parse_json(read_file(path), path));
}

inline void save_model(const std::string& path, const MjlsModel& model) {
  write_file(path, model_to_json(model).dump(2) + "\n");
}

inline json policy_to_json(const GainPolicy& policy) {
  return {{"gains", matrices_to_json(policy.gains)}, {"sigma", policy.sigma}};
}

inline GainPolicy policy_from_json(const json& j) {
  if (!j.is_object() || !j.contains("gains")) {
    throw Error(ErrorCode::kParseError, "policy needs a 'gains' array");
  }
  return {matrices_from_json(j.at("gains"), "gains"), j.value("sigma", 0.0)};
}

inline json mask_to_json(const StructureMask& mask) {
  return {{"mask", matrices_to_json(mask.mask)}};
}

inline StructureMask mask_from_json(const json& j) {
  const json& m = j.is_object() ? j.at("mask") : j;
  return {matrices_from_json(m, "mask")};
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// CSV columns: iteration, sigma, cost, relative_error_pct, grad_norm, diverged.
// Unscored iterations leave cost and relative_error_pct empty.
inline void write_trace_csv(std::ostream& os, const LearningTrace& trace) {
  os << "iteration,sigma,cost,relative_error_pct,grad_norm,diverged\n";
  for (const auto& r : trace.records) {
    os << r.iteration << ',' << format_double(r.sigma) << ','
       << (r.cost ? format_double(*r.cost) : std::string()) << ','
       << (r.relative_error_pct ? format_double(*r.relative_error_pct) : std::string())
       << ',' << format_double(r.grad_norm) << ',' << r.diverged << '\n';
  }
}

inline json trace_to_json(const LearningTrace& trace) {
  json records = json::array();
  for (const auto& r : trace.records) {
    json rec = {{"iteration", r.iteration},
                {"sigma", r.sigma},
                {"grad_norm", r.grad_norm},
                {"diverged", r.diverged},
                {"wall_time", r.wall_time},
                {"feasible", r.feasible},
                {"gains", matrices_to_json(r.policy.gains)}};
    rec["cost"] = r.cost ? json(*r.cost) : json(nullptr);
    rec["relative_error_pct"] =
        r.relative_error_pct ? json(*r.relative_error_pct) : json(nullptr);
    records.push_back(std::move(rec));
  }
  json out = {{"records", records}, {"aborted", trace.aborted}};
  if (trace.optimal_cost) out["optimal_cost"] = *trace.optimal_cost;
  if (trace.aborted) out["abort_reason"] = trace.abort_reason;
  return out;
}

// CSV columns: iteration, mean_rel_err_pct, p10, p90 (plus p50 and count).
inline void write_ensemble_csv(std::ostream& os,
                               const std::vector<EnsembleRow>& rows) {
  os << "iteration,mean_rel_err_pct,p10,p90,p50,count\n";
  for (const auto& r : rows) {
    os << r.iteration << ',' << format_double(r.mean_rel_err_pct) << ','
       << format_double(r.p10) << ',' << format_double(r.p90) << ','
       << format_double(r.p50) << ',' << r.count << '\n';
  }
}

inline json certificate_to_json(const ConvergenceCertificate& c) {
  return {{"eta_tilde_max", c.eta_tilde_max}, {"contraction", c.contraction},
          {"mu", c.mu},                       {"chi_star_norm", c.chi_star_norm},
          {"sigma_min_R", c.sigma_min_R},     {"norm_R", c.norm_R},
          {"norm_B", c.norm_B},               {"initial_cost", c.initial_cost},
          {"optimal_cost", c.optimal_cost}};
}

}  // namespace mjls::io
