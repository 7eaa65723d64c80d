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

// Experiment commands behind the mjls command-line tool. Each command takes an
// ExperimentConfig, writes its artifacts under `out` and returns a JSON
// summary plus a process exit code.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <exception>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mjls/io.hpp"
#include "mjls/mjls.hpp"

namespace mjls::cli {

using nlohmann::json;

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitSolverFailure = 2,
  kExitLearningCollapse = 3,
};

inline int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kNoConvergence:
      return kExitSolverFailure;
    case ErrorCode::kAllDiverged:
      return kExitLearningCollapse;
    default:
      return kExitUsage;
  }
}

struct ExperimentConfig {
  // builtin:small441 | builtin:structured443 | gen:modes=..,dim=..,... | path
  std::string model = "builtin:small441";
  std::optional<double> gamma;
  std::optional<double> eps;
  std::uint64_t seed = 0;
  std::string out;  // file for single-artifact commands, directory otherwise
  LearnerConfig learner;
  int reps = 1;
  int threads = 1;
  std::string mask;    // "", "full", "first-state" or a JSON file
  std::string policy;  // JSON policy file; default K = 0
  std::optional<double> sigma;
  std::optional<double> eta_tilde;  // npg-exact; default: certified bound
  int bench_trajectories = 200;
};

struct CommandResult {
  json summary;
  int exit_code = kExitOk;
};

// "modes=10,dim=10,inputs=3,seed=3" (any subset, in any order).
inline GenSpec parse_gen_spec(const std::string& text) {
  GenSpec spec;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "generator field '" + item + "' needs '='");
    }
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    try {
      if (key == "modes") spec.n_modes = std::stoi(value);
      else if (key == "dim") spec.state_dim = std::stoi(value);
      else if (key == "inputs") spec.input_dim = std::stoi(value);
      else if (key == "seed") spec.seed = std::stoull(value);
      else if (key == "cap") spec.spectral_cap = std::stod(value);
      else if (key == "gamma") spec.gamma = std::stod(value);
      else throw Error(ErrorCode::kInvalidArgument, "unknown generator field '" + key + "'");
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kInvalidArgument, "bad value in '" + item + "'");
    }
  }
  spec.validate();
  return spec;
}

inline MjlsModel resolve_model(const ExperimentConfig& cfg) {
  const std::string& src = cfg.model;
  MjlsModel model = [&] {
    if (src.rfind("builtin:", 0) == 0) return builtin::by_name(src);
    if (src.rfind("gen:", 0) == 0) {
      GenSpec spec = parse_gen_spec(src.substr(4));
      if (cfg.gamma) spec.gamma = *cfg.gamma;
      return generate_model(spec);
    }
    return io::load_model(src);
  }();
  if (cfg.gamma) model = model.with_gamma(*cfg.gamma);
  if (cfg.eps) model = model.with_eps(*cfg.eps);
  return model;
}

inline std::optional<StructureMask> resolve_mask(const ExperimentConfig& cfg,
                                                 const MjlsModel& model) {
  if (cfg.mask.empty()) return std::nullopt;
  StructureMask mask;
  if (cfg.mask == "full") {
    mask = StructureMask::full(model.n_modes(), model.input_dim(), model.state_dim());
  } else if (cfg.mask == "first-state") {
    Matrix pattern = Matrix::Zero(model.input_dim(), model.state_dim());
    pattern.col(0).setOnes();
    mask = StructureMask::uniform(model.n_modes(), pattern);
  } else {
    mask = io::mask_from_json(io::parse_json(io::read_file(cfg.mask), cfg.mask));
  }
  check_mask(model, mask);
  return mask;
}

inline GainPolicy resolve_policy(const ExperimentConfig& cfg,
                                 const MjlsModel& model) {
  GainPolicy policy =
      cfg.policy.empty()
          ? GainPolicy::zeros(model)
          : io::policy_from_json(io::parse_json(io::read_file(cfg.policy), cfg.policy));
  if (cfg.sigma) policy.sigma = *cfg.sigma;
  check_policy(model, policy);
  return policy;
}

namespace detail {

inline void emit_json(const std::string& path, const json& j) {
  if (!path.empty()) io::write_file(path, j.dump(2) + "\n");
}

inline std::filesystem::path ensure_dir(const std::string& out) {
  const std::filesystem::path dir = out.empty() ? std::filesystem::path(".") : std::filesystem::path(out);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string rep_name(const char* stem, int rep, const char* ext) {
  std::ostringstream os;
  os << stem << '_' << std::setw(3) << std::setfill('0') << rep << ext;
  return os.str();
}

inline json learner_to_json(const LearnerConfig& c) {
  json j = {{"steps", c.steps},
            {"eta", c.eta},
            {"sigma0", c.sigma0},
            {"sigma_decay", c.sigma_decay},
            {"N", c.N},
            {"T_F", c.horizon},
            {"seed", c.seed},
            {"gamma", c.gamma},
            {"mode", c.mode == LearnMode::kNpg ? "npg" : "structured_gd"}};
  if (c.structured_step) j["structured_step"] = *c.structured_step;
  return j;
}

}  // namespace detail

// Coupled Riccati solution, optimal gains, optimal cost and stationarity.
inline CommandResult cmd_solve(const ExperimentConfig& cfg) {
  const MjlsModel model = resolve_model(cfg);
  const CoupledValue value = solve_coupled_are(model);
  const GainPolicy gains = optimal_gains(model, value);
  const double cost = evaluate_cost(model, gains);
  double stationarity = 0.0;
  for (const Matrix& L : gain_kernels(model, gains)) {
    stationarity = std::max(stationarity, L.norm());
  }
  CommandResult r;
  r.summary = {{"P", io::matrices_to_json(value.P)},
               {"K", io::matrices_to_json(gains.gains)},
               {"optimal_cost", cost},
               {"iterations", value.iterations},
               {"residual", value.residual},
               {"stationarity", stationarity}};
  detail::emit_json(cfg.out, r.summary);
  return r;
}

// Policy evaluation: stability, value matrices and cost of a policy.
inline CommandResult cmd_eval(const ExperimentConfig& cfg) {
  const MjlsModel model = resolve_model(cfg);
  const GainPolicy policy = resolve_policy(cfg, model);
  const StabilityReport stability = is_ms_stabilizing(model, policy);
  CommandResult r;
  r.summary = {{"stable", stability.stable},
               {"spectral_radius", stability.spectral_radius},
               {"sigma", policy.sigma}};
  if (stability.stable) {
    const PolicyEvaluation ev = evaluate_policy(model, policy);
    r.summary["cost"] = ev.cost;
    r.summary["P"] = io::matrices_to_json(ev.value.P);
  } else {
    r.summary["cost"] = nullptr;
  }
  detail::emit_json(cfg.out, r.summary);
  return r;
}

// Exact gradient, kernels L_i and chi blocks of a policy.
inline CommandResult cmd_grad(const ExperimentConfig& cfg) {
  const MjlsModel model = resolve_model(cfg);
  const GainPolicy policy = resolve_policy(cfg, model);
  const ExactGradient g = exact_gradient(model, policy);
  CommandResult r;
  r.summary = {{"grad_K", io::matrix_to_json(g.grad_K)},
               {"grad_sigma", g.grad_sigma},
               {"L", io::matrices_to_json(g.L)},
               {"chi", io::matrices_to_json(g.chi_blocks)},
               {"feasible_step_bound", feasible_step_bound(model, policy)}};
  detail::emit_json(cfg.out, r.summary);
  return r;
}

// Model-based NPG from the configured policy with a constant scaled step.
inline CommandResult cmd_npg_exact(const ExperimentConfig& cfg) {
  const MjlsModel model = resolve_model(cfg);
  GainPolicy initial = resolve_policy(cfg, model);
  const ConvergenceCertificate cert = certify_convergence(model, initial);
  const double eta_tilde = cfg.eta_tilde ? *cfg.eta_tilde : cert.eta_tilde_max;
  const NpgTrace trace =
      run_model_based_npg(model, initial, cfg.learner.steps, eta_tilde);
  bool all_ok = true;
  for (bool ok : trace.contraction_ok) all_ok = all_ok && ok;

  CommandResult r;
  r.summary = {{"certificate", io::certificate_to_json(cert)},
               {"eta_tilde", eta_tilde},
               {"contraction", trace.contraction},
               {"above_certified_bound", trace.above_certified_bound},
               {"contraction_held", all_ok},
               {"final_cost", trace.costs.back()},
               {"final_gap", trace.gaps.back()},
               {"K", io::matrices_to_json(trace.policies.back().gains)}};
  if (!cfg.out.empty()) {
    const auto dir = detail::ensure_dir(cfg.out);
    std::ofstream csv(dir / "npg_exact.csv");
    csv << "iteration,cost,gap,contraction_ok\n";
    for (std::size_t n = 0; n < trace.costs.size(); ++n) {
      csv << n << ',' << io::format_double(trace.costs[n]) << ','
          << io::format_double(trace.gaps[n]) << ','
          << (n == 0 ? 1 : static_cast<int>(trace.contraction_ok[n - 1])) << '\n';
    }
    detail::emit_json((dir / "summary.json").string(), r.summary);
  }
  return r;
}

// Runs `reps` seeded learning repetitions (in parallel when threads > 1) and
// writes trace_NNN.csv / trace_NNN.json per repetition, ensemble.csv and
// summary.json. Repetition r uses master seed repetition_seed(seed, r).
inline CommandResult cmd_learn(const ExperimentConfig& cfg) {
  if (cfg.reps < 1) throw Error(ErrorCode::kInvalidArgument, "reps must be >= 1");
  const MjlsModel model = resolve_model(cfg);
  LearnerConfig base = cfg.learner;
  base.gamma = model.gamma();
  base.seed = cfg.seed;
  if (auto mask = resolve_mask(cfg, model)) base.mask = std::move(mask);
  if (base.mode == LearnMode::kStructuredGd && !base.mask) {
    throw Error(ErrorCode::kInvalidArgument, "structured learning needs --mask");
  }
  base.validate();

  std::vector<LearningTrace> traces(static_cast<std::size_t>(cfg.reps));
  auto run_rep = [&](int rep) {
    LearnerConfig c = base;
    c.seed = repetition_seed(cfg.seed, rep);
    const BlackBoxSystem system(model, c.seed);
    traces[static_cast<std::size_t>(rep)] = run_learning(system, c, &model);
  };
  const int workers = std::max(1, std::min(cfg.threads, cfg.reps));
  if (workers == 1) {
    for (int rep = 0; rep < cfg.reps; ++rep) run_rep(rep);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int rep = w; rep < cfg.reps; rep += workers) run_rep(rep);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  const auto rows = summarize_ensemble(traces);
  CommandResult r;
  json reps = json::array();
  bool any_aborted = false;
  for (int rep = 0; rep < cfg.reps; ++rep) {
    const LearningTrace& t = traces[static_cast<std::size_t>(rep)];
    const LearningRecord& last = t.records.back();
    json entry = {{"rep", rep},
                  {"seed", repetition_seed(cfg.seed, rep)},
                  {"aborted", t.aborted},
                  {"iterations", last.iteration}};
    entry["final_cost"] = last.cost ? json(*last.cost) : json(nullptr);
    entry["final_relative_error_pct"] =
        last.relative_error_pct ? json(*last.relative_error_pct) : json(nullptr);
    entry["final_gains"] = io::matrices_to_json(last.policy.gains);
    reps.push_back(std::move(entry));
    any_aborted = any_aborted || t.aborted;
  }
  json ensemble = json::array();
  for (const auto& row : rows) {
    ensemble.push_back({{"iteration", row.iteration},
                        {"mean_rel_err_pct", row.mean_rel_err_pct},
                        {"p10", row.p10},
                        {"p50", row.p50},
                        {"p90", row.p90},
                        {"count", row.count}});
  }
  r.summary = {{"config", detail::learner_to_json(base)},
               {"model", cfg.model},
               {"reps", reps},
               {"ensemble", ensemble}};
  if (!traces.front().optimal_cost) {
    r.summary["optimal_cost"] = nullptr;
  } else {
    r.summary["optimal_cost"] = *traces.front().optimal_cost;
  }
  if (!cfg.out.empty()) {
    const auto dir = detail::ensure_dir(cfg.out);
    for (int rep = 0; rep < cfg.reps; ++rep) {
      const LearningTrace& t = traces[static_cast<std::size_t>(rep)];
      std::ofstream csv(dir / detail::rep_name("trace", rep, ".csv"));
      io::write_trace_csv(csv, t);
      detail::emit_json((dir / detail::rep_name("trace", rep, ".json")).string(),
                        io::trace_to_json(t));
    }
    std::ofstream csv(dir / "ensemble.csv");
    io::write_ensemble_csv(csv, rows);
    detail::emit_json((dir / "summary.json").string(), r.summary);
  }
  if (any_aborted) r.exit_code = kExitLearningCollapse;
  return r;
}

// Projected gradient descent under a structure mask; the first-state mask is
// the default.
inline CommandResult cmd_structured(ExperimentConfig cfg) {
  cfg.learner.mode = LearnMode::kStructuredGd;
  if (cfg.mask.empty()) cfg.mask = "first-state";
  return cmd_learn(cfg);
}

inline CommandResult cmd_gen(const GenSpec& spec, const std::string& out) {
  const MjlsModel model = generate_model(spec);
  CommandResult r;
  r.summary = io::model_to_json(model);
  detail::emit_json(out, r.summary);
  return r;
}

// Rollout and estimator throughput on the configured model and policy.
inline CommandResult cmd_bench(const ExperimentConfig& cfg) {
  const MjlsModel model = resolve_model(cfg);
  GainPolicy policy = resolve_policy(cfg, model);
  if (!(policy.sigma > 0.0)) policy.sigma = cfg.learner.sigma0;
  const BlackBoxSystem system(model, cfg.seed);
  const int n = std::max(1, cfg.bench_trajectories);
  const int horizon = cfg.learner.horizon;
  EstimatorOptions opts = cfg.learner.estimator;
  opts.threads = cfg.threads;

  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  Trajectory traj;
  for (int i = 0; i < n; ++i) rollout_into(system, policy, horizon, 0, i, traj);
  const double rollout_s = std::chrono::duration<double>(clock::now() - t0).count();
  t0 = clock::now();
  const GradientEstimate est = estimate(system, policy, n, horizon, model.gamma(), 1, opts);
  const double estimate_s = std::chrono::duration<double>(clock::now() - t0).count();
  const double steps = static_cast<double>(n) * (horizon + 1);

  CommandResult r;
  r.summary = {{"trajectories", n},
               {"horizon", horizon},
               {"threads", opts.threads},
               {"rollout_ns_per_step", rollout_s / steps * 1e9},
               {"estimate_ns_per_step", estimate_s / steps * 1e9},
               {"diverged", est.diverged_count}};
  detail::emit_json(cfg.out, r.summary);
  return r;
}

}  // namespace mjls::cli
