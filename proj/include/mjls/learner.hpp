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

// Model-free policy learning: natural policy gradient on REINFORCE estimates,
// and projected gradient descent for structured (masked) gains.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mjls/core.hpp"
#include "mjls/estimator.hpp"
#include "mjls/exactsolve.hpp"
#include "mjls/grad.hpp"
#include "mjls/random.hpp"
#include "mjls/sim.hpp"

namespace mjls {

enum class LearnMode { kNpg, kStructuredGd };

enum class SigmaRule {
  kDecay,     // sigma_{n+1} = decay * sigma_n
  kGradient,  // sigma_{n+1} = sigma_n - alpha sigma_n^2 g_sigma (1-gamma)/(2k)
};

struct SigmaSchedule {
  SigmaRule rule = SigmaRule::kDecay;
  double decay = 0.99;
  double alpha = 0.0;
};

struct LearnerConfig {
  int steps = 100;
  double eta = 0.04;
  double sigma0 = 0.5;
  double sigma_decay = 0.99;
  int N = 1000;
  int horizon = 500;  // T_F
  std::uint64_t seed = 0;
  LearnMode mode = LearnMode::kNpg;
  std::optional<StructureMask> mask;
  std::optional<double> chi_floor;  // default: 1e-8 tr(chi_hat) / (n_s d)
  SigmaRule sigma_rule = SigmaRule::kDecay;
  double alpha = 0.0;
  double gamma = 0.99;  // discount used by the learner's returns
  std::optional<double> structured_step;  // default eta * sigma_n^2
  std::optional<GainPolicy> initial;      // default K = 0
  EstimatorOptions estimator;
  int score_every = 1;  // scorer evaluation period; the last iterate is always scored

  SigmaSchedule sigma_schedule() const { return {sigma_rule, sigma_decay, alpha}; }

  void validate() const {
    auto bad = [](const std::string& what) {
      throw Error(ErrorCode::kInvalidArgument, what);
    };
    if (steps < 0) bad("steps must be >= 0");
    if (!(eta > 0.0)) bad("eta must be > 0");
    if (!(sigma0 > 0.0)) bad("sigma0 must be > 0");
    if (!(sigma_decay > 0.0 && sigma_decay <= 1.0)) bad("sigma_decay must be in (0,1]");
    if (N < 1) bad("N must be >= 1");
    if (horizon < 1) bad("T_F must be >= 1");
    if (!(gamma > 0.0 && gamma < 1.0)) bad("gamma must be in (0,1)");
    if (score_every < 1) bad("score_every must be >= 1");
    if (mode == LearnMode::kStructuredGd && !mask) bad("structured mode needs a mask");
  }
};

struct LearningRecord {
  int iteration = 0;
  GainPolicy policy;
  double sigma = 0.0;
  std::optional<double> cost;                // C(K^n, 0) when scored
  std::optional<double> relative_error_pct;  // |C - C*| / C* * 100
  double grad_norm = 0.0;  // Frobenius norm of the estimate that produced K^n
  int diverged = 0;
  double wall_time = 0.0;  // seconds since the start of the run
  bool feasible = true;    // false when the scorer found K^n unstable
};

struct LearningTrace {
  std::vector<LearningRecord> records;
  std::optional<double> optimal_cost;
  bool aborted = false;
  std::string abort_reason;
};

inline double next_sigma(double sigma, double grad_sigma, double gamma, int k,
                         const SigmaSchedule& schedule) {
  if (schedule.rule == SigmaRule::kDecay) return schedule.decay * sigma;
  const double s = sigma - schedule.alpha * sigma * sigma * grad_sigma *
                               (1.0 - gamma) / (2.0 * k);
  return std::max(s, 0.0);
}

// K+ = K - eta sigma^2 g_K chi_hat^{-1}; sigma per the schedule.
inline GainPolicy npg_update(const GainPolicy& policy,
                             const GradientEstimate& est, double eta,
                             const SigmaSchedule& schedule, double gamma,
                             int input_dim,
                             std::optional<double> chi_floor = std::nullopt) {
  detail::require_sigma(policy);
  const RegularizedChi chi = regularize_chi(est.chi_blocks, chi_floor);
  const Matrix step = chi.solve_right(est.grad_K_hat);
  const Matrix k_hat =
      policy.concatenated() - eta * policy.sigma * policy.sigma * step;
  GainPolicy next = GainPolicy::from_concatenated(k_hat, policy.n_modes(), 0.0);
  next.sigma = next_sigma(policy.sigma, est.grad_sigma_hat, gamma, input_dim,
                          schedule);
  return next;
}

// Entrywise product of a concatenated gradient with the mask.
inline Matrix project_gradient(const Matrix& grad_K, const StructureMask& mask) {
  const Matrix m = mask.concatenated();
  if (m.rows() != grad_K.rows() || m.cols() != grad_K.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "mask and gradient shapes differ");
  }
  return grad_K.cwiseProduct(m);
}

// Source of gradient estimates: (policy, iteration) -> GradientEstimate.
using GradientSource =
    std::function<GradientEstimate(const GainPolicy&, std::uint64_t)>;

inline GradientSource sampled_gradients(const BlackBoxSystem& system,
                                        const LearnerConfig& config) {
  return [&system, config](const GainPolicy& policy, std::uint64_t iteration) {
    return estimate(system, policy, config.N, config.horizon, config.gamma,
                    iteration, config.estimator);
  };
}

// Noise-free source: exact gradient and exact chi of the true model.
inline GradientSource exact_gradients(const MjlsModel& model) {
  return [&model](const GainPolicy& policy, std::uint64_t) {
    const ExactGradient g = exact_gradient(model, policy);
    GradientEstimate est;
    est.grad_K_hat = g.grad_K;
    est.grad_sigma_hat = g.grad_sigma;
    est.chi_blocks = g.chi_blocks;
    est.chi_hat = block_diagonal(g.chi_blocks);
    est.n_trajectories = est.used = 0;
    return est;
  };
}

// Iterates estimate -> update for config.steps iterations. When `scorer` is
// given, every scored iterate is evaluated on the true model at sigma = 0.
inline LearningTrace run_learning(const GradientSource& source, int n_modes,
                                  int input_dim, int state_dim,
                                  const LearnerConfig& config,
                                  const MjlsModel* scorer = nullptr) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&start] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  };

  LearningTrace trace;
  if (scorer) {
    trace.optimal_cost =
        evaluate_cost(*scorer, optimal_gains(*scorer, solve_coupled_are(*scorer)));
  }
  GainPolicy policy = config.initial
                          ? *config.initial
                          : GainPolicy::zeros(n_modes, input_dim, state_dim);
  policy.sigma = config.sigma0;
  if (config.mode == LearnMode::kStructuredGd) policy = config.mask->apply(policy);

  auto record = [&](int iteration, double grad_norm, int diverged) {
    LearningRecord r;
    r.iteration = iteration;
    r.policy = policy;
    r.sigma = policy.sigma;
    r.grad_norm = grad_norm;
    r.diverged = diverged;
    const bool score = scorer && (iteration % config.score_every == 0 ||
                                  iteration == config.steps);
    if (score) {
      GainPolicy deterministic = policy;
      deterministic.sigma = 0.0;
      try {
        r.cost = evaluate_cost(*scorer, deterministic);
        r.relative_error_pct = std::abs(*r.cost - *trace.optimal_cost) /
                               *trace.optimal_cost * 100.0;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNotStabilizing) throw;
        r.feasible = false;
      }
    }
    r.wall_time = elapsed();
    trace.records.push_back(std::move(r));
  };

  record(0, 0.0, 0);
  const SigmaSchedule schedule = config.sigma_schedule();
  for (int n = 0; n < config.steps; ++n) {
    GradientEstimate est;
    try {
      est = source(policy, static_cast<std::uint64_t>(n));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kAllDiverged) throw;
      trace.aborted = true;
      trace.abort_reason = e.what();
      return trace;
    }
    if (config.mode == LearnMode::kNpg) {
      policy = npg_update(policy, est, config.eta, schedule, config.gamma,
                          input_dim, config.chi_floor);
    } else {
      const double step = config.structured_step
                              ? *config.structured_step
                              : config.eta * policy.sigma * policy.sigma;
      const Matrix k_hat = policy.concatenated() -
                           step * project_gradient(est.grad_K_hat, *config.mask);
      const double sigma = next_sigma(policy.sigma, est.grad_sigma_hat,
                                      config.gamma, input_dim, schedule);
      policy = config.mask->apply(
          GainPolicy::from_concatenated(k_hat, n_modes, sigma));
    }
    record(n + 1, est.grad_K_hat.norm(), est.diverged_count);
  }
  return trace;
}

inline LearningTrace run_learning(const BlackBoxSystem& system,
                                  const LearnerConfig& config,
                                  const MjlsModel* scorer = nullptr) {
  return run_learning(sampled_gradients(system, config), system.n_modes(),
                      system.input_dim(), system.state_dim(), config, scorer);
}

// Master seed of repetition `rep` in an ensemble.
inline std::uint64_t repetition_seed(std::uint64_t seed, int rep) {
  return derive_seed(seed, 0x5eedULL, static_cast<std::uint64_t>(rep));
}

// Linear-interpolation percentile, p in [0, 100].
inline double percentile(std::vector<double> values, double p) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

struct EnsembleRow {
  int iteration = 0;
  int count = 0;  // repetitions with a finite relative error at this iteration
  double mean_rel_err_pct = 0.0;
  double p10 = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
};

// Per-iteration statistics of the relative error across repetitions.
inline std::vector<EnsembleRow> summarize_ensemble(
    const std::vector<LearningTrace>& traces) {
  std::size_t longest = 0;
  for (const auto& t : traces) longest = std::max(longest, t.records.size());
  std::vector<EnsembleRow> rows;
  for (std::size_t n = 0; n < longest; ++n) {
    std::vector<double> errs;
    int iteration = static_cast<int>(n);
    for (const auto& t : traces) {
      if (n < t.records.size() && t.records[n].relative_error_pct) {
        errs.push_back(*t.records[n].relative_error_pct);
        iteration = t.records[n].iteration;
      }
    }
    if (errs.empty()) continue;
    EnsembleRow row;
    row.iteration = iteration;
    row.count = static_cast<int>(errs.size());
    double sum = 0.0;
    for (double e : errs) sum += e;
    row.mean_rel_err_pct = sum / static_cast<double>(errs.size());
    row.p10 = percentile(errs, 10.0);
    row.p50 = percentile(errs, 50.0);
    row.p90 = percentile(errs, 90.0);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mjls
