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

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "mjls/cli.hpp"

namespace {

using mjls::cli::ExperimentConfig;

void add_common(CLI::App* cmd, ExperimentConfig& cfg) {
  cmd->add_option("--model", cfg.model,
                  "builtin:small441 | builtin:structured443 | gen:modes=..,dim=..,"
                  "inputs=..,seed=.. | model.json")
      ->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "Master seed")->capture_default_str();
  cmd->add_option("--out", cfg.out, "Output file or directory");
  cmd->add_option("--gamma", cfg.gamma, "Override the discount factor");
  cmd->add_option("--eps", cfg.eps, "Override the process-noise scale");
}

void add_policy(CLI::App* cmd, ExperimentConfig& cfg) {
  cmd->add_option("--policy", cfg.policy, "Policy JSON (default: zero gains)");
  cmd->add_option("--sigma", cfg.sigma, "Override the exploration scale");
}

void add_learn(CLI::App* cmd, ExperimentConfig& cfg) {
  auto& l = cfg.learner;
  cmd->add_option("--N", l.N, "Trajectories per iteration")->capture_default_str();
  cmd->add_option("--T", l.horizon, "Rollout horizon T_F")->capture_default_str();
  cmd->add_option("--iters", l.steps, "Learning iterations")->capture_default_str();
  cmd->add_option("--eta", l.eta, "Gain step size")->capture_default_str();
  cmd->add_option("--sigma0", l.sigma0, "Initial exploration scale")->capture_default_str();
  cmd->add_option("--sigma-decay", l.sigma_decay, "Per-iteration sigma decay")
      ->capture_default_str();
  cmd->add_option("--structured-step", l.structured_step,
                  "Constant projected-GD step (default eta * sigma^2)");
  cmd->add_option("--reps", cfg.reps, "Seeded repetitions")->capture_default_str();
  cmd->add_option("--mask", cfg.mask, "full | first-state | mask.json");
  cmd->add_option("--threads", cfg.threads, "Worker threads")->capture_default_str();
  cmd->add_option("--score-every", l.score_every, "Evaluate the true cost every n iterations")
      ->capture_default_str();
  cmd->add_flag("--leave-one-out",
                [&l](std::int64_t) { l.estimator.baseline = mjls::BaselineMode::kLeaveOneOut; },
                "Baseline excludes the current trajectory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Solve, evaluate and learn controllers for Markov jump linear systems"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  mjls::GenSpec gen;
  std::string gen_out;

  auto* solve = app.add_subcommand("solve", "Coupled Riccati solution and optimal gains");
  add_common(solve, cfg);

  auto* eval = app.add_subcommand("eval", "Cost and stability of a policy");
  add_common(eval, cfg);
  add_policy(eval, cfg);

  auto* grad = app.add_subcommand("grad", "Exact policy gradient");
  add_common(grad, cfg);
  add_policy(grad, cfg);

  auto* npg = app.add_subcommand("npg-exact", "Model-based natural policy gradient");
  add_common(npg, cfg);
  add_policy(npg, cfg);
  npg->add_option("--iters", cfg.learner.steps, "Iterations")->capture_default_str();
  npg->add_option("--eta-tilde", cfg.eta_tilde, "Scaled step (default: certified bound)");

  auto* learn = app.add_subcommand("learn", "Model-free natural policy gradient");
  add_common(learn, cfg);
  add_learn(learn, cfg);

  auto* structured = app.add_subcommand("structured", "Projected gradient descent under a mask");
  add_common(structured, cfg);
  add_learn(structured, cfg);

  auto* gen_cmd = app.add_subcommand("gen", "Generate a random benchmark model");
  gen_cmd->add_option("--modes", gen.n_modes)->capture_default_str();
  gen_cmd->add_option("--dim", gen.state_dim)->capture_default_str();
  gen_cmd->add_option("--inputs", gen.input_dim)->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("--cap", gen.spectral_cap, "Largest mode spectral radius")
      ->capture_default_str();
  gen_cmd->add_option("--gamma", gen.gamma)->capture_default_str();
  gen_cmd->add_option("--eps", gen.eps)->capture_default_str();
  gen_cmd->add_option("--out", gen_out, "Model JSON path");

  auto* bench = app.add_subcommand("bench", "Rollout and estimator throughput");
  add_common(bench, cfg);
  add_policy(bench, cfg);
  bench->add_option("--N", cfg.bench_trajectories, "Trajectories")->capture_default_str();
  bench->add_option("--T", cfg.learner.horizon, "Horizon")->capture_default_str();
  bench->add_option("--threads", cfg.threads, "Estimator threads")->capture_default_str();

  // Structured learning defaults to a smaller gain step.
  structured->preparse_callback([&cfg](std::size_t) { cfg.learner.eta = 4e-5; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mjls::cli::kExitUsage;
  }

  try {
    mjls::cli::CommandResult r;
    if (*solve) r = mjls::cli::cmd_solve(cfg);
    else if (*eval) r = mjls::cli::cmd_eval(cfg);
    else if (*grad) r = mjls::cli::cmd_grad(cfg);
    else if (*npg) r = mjls::cli::cmd_npg_exact(cfg);
    else if (*learn) r = mjls::cli::cmd_learn(cfg);
    else if (*structured) r = mjls::cli::cmd_structured(cfg);
    else if (*gen_cmd) r = mjls::cli::cmd_gen(gen, gen_out);
    else if (*bench) r = mjls::cli::cmd_bench(cfg);
    if (*learn || *structured) {
      std::cout << r.summary.at("ensemble").dump(2) << '\n';
    } else if (*gen_cmd && !gen_out.empty()) {
      std::cout << "wrote " << gen_out << '\n';
    } else {
      std::cout << r.summary.dump(2) << '\n';
    }
    return r.exit_code;
  } catch (const mjls::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    for (const auto& v : e.violations()) {
      std::cerr << "  " << mjls::to_string(v.code) << ' ' << v.field << ' ' << v.detail << '\n';
    }
    return mjls::cli::exit_code_for(e);
  } catch (const mjls::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return mjls::cli::exit_code_for(e);
  }
}
