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

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mjls/cli.hpp"
#include "mjls/io.hpp"
#include "mjls/mjls.hpp"
#include "test_util.hpp"

namespace mjls {
namespace {

namespace fs = std::filesystem;
using io::json;

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            (std::string("mjls_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) { return io::read_file(p.string()); }

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd =
      std::string(MJLS_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

MjlsModel trivial_model() {
  ModelData m;
  m.A = {Matrix::Zero(2, 2)};
  m.B = {Matrix::Identity(2, 2)};
  m.Q = {Matrix::Identity(2, 2)};
  m.R = {Matrix::Identity(2, 2)};
  m.trans = Matrix::Ones(1, 1);
  m.rho = Vector::Ones(1);
  m.gamma = 0.9;
  m.sigma0_cov = Matrix::Identity(2, 2);
  return validate_model(std::move(m));
}

TEST(ModelJson, RoundTripIsBitExact) {
  for (const MjlsModel& m : {builtin::small441(), builtin::structured443().with_eps(0.3),
                             testing::random_model(3, 4, 2, 8)}) {
    const MjlsModel back = io::model_from_json(json::parse(io::model_to_json(m).dump()));
    for (int i = 0; i < m.n_modes(); ++i) {
      EXPECT_EQ(back.A(i), m.A(i));
      EXPECT_EQ(back.B(i), m.B(i));
      EXPECT_EQ(back.Q(i), m.Q(i));
      EXPECT_EQ(back.R(i), m.R(i));
    }
    EXPECT_EQ(back.trans(), m.trans());
    EXPECT_EQ(back.rho(), m.rho());
    EXPECT_EQ(back.gamma(), m.gamma());
    EXPECT_EQ(back.eps(), m.eps());
    EXPECT_EQ(back.sigma0_cov(), m.sigma0_cov());
  }
}

TEST(ModelJson, FileRoundTrip) {
  TempDir dir;
  const MjlsModel m = testing::random_model(2, 3, 1, 4);
  io::save_model((dir / "m.json").string(), m);
  EXPECT_EQ(io::model_to_json(io::load_model((dir / "m.json").string())),
            io::model_to_json(m));
}

TEST(ModelJson, RejectsMalformedInput) {
  json good = io::model_to_json(builtin::small441());
  auto code_of = [](const json& j) {
    try {
      io::model_from_json(j);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInvalidArgument;
  };
  json j = good;
  j.erase("schema");
  EXPECT_EQ(code_of(j), ErrorCode::kParseError);
  j = good;
  j["schema"] = "mjls-v0";
  EXPECT_EQ(code_of(j), ErrorCode::kParseError);
  j = good;
  j.erase("trans");
  EXPECT_EQ(code_of(j), ErrorCode::kParseError);
  j = good;
  j["A"][0][1] = json::array({1.0, 2.0});
  EXPECT_EQ(code_of(j), ErrorCode::kParseError);
  j = good;
  j["A"][0][0][0] = "x";
  EXPECT_EQ(code_of(j), ErrorCode::kParseError);
  j = good;
  j["state_dim"] = 4;
  EXPECT_EQ(code_of(j), ErrorCode::kDimensionMismatch);
  j = good;
  j["trans"][0][0] = 0.9;
  EXPECT_THROW(io::model_from_json(j), ValidationError);
  EXPECT_THROW(io::parse_json("{", "inline"), Error);
  EXPECT_THROW(io::load_model("/nonexistent/model.json"), Error);
}

TEST(ModelJson, DefaultsForOptionalFields) {
  json j = io::model_to_json(builtin::small441());
  j.erase("eps");
  j.erase("sigma0_cov");
  const MjlsModel m = io::model_from_json(j);
  EXPECT_EQ(m.eps(), 0.0);
  EXPECT_EQ(m.sigma0_cov(), Matrix::Identity(3, 3));
}

TEST(PolicyJson, RoundTrip) {
  GainPolicy p = GainPolicy::zeros(2, 2, 3, 0.25);
  p.gains[1] << 1, 2, 3, 4, 5, 6;
  const GainPolicy back = io::policy_from_json(io::policy_to_json(p));
  EXPECT_EQ(back.concatenated(), p.concatenated());
  EXPECT_EQ(back.sigma, 0.25);
  const StructureMask mask = builtin::first_state_mask();
  EXPECT_EQ(io::mask_from_json(io::mask_to_json(mask)).concatenated(), mask.concatenated());
}

TEST(TraceIo, CsvColumnsAndEmptyCells) {
  LearningTrace t;
  LearningRecord a;
  a.iteration = 0;
  a.sigma = 0.5;
  a.cost = 3.0;
  a.relative_error_pct = 10.0;
  LearningRecord b = a;
  b.iteration = 1;
  b.cost.reset();
  b.relative_error_pct.reset();
  b.diverged = 2;
  t.records = {a, b};
  std::ostringstream os;
  io::write_trace_csv(os, t);
  EXPECT_EQ(os.str(),
            "iteration,sigma,cost,relative_error_pct,grad_norm,diverged\n"
            "0,0.5,3,10,0,0\n"
            "1,0.5,,,0,2\n");
  const json j = io::trace_to_json(t);
  EXPECT_TRUE(j["records"][1]["cost"].is_null());
  EXPECT_EQ(j["records"][1]["diverged"], 2);
}

TEST(Cli, ExitCodeMapping) {
  EXPECT_EQ(cli::exit_code_for(Error(ErrorCode::kNoConvergence, "")), 2);
  EXPECT_EQ(cli::exit_code_for(Error(ErrorCode::kAllDiverged, "")), 3);
  EXPECT_EQ(cli::exit_code_for(Error(ErrorCode::kParseError, "")), 1);
  EXPECT_EQ(cli::exit_code_for(Error(ErrorCode::kNotStabilizing, "")), 1);
}

TEST(Cli, SolveStructuredModel) {
  cli::ExperimentConfig cfg;
  cfg.model = "builtin:structured443";
  const auto r = cli::cmd_solve(cfg);
  EXPECT_NEAR(r.summary["optimal_cost"].get<double>(), 2.5704, 1e-3);
  EXPECT_EQ(r.exit_code, 0);
}

TEST(Cli, SolveSmallModelIsStationary) {
  cli::ExperimentConfig cfg;
  cfg.model = "builtin:small441";
  EXPECT_LT(cli::cmd_solve(cfg).summary["stationarity"].get<double>(), 1e-8);
}

TEST(Cli, TrivialModelFileHasZeroGain) {
  TempDir dir;
  io::save_model((dir / "trivial.json").string(), trivial_model());
  cli::ExperimentConfig cfg;
  cfg.model = (dir / "trivial.json").string();
  cfg.out = (dir / "solve.json").string();
  cli::cmd_solve(cfg);
  const json out = json::parse(slurp(dir / "solve.json"));
  EXPECT_EQ(io::matrices_from_json(out["K"], "K")[0].norm(), 0.0);
  EXPECT_NEAR(out["optimal_cost"].get<double>(), 2.0, 1e-12);
}

TEST(Cli, ModelOverridesAndGenerator) {
  cli::ExperimentConfig cfg;
  cfg.model = "builtin:small441";
  cfg.gamma = 0.5;
  cfg.eps = 0.1;
  const MjlsModel m = cli::resolve_model(cfg);
  EXPECT_EQ(m.gamma(), 0.5);
  EXPECT_EQ(m.eps(), 0.1);
  cfg = {};
  cfg.model = "gen:modes=3,dim=2,inputs=1,seed=4";
  EXPECT_EQ(cli::resolve_model(cfg).n_modes(), 3);
  cfg.model = "builtin:nope";
  EXPECT_THROW(cli::resolve_model(cfg), Error);
}

TEST(Cli, EvalReportsCostAndStability) {
  cli::ExperimentConfig cfg;
  cfg.model = "builtin:structured443";
  const auto r = cli::cmd_eval(cfg);
  EXPECT_TRUE(r.summary["stable"].get<bool>());
  EXPECT_NEAR(r.summary["cost"].get<double>(), 8.4861, 1e-3);
}

TEST(Cli, LearnIsDeterministicAndWritesEnsemble) {
  TempDir dir;
  auto run = [&](const std::string& sub, int threads) {
    cli::ExperimentConfig cfg;
    cfg.model = "builtin:small441";
    cfg.seed = 5;
    cfg.reps = 10;
    cfg.threads = threads;
    cfg.learner.N = 1000;
    cfg.learner.steps = 4;
    cfg.out = (dir / sub).string();
    return cli::cmd_learn(cfg);
  };
  const auto a = run("a", 1);
  const auto b = run("b", 2);
  EXPECT_EQ(a.exit_code, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const std::string name = cli::detail::rep_name("trace", rep, ".csv");
    EXPECT_EQ(slurp(dir / "a" / name), slurp(dir / "b" / name)) << name;
  }
  EXPECT_EQ(slurp(dir / "a" / "ensemble.csv"), slurp(dir / "b" / "ensemble.csv"));
  std::istringstream ensemble(slurp(dir / "a" / "ensemble.csv"));
  std::string header;
  std::getline(ensemble, header);
  EXPECT_EQ(header.rfind("iteration,mean_rel_err_pct,p10,p90", 0), 0u);
  int rows = 0;
  for (std::string line; std::getline(ensemble, line);) ++rows;
  EXPECT_EQ(rows, 5);
  const json summary = json::parse(slurp(dir / "a" / "summary.json"));
  EXPECT_EQ(summary["reps"].size(), 10u);
  EXPECT_TRUE(fs::exists(dir / "a" / "trace_009.json"));
}

TEST(Cli, StructuredCommandBracketsCost) {
  cli::ExperimentConfig cfg;
  cfg.model = "builtin:structured443";
  cfg.seed = 1;
  cfg.learner.N = 2000;
  cfg.learner.eta = 4e-5;
  cfg.learner.score_every = 100;
  const auto r = cli::cmd_structured(cfg);
  const double cost = r.summary["reps"][0]["final_cost"].get<double>();
  EXPECT_GT(cost, 2.5704);
  EXPECT_LT(cost, 8.4861);
  const auto gains = io::matrices_from_json(r.summary["reps"][0]["final_gains"], "K");
  for (const auto& g : gains) EXPECT_EQ(g.col(1).norm(), 0.0);
}

TEST(Cli, GenCommandRoundTrips) {
  TempDir dir;
  const std::string out = (dir / "gen.json").string();
  cli::cmd_gen(cli::parse_gen_spec("modes=4,dim=3,inputs=2,seed=9"), out);
  const MjlsModel m = io::load_model(out);
  EXPECT_EQ(m.n_modes(), 4);
  EXPECT_TRUE(is_ms_stabilizing(m, GainPolicy::zeros(m)).stable);
  EXPECT_EQ(io::model_to_json(m), json::parse(slurp(out)));
}

TEST(CliBinary, SolveAndExitCodes) {
  TempDir dir;
  EXPECT_EQ(run_cli("solve --model builtin:structured443 --out " + (dir / "s.json").string(),
                    dir / "log"),
            0);
  EXPECT_NEAR(json::parse(slurp(dir / "s.json"))["optimal_cost"].get<double>(), 2.5704, 1e-3);

  EXPECT_EQ(run_cli("solve --model /nonexistent.json", dir / "log"), 1);
  EXPECT_EQ(run_cli("frobnicate", dir / "log"), 1);

  io::save_model((dir / "stuck.json").string(), testing::scalar_model(2.0, 0.0, 1.0, 1.0));
  EXPECT_EQ(run_cli("solve --model " + (dir / "stuck.json").string(), dir / "log"), 2);

  io::save_model((dir / "wild.json").string(), testing::scalar_model(3.0, 1.0, 1.0, 1.0));
  EXPECT_EQ(run_cli("learn --model " + (dir / "wild.json").string() +
                        " --N 4 --T 400 --iters 2 --out " + (dir / "learn").string(),
                    dir / "log"),
            3);
}

TEST(CliBinary, GenIsSeededAndFast) {
  TempDir dir;
  const auto t0 = std::chrono::steady_clock::now();
  const std::string base = "gen --modes 10 --dim 10 --inputs 3 --seed 3 --out ";
  ASSERT_EQ(run_cli(base + (dir / "a.json").string(), dir / "log"), 0);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 5.0);
  ASSERT_EQ(run_cli(base + (dir / "b.json").string(), dir / "log"), 0);
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
  EXPECT_NO_THROW(io::load_model((dir / "a.json").string()));
}

TEST(CliBinary, NpgExactWritesTrace) {
  TempDir dir;
  ASSERT_EQ(run_cli("npg-exact --model builtin:small441 --iters 30 --out " +
                        (dir / "npg").string(),
                    dir / "log"),
            0);
  std::istringstream csv(slurp(dir / "npg" / "npg_exact.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "iteration,cost,gap,contraction_ok");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 31);
}

}  // namespace
}  // namespace mjls
