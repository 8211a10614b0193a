#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "dsim/collision.hpp"
#include "dsim/contact_flow.hpp"
#include "dsim/dantzig.hpp"
#include "dsim/experiments.hpp"
#include "support.hpp"

using namespace dsim;

namespace {

SceneConfig scene(const char* name) { return load_scene(std::string(DSIM_SCENE_DIR) + "/" + name + ".json"); }

void BM_DantzigSolve(benchmark::State& st) {
  test::Rng rng(42);
  std::vector<LcpProblem> problems;
  for (int i = 0; i < 64; ++i) problems.push_back(test::frictional_lcp(rng, static_cast<int>(st.range(0))));
  std::size_t k = 0;
  for (auto _ : st) {
    benchmark::DoNotOptimize(dantzig::solve(problems[k++ % problems.size()]));
  }
}
BENCHMARK(BM_DantzigSolve)->Arg(1)->Arg(2)->Arg(4)->Arg(8);

void BM_StepFull(benchmark::State& st, const char* name) {
  const Rollout r = rollout_of(scene(name));
  for (auto _ : st) {
    benchmark::DoNotOptimize(step_full(r.model, r.initial, r.tau, r.dt, r.options));
  }
}
BENCHMARK_CAPTURE(BM_StepFull, bounce, "bounce");
BENCHMARK_CAPTURE(BM_StepFull, push, "push");
BENCHMARK_CAPTURE(BM_StepFull, pendulum, "pendulum");

void BM_CcdToi(benchmark::State& st) {
  const Rollout r = rollout_of(scene("thin_wall"));
  for (auto _ : st) {
    benchmark::DoNotOptimize(ccd_toi(r.model, r.initial, r.dt));
  }
}
BENCHMARK(BM_CcdToi);

void BM_Simulate(benchmark::State& st, const char* name) {
  const Rollout r = rollout_of(scene(name));
  for (auto _ : st) benchmark::DoNotOptimize(simulate(r));
}
BENCHMARK_CAPTURE(BM_Simulate, two_ball, "two_ball");
BENCHMARK_CAPTURE(BM_Simulate, push, "push");

void BM_BackwardTrajectory(benchmark::State& st, const char* name) {
  const Rollout r = rollout_of(scene(name));
  const Trajectory t = simulate(r);
  const StateCotangent seed{Eigen::VectorXd::Ones(r.initial.q.size()), Eigen::VectorXd::Ones(r.initial.q.size())};
  for (auto _ : st) {
    benchmark::DoNotOptimize(backward_trajectory(r.model, t.tapes, seed));
  }
}
BENCHMARK_CAPTURE(BM_BackwardTrajectory, two_ball, "two_ball");
BENCHMARK_CAPTURE(BM_BackwardTrajectory, pendulum, "pendulum");
BENCHMARK_CAPTURE(BM_BackwardTrajectory, bounce, "bounce");

}  // namespace

BENCHMARK_MAIN();
