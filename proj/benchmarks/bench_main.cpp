#include <benchmark/benchmark.h>

#include <random>

#include "fishswim/baseline.hpp"
#include "fishswim/coupling.hpp"
#include "fishswim/lbm.hpp"
#include "fishswim/sac.hpp"

using namespace fishswim;

static void BM_LbmStep(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  lbm::LatticeGrid g({n, n, lbm::Edge::kBounceBack, lbm::Edge::kBounceBack}, 0.55);
  g.set_cell_equilibrium(n / 2, n / 2, 1.01, {0.01, 0.0});
  for (auto _ : state) g.collide_stream();
  state.counters["MLUPS"] =
      benchmark::Counter(static_cast<double>(n) * n * state.iterations() / 1e6, benchmark::Counter::kIsRate);
}
BENCHMARK(BM_LbmStep)->Arg(96)->Arg(190)->Unit(benchmark::kMicrosecond);

static void BM_CoupledSubstep(benchmark::State& state) {
  coupling::SimConfig c;
  c.nx = static_cast<int>(state.range(0));
  c.ny = c.nx;
  const double size = c.nx == 190 ? 3.6 : 1.8;
  c.fluid.domain_x = size;
  c.fluid.domain_y = size;
  body::FishState fish;
  fish.base_position = {0.5 * size + 0.26, 0.5 * size};
  coupling::CoupledSim sim(c, fish, 17);
  const baseline::CpgParams gait;
  std::int64_t k = 0;
  for (auto _ : state) {
    sim.command(baseline::cpg_output(gait, static_cast<double>(k++) * c.dt));
    sim.substep();
  }
  state.counters["sim_s_per_wall_s"] = benchmark::Counter(c.dt * state.iterations(), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_CoupledSubstep)->Arg(96)->Arg(190)->Unit(benchmark::kMillisecond);

static void BM_SacUpdate(benchmark::State& state) {
  sac::SacConfig c;
  c.batch_size = static_cast<int>(state.range(0));
  sac::SacAgent agent(c, 1);
  sac::ReplayBuffer buffer(10000);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    sac::Transition t;
    for (double& v : t.state) v = u(rng);
    for (double& v : t.action) v = u(rng);
    t.reward = u(rng);
    t.next_state = t.state;
    buffer.push(t);
  }
  for (auto _ : state) {
    const sac::ReplayBuffer::Batch b = buffer.sample(static_cast<std::size_t>(c.batch_size), rng);
    benchmark::DoNotOptimize(agent.update(b));
  }
}
BENCHMARK(BM_SacUpdate)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
