#include <benchmark/benchmark.h>

#include <random>

#include "pchase/assembler.hpp"
#include "pchase/codec.hpp"
#include "pchase/datastructs.hpp"
#include "pchase/harness.hpp"
#include "pchase/logic.hpp"
#include "pchase/sim_kernel.hpp"

using namespace pchase;

namespace {

// host-side interpretation of a long list walk
void BM_ReferenceListWalk(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  MemoryPool mem(1, 1 << 26, AllocationPolicy::Uniform);
  std::vector<KeyValue> entries;
  for (std::size_t i = 0; i < len; ++i) entries.push_back({i, i});
  const auto h = build(StructureKind::List, entries, mem);
  const auto spec = gen_traversal(h, OpParams::find(len - 1));
  const Program lowered = lower(spec.program, analyze(spec.program, 7.0 / 6));
  for (auto _ : state) {
    ReferenceMachine m(lowered, mem, spec.init_cur_ptr, spec.init_scratch);
    benchmark::DoNotOptimize(m.run());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * len));
}
BENCHMARK(BM_ReferenceListWalk)->Arg(64)->Arg(4096);

void BM_KernelEvents(benchmark::State& state) {
  std::mt19937_64 rng(1);
  for (auto _ : state) {
    SimKernel k;
    std::uint64_t fired = 0;
    for (int i = 0; i < 10000; ++i) k.schedule_at(static_cast<SimTime>(rng() % 1000000), [&] { ++fired; });
    k.run();
    benchmark::DoNotOptimize(fired);
  }
  state.SetItemsProcessed(state.iterations() * 10000);
}
BENCHMARK(BM_KernelEvents);

void BM_CodecRoundTrip(benchmark::State& state) {
  const Program p = traversal_program(StructureKind::BTree, btree_layout(), OpParams::scan(0, 0, Aggregate::Sum));
  for (auto _ : state) benchmark::DoNotOptimize(decode(encode(p)));
}
BENCHMARK(BM_CodecRoundTrip);

// whole simulated lookups, including structure build
void BM_UpcRun(benchmark::State& state) {
  SimConfig cfg;
  cfg.nodes = static_cast<std::size_t>(state.range(0));
  cfg.allocation_policy = AllocationPolicy::Partitioned;
  WorkloadSpec w;
  w.kind = WorkloadKind::Upc;
  w.dataset = 10000;
  w.requests = 5000;
  w.verify = false;
  for (auto _ : state) benchmark::DoNotOptimize(run_workload(cfg, w, Mode::Chase).mean_ns);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.requests));
}
BENCHMARK(BM_UpcRun)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
