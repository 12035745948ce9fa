#include <benchmark/benchmark.h>

#include "cdnd/autodiff.hpp"
#include "cdnd/rng.hpp"

namespace {

cdnd::Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
  cdnd::Rng rng(seed);
  cdnd::Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_MatmulForwardBackward(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const cdnd::Tensor a = random_tensor({n, n}, 1);
  const cdnd::Tensor b = random_tensor({n, n}, 2);
  for (auto _ : state) {
    cdnd::Tape tape;
    const cdnd::NodeId pa = tape.leaf(a);
    const cdnd::NodeId pb = tape.leaf(b);
    const cdnd::NodeId root = tape.mean(tape.matmul(pa, pb));
    tape.backward(root);
    benchmark::DoNotOptimize(tape.grad(pa));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MatmulForwardBackward)->RangeMultiplier(2)->Range(32, 256)->Complexity();

void BM_NuclearNorm(benchmark::State& state) {
  const cdnd::Tensor p = random_tensor({static_cast<std::size_t>(state.range(0)), 8}, 3);
  for (auto _ : state) {
    cdnd::Tape tape;
    const cdnd::NodeId in = tape.leaf(p);
    const cdnd::NodeId root = tape.nuclear_norm(in);
    tape.backward(root);
    benchmark::DoNotOptimize(tape.grad(in));
  }
}
BENCHMARK(BM_NuclearNorm)->Arg(16)->Arg(32)->Arg(64);

void BM_Chamfer(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const cdnd::Tensor a = random_tensor({n, 3}, 4);
  const cdnd::Tensor b = random_tensor({n, 3}, 5);
  for (auto _ : state) {
    cdnd::Tape tape;
    const cdnd::NodeId root = tape.chamfer(tape.leaf(a), tape.leaf(b));
    benchmark::DoNotOptimize(tape.value(root));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Chamfer)->RangeMultiplier(2)->Range(16, 256)->Complexity();

}  // namespace

BENCHMARK_MAIN();
