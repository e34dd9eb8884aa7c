// Microbenchmarks for the inverse-HVP approximators and the model derivative
// kernels they are built on. Mirrors the per-method approximation-time
// comparison: Neumann and CG scale with their term/step counts, the identity
// is free, exact assembly dominates everything.

#include <benchmark/benchmark.h>

#include <random>

#include "iml/inverse_hvp.hpp"
#include "iml/mlp.hpp"

namespace {

using namespace iml;

struct Fixture {
  MlpShape shape{64, 32, 10};
  MlpParams params;
  HyperSet hypers;
  Batch batch;
  Vec grad_val;

  Fixture() {
    std::mt19937_64 rng(7);
    params = MlpParams::random_init(shape, rng);
    hypers = HyperSet::random_init(HyperMode::PerParameter, shape, rng);
    std::normal_distribution<double> g(0.0, 1.0);
    batch.inputs = Tensor::zeros({32, shape.d_in});
    for (double& x : batch.inputs.data) x = g(rng);
    batch.labels.resize(32);
    std::uniform_int_distribution<int> lab(0, static_cast<int>(shape.classes) - 1);
    for (int& y : batch.labels) y = lab(rng);
    grad_val = grad_w(LossKind::Val, params, hypers, batch).flatten();
  }

  HvpFn hvp() const {
    return [this](std::span<const double> v, std::span<double> out) {
      Vec hv = hvp_ww(params, hypers, batch, v);
      std::copy(hv.begin(), hv.end(), out.begin());
    };
  }
};

const Fixture& fixture() {
  static Fixture f;
  return f;
}

void BM_GradW(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) {
    MlpParams g = grad_w(LossKind::Train, f.params, f.hypers, f.batch);
    benchmark::DoNotOptimize(g.w1.data.data());
  }
}
BENCHMARK(BM_GradW);

void BM_Hvp(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) {
    Vec hv = hvp_ww(f.params, f.hypers, f.batch, f.grad_val);
    benchmark::DoNotOptimize(hv.data());
  }
}
BENCHMARK(BM_Hvp);

void BM_Neumann(benchmark::State& state) {
  const Fixture& f = fixture();
  HvpFn hvp = f.hvp();
  for (auto _ : state) {
    ApproxReport rep =
        neumann_inv_hvp(hvp, f.grad_val, static_cast<int>(state.range(0)), 0.1, false);
    benchmark::DoNotOptimize(rep.result.data());
  }
}
BENCHMARK(BM_Neumann)->Arg(3)->Arg(10)->Arg(20)->Arg(35)->Arg(50);

void BM_Cg(benchmark::State& state) {
  const Fixture& f = fixture();
  HvpFn hvp = f.hvp();
  for (auto _ : state) {
    ApproxReport rep = cg_inv_hvp(hvp, f.grad_val, static_cast<int>(state.range(0)));
    benchmark::DoNotOptimize(rep.result.data());
  }
}
BENCHMARK(BM_Cg)->Arg(3)->Arg(5)->Arg(10);

void BM_Identity(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) {
    ApproxReport rep = identity_inv_hvp(f.grad_val);
    benchmark::DoNotOptimize(rep.result.data());
  }
}
BENCHMARK(BM_Identity);

void BM_Exact(benchmark::State& state) {
  const Fixture& f = fixture();
  HvpFn hvp = f.hvp();
  for (auto _ : state) {
    ApproxReport rep = exact_inv_hvp(hvp, f.grad_val);
    benchmark::DoNotOptimize(rep.result.data());
  }
}
BENCHMARK(BM_Exact)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace

BENCHMARK_MAIN();
