#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "cqc/baselines.hpp"
#include "cqc/cqc_model.hpp"
#include "cqc/dgp.hpp"
#include "cqc/nuisance.hpp"
#include "cqc/optimizer.hpp"
#include "cqc/simlab.hpp"

namespace {

using namespace cqc;

void BM_AdamFullBatch(benchmark::State& state) {
  const DgpSpec dgp = make_sin_linear(10, 2.0, 1);
  const Dataset data = generate(dgp, static_cast<std::size_t>(state.range(0)), 2);
  const auto nuis = oracle_nuisances(dgp);
  const LinearCqc model(std::make_shared<AffineFeatures>(10));
  AdamOptions o;
  o.iterations = 100;
  o.track_loss = false;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_adam(model, nuis, data, Y0Sampler{}, o));
  }
}
BENCHMARK(BM_AdamFullBatch)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_SgdTheorem(benchmark::State& state) {
  const DgpSpec dgp = make_cos_linear(2.0);
  const Dataset data = generate(dgp, static_cast<std::size_t>(state.range(0)), 2);
  const auto nuis = oracle_nuisances(dgp);
  const LinearCqc model(std::make_shared<AffineFeatures>(1));
  SgdOptions o;
  o.track_loss = false;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_sgd(model, nuis, data, Y0Sampler{}, o));
  }
}
BENCHMARK(BM_SgdTheorem)->Arg(500)->Arg(8000)->Unit(benchmark::kMillisecond);

void BM_IsotonicProject(benchmark::State& state) {
  Rng rng(5);
  std::normal_distribution<double> z;
  std::vector<double> v(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.01 * static_cast<double>(i) + z(rng);
  for (auto _ : state) benchmark::DoNotOptimize(isotonic_project(v));
}
BENCHMARK(BM_IsotonicProject)->Arg(1001)->Arg(10001);

void BM_DrInversionPredict(benchmark::State& state) {
  const DgpSpec dgp = make_sin_linear(10, 2.0, 1);
  const Dataset data = generate(dgp, static_cast<std::size_t>(state.range(0)), 2);
  const auto nuis = oracle_nuisances(dgp);
  const DrInversion inv(nuis, data, default_grid(data, 1001), 2.0);
  EvalSpec spec;
  spec.num_points = 100;
  const EvalPoints points = make_eval_points(dgp, spec, data.arm_outcomes(0));
  for (auto _ : state) benchmark::DoNotOptimize(inv.predict(points));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(points.size()));
}
BENCHMARK(BM_DrInversionPredict)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_InvertCqcOracle(benchmark::State& state) {
  const DgpSpec dgp = make_cos_linear(2.0);
  const auto nuis = oracle_nuisances(dgp);
  const GridSpec grid{-15.0, 15.0, 1001};
  const std::vector<double> x{0.3};
  for (auto _ : state) benchmark::DoNotOptimize(invert_cqc(nuis, 0.5, x, grid));
}
BENCHMARK(BM_InvertCqcOracle);

}  // namespace
