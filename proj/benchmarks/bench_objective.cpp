#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "cqc/cqc_model.hpp"
#include "cqc/dgp.hpp"
#include "cqc/nuisance.hpp"
#include "cqc/objective.hpp"
#include "cqc/stats.hpp"

namespace {

using namespace cqc;

struct Fixture {
  DgpSpec dgp = make_sin_linear(10, 2.0, 1);
  Dataset data;
  std::vector<Query> batch;

  explicit Fixture(std::size_t n) : data(generate(dgp, n, 2)) {
    Rng rng(3);
    std::normal_distribution<double> z;
    for (std::size_t i = 0; i < data.size(); ++i) batch.push_back({z(rng), data[i]});
  }
};

void BM_DrGradientOracle(benchmark::State& state) {
  const Fixture f(1024);
  const auto nuis = oracle_nuisances(f.dgp);
  const LinearCqc model(std::make_shared<AffineFeatures>(10));
  for (auto _ : state) {
    benchmark::DoNotOptimize(mc_gradient(model, nuis, f.batch, GradientKind::dr));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.batch.size()));
}
BENCHMARK(BM_DrGradientOracle);

// Kernel CCDFs: every evaluation sums over the training arm.
void BM_DrGradientKernel(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)));
  NuisanceFitOptions o;
  o.bandwidth = 1.0;
  const auto nuis = fit_nuisances(f.data, o);
  const LinearCqc model(std::make_shared<AffineFeatures>(10));
  const PreparedData prepared(nuis, f.data);
  std::vector<std::size_t> rows(f.data.size());
  std::vector<double> y0(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i] = i;
    y0[i] = f.batch[i].y0;
  }
  std::vector<double> grad(model.num_params());
  for (auto _ : state) {
    batch_gradient(model, prepared, rows, y0, GradientKind::dr, grad);
    benchmark::DoNotOptimize(grad.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows.size()));
}
BENCHMARK(BM_DrGradientKernel)->Arg(250)->Arg(1000);

void BM_CcdfPrepare(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)));
  const auto ccdf = fit_ccdf(f.data, 1, 1.0);
  const std::vector<double> x(10, 0.1);
  for (auto _ : state) {
    auto cond = ccdf.at(x);
    benchmark::DoNotOptimize((*cond)(0.3));
  }
}
BENCHMARK(BM_CcdfPrepare)->Arg(250)->Arg(1000)->Arg(4000);

void BM_LossQuadrature(benchmark::State& state) {
  const Fixture f(1024);
  const auto nuis = oracle_nuisances(f.dgp);
  const LinearCqc model(std::make_shared<AffineFeatures>(10));
  const int nodes = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(loss_quadrature(model, nuis, f.batch, nodes, 0.05));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.batch.size()));
}
BENCHMARK(BM_LossQuadrature)->Arg(33)->Arg(129)->Arg(513);

void BM_MlpValueAndGrad(benchmark::State& state) {
  const MlpCqc net(10, {20, 20}, Activation::relu, 4);
  const std::vector<double> x(10, 0.2);
  std::vector<double> grad(net.num_params());
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.value_and_grad(0.5, x, grad));
  }
}
BENCHMARK(BM_MlpValueAndGrad);

}  // namespace
