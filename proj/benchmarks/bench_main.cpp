#include <benchmark/benchmark.h>

#include <string>

#include "lrvb/lrvb.hpp"
#include "lrvb/mcmc.hpp"
#include "lrvb/microcredit.hpp"
#include "lrvb/optimize.hpp"

namespace {

const lrvb::MicrocreditModel& fixture() {
  static const lrvb::MicrocreditModel model(
      lrvb::read_dataset_csv_file(std::string(LRVB_DATA_DIR) + "/microcredit_k7.csv"));
  return model;
}

const lrvb::FitResult& fixture_fit() {
  static const lrvb::FitResult fit = lrvb::fit(fixture(), fixture().default_alpha());
  return fit;
}

void BM_KlValue(benchmark::State& state) {
  const auto& model = fixture();
  const auto alpha = model.default_alpha();
  const auto xi = fixture_fit().xi_star;
  for (auto _ : state) benchmark::DoNotOptimize(model.kl(xi, alpha));
}
BENCHMARK(BM_KlValue);

void BM_KlHessian(benchmark::State& state) {
  const auto& model = fixture();
  const auto alpha = model.default_alpha();
  const auto& xi = fixture_fit().xi_star;
  for (auto _ : state) benchmark::DoNotOptimize(lrvb::kl_hessian(model, alpha, xi));
}
BENCHMARK(BM_KlHessian)->Unit(benchmark::kMillisecond);

void BM_Fit(benchmark::State& state) {
  const auto& model = fixture();
  const auto alpha = model.default_alpha();
  for (auto _ : state) benchmark::DoNotOptimize(lrvb::fit(model, alpha));
}
BENCHMARK(BM_Fit)->Unit(benchmark::kMillisecond);

void BM_LrvbAndSensitivity(benchmark::State& state) {
  const auto& model = fixture();
  const auto alpha = model.default_alpha();
  const auto& xi = fixture_fit().xi_star;
  for (auto _ : state) {
    const auto solution = lrvb::lrvb_covariance(model, alpha, xi);
    benchmark::DoNotOptimize(lrvb::prior_sensitivity(model, alpha, xi, solution));
  }
}
BENCHMARK(BM_LrvbAndSensitivity)->Unit(benchmark::kMillisecond);

void BM_Mcmc(benchmark::State& state) {
  const auto& model = fixture();
  const auto alpha = model.default_alpha();
  const auto start = model.layout().theta_mean(std::span<const double>(fixture_fit().xi_star));
  lrvb::McmcOptions options;
  options.draws = static_cast<std::size_t>(state.range(0));
  options.warmup = 1000;
  for (auto _ : state) benchmark::DoNotOptimize(lrvb::sample(model, alpha, start, options));
  state.SetItemsProcessed(state.iterations() * state.range(0) * static_cast<long>(options.thin));
}
BENCHMARK(BM_Mcmc)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
