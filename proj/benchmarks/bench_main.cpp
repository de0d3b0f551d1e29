#include <benchmark/benchmark.h>

#include <random>

#include "csem/builders.hpp"
#include "csem/estimator.hpp"
#include "csem/popgen.hpp"

namespace {

csem::PopulationSpec four_block_population() {
  csem::PopulationSpec spec;
  for (int b = 0; b < 4; ++b) {
    csem::PopulationBlock blk;
    blk.name = "C" + std::to_string(b);
    blk.components = {"x" + std::to_string(2 * b), "x" + std::to_string(2 * b + 1)};
    blk.weights = Eigen::Vector2d(0.6, 0.7);
    blk.sigma_x.resize(2, 2);
    blk.sigma_x << 1.0, 0.3, 0.3, 1.0;
    spec.blocks.push_back(blk);
  }
  spec.paths.push_back({"C3", {{"C0", 0.25}, {"C1", -0.2}, {"C2", 0.15}}});
  spec.exo_covariances = {{"C0", "C1", -0.2}, {"C0", "C2", 0.1}, {"C1", "C2", 0.15}};
  spec.seed = 99;
  return spec;
}

std::vector<csem::CompositeBlock> four_blocks(csem::WeightMode mode, csem::SpecKind spec) {
  std::vector<csem::CompositeBlock> blocks;
  for (int b = 0; b < 4; ++b) {
    csem::CompositeBlock blk;
    blk.name = "C" + std::to_string(b);
    blk.components = {"x" + std::to_string(2 * b), "x" + std::to_string(2 * b + 1)};
    blk.weight_mode = mode;
    blk.spec = spec;
    blk.transmission = csem::Transmission::full;
    blocks.push_back(blk);
  }
  return blocks;
}

csem::StructuralSpec structural() {
  csem::StructuralSpec s;
  s.regressions.push_back({"C3", {"C0", "C1", "C2"}});
  return s;
}

void bench_implied_covariance(benchmark::State& state) {
  csem::BuiltModel built = csem::build_component_model(
      four_blocks(csem::WeightMode::free_, csem::SpecKind::ho_blended), structural());
  Eigen::VectorXd theta = Eigen::VectorXd::Constant(
      static_cast<int>(built.model.free_labels().size()), 0.4);
  for (auto _ : state)
    benchmark::DoNotOptimize(csem::implied_covariance(built.model, theta));
}
BENCHMARK(bench_implied_covariance);

void bench_population_sigma(benchmark::State& state) {
  csem::PopulationSpec spec = four_block_population();
  for (auto _ : state) benchmark::DoNotOptimize(csem::population_sigma(spec));
}
BENCHMARK(bench_population_sigma);

void bench_fit_blended_free(benchmark::State& state) {
  csem::PopulationSpec pop = four_block_population();
  csem::SampleMoments moments;
  moments.s = csem::population_sigma(pop);
  moments.n = 500;
  csem::BuiltModel built = csem::build_component_model(
      four_blocks(csem::WeightMode::free_, csem::SpecKind::ho_blended), structural());
  moments.order = built.model.observed_order();
  for (auto _ : state) benchmark::DoNotOptimize(csem::estimate(built.model, moments));
}
BENCHMARK(bench_fit_blended_free)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
