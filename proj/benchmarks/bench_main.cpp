#include <benchmark/benchmark.h>

#include "archsim/attacks/attack.hpp"
#include "archsim/boundary/boundary.hpp"
#include "archsim/ensemble/ensemble.hpp"
#include "archsim/features/importance.hpp"
#include "archsim/rng.hpp"
#include "archsim/sat/sat.hpp"
#include "archsim/spectral/spectral.hpp"
#include "archsim/zoo/zoo.hpp"

using namespace archsim;

namespace {

const Dataset& shapes() {
  static const Dataset d = [] {
    zoo::SynthRecipe r;
    r.per_class = 40;
    return zoo::synth_shapes(r);
  }();
  return d;
}

nn::Model untrained(const std::string& family) {
  auto spec = zoo::family_spec(family, 32, 1, 10);
  spec.name = family;
  nn::TrainConfig c;
  c.epochs = 1;
  c.learning_rate = 1e-9;
  c.batch_size = 400;
  return nn::train(spec, shapes(), c);
}

void BM_Forward(benchmark::State& state, const std::string& family) {
  const auto m = untrained(family);
  const Tensor batch = shapes().images.slice_rows(0, 32);
  for (auto _ : state) benchmark::DoNotOptimize(nn::forward(m, batch));
  state.SetItemsProcessed(state.iterations() * 32);
}

void BM_PgdAttack(benchmark::State& state) {
  const auto m = untrained("cnn-bn-relu");
  const Tensor batch = shapes().images.slice_rows(0, 16);
  const std::vector<int> labels(shapes().labels.begin(), shapes().labels.begin() + 16);
  attacks::AttackConfig cfg;
  cfg.iterations = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(attacks::attack(m, batch, labels, cfg));
  state.SetItemsProcessed(state.iterations() * 16);
}

void BM_SatFromIndicators(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1, "ind");
  std::vector<std::uint8_t> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = static_cast<std::uint8_t>(rng.below(2));
    b[i] = static_cast<std::uint8_t>(rng.below(2));
  }
  for (auto _ : state) benchmark::DoNotOptimize(sat::sat_from_indicators(a, b, 0.01));
}

void BM_SpectralCluster(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2, "adj");
  linalg::Matrix a = linalg::zeros(n, n);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) {
    names.push_back("m" + std::to_string(i));
    for (std::size_t j = i + 1; j < n; ++j) a[i][j] = a[j][i] = rng.uniform(0.0, 100.0);
  }
  spectral::ClusterConfig cfg;
  cfg.k = 10;
  cfg.restarts = 100;
  for (auto _ : state) benchmark::DoNotOptimize(spectral::spectral_cluster(a, names, cfg));
}

void BM_GbmFit(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3, "rows");
  std::vector<features::PairFeatureRow> rows(n);
  for (auto& r : rows) {
    for (auto& v : r.diff) v = static_cast<std::uint8_t>(rng.below(2));
    r.target = 3.0 * r.diff[0] + 0.1 * rng.normal();
  }
  features::GbmConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(features::fit_gbm(rows, cfg));
}

void BM_BoundaryDisagreement(benchmark::State& state) {
  const auto f = boundary::linear_planar("f", 1.0, 0.0, 0.0);
  const auto g = boundary::linear_planar("g", 1.0, 0.2, 0.1);
  const auto grid = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(boundary::boundary_disagreement(f, g, {}, grid));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(grid * grid));
}

void BM_EnsembleEvaluate(benchmark::State& state) {
  const std::size_t models = 8, examples = 2000, classes = 10;
  ensemble::LogitCache cache;
  cache.num_classes = classes;
  Rng rng(4, "logits");
  for (std::size_t m = 0; m < models; ++m) {
    cache.names.push_back("m" + std::to_string(m));
    std::vector<float> l(examples * classes);
    for (auto& v : l) v = static_cast<float>(rng.normal());
    cache.logits.push_back(std::move(l));
  }
  for (std::size_t i = 0; i < examples; ++i) cache.labels.push_back(static_cast<int>(rng.below(classes)));
  const std::vector<std::size_t> members{0, 3, 5};
  for (auto _ : state) benchmark::DoNotOptimize(ensemble::evaluate(cache, members));
}

}  // namespace

BENCHMARK_CAPTURE(BM_Forward, mlp, std::string("mlp"));
BENCHMARK_CAPTURE(BM_Forward, cnn_bn_relu, std::string("cnn-bn-relu"));
BENCHMARK_CAPTURE(BM_Forward, mini_attention, std::string("mini-attention"));
BENCHMARK(BM_PgdAttack)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SatFromIndicators)->Arg(300)->Arg(3000);
BENCHMARK(BM_SpectralCluster)->Arg(16)->Arg(69)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GbmFit)->Arg(105)->Arg(2346)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BoundaryDisagreement)->Arg(200)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EnsembleEvaluate);

BENCHMARK_MAIN();
