#include <benchmark/benchmark.h>

#include <cmath>
#include <map>
#include <string>

#include "gmct/benchmark_suite.hpp"
#include "gmct/fitting.hpp"
#include "gmct/guidance.hpp"
#include "gmct/mcts.hpp"

using namespace gmct;

namespace {

const Grammar& grammar_b() {
  static const Grammar g = Grammar::load(std::string(GMCT_BENCH_GRAMMAR_DIR) + "/B.cfg");
  return g;
}

const TabularDataset& nguyen(const std::string& id) {
  static std::map<std::string, TabularDataset> cache;
  auto it = cache.find(id);
  if (it == cache.end()) it = cache.emplace(id, make_benchmark_dataset(select_subset(nguyen_suite(), {id})[0], 0)).first;
  return it->second;
}

void BM_Evaluate(benchmark::State& state) {
  const SyntaxTree t = SyntaxTree::from_prefix("+ sin ^ 2 x0 * cos x0 + x0 ^ 3 x0");
  const TabularDataset& ds = nguyen("5");
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(t, ds.xs, {}));
  state.SetItemsProcessed(state.iterations() * ds.n_rows());
}
BENCHMARK(BM_Evaluate);

void BM_FitConstants(benchmark::State& state) {
  const SyntaxTree t = SyntaxTree::from_prefix("+ c + * c ^ 2 x0 * c sin x0");
  const TabularDataset& ds = nguyen("5");
  for (auto _ : state) benchmark::DoNotOptimize(fit_constants(t, ds, {}, {}));
}
BENCHMARK(BM_FitConstants);

void BM_Simulations(benchmark::State& state) {
  const TabularDataset& ds = nguyen("7");
  UniformGuidance uniform;
  MctsConfig cfg;
  cfg.variant = state.range(0) ? Variant::AmEx : Variant::Classic;
  cfg.tie_break = TieBreak::Random;
  RewardConfig rc;
  rc.limits.max_constants = 2;
  for (auto _ : state) {
    StateScorer scorer(ds, rc);
    benchmark::DoNotOptimize(run_mcts(grammar_b(), grammar_b().initial_state(), uniform, cfg, 1000, scorer, 1));
  }
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_Simulations)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
  ModelConfig mc;
  mc.dataset_encoder = DatasetEncoderKind::PooledSet;
  mc.tree_encoder = TreeEncoderKind::PaddedOneHot;
  const GuidanceModel model(grammar_b(), mc);
  const SearchState s{SyntaxTree::from_prefix("+ S S"), {}};
  const ActionMask legal = legal_actions(grammar_b(), s);
  const TabularDataset& ds = nguyen("7");
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(s, ds, legal));
}
BENCHMARK(BM_Predict);

}  // namespace

BENCHMARK_MAIN();
