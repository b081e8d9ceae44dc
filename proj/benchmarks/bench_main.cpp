#include <benchmark/benchmark.h>

#include <algorithm>
#include <vector>

#include "rrs/backbone.hpp"
#include "rrs/crrs.hpp"
#include "rrs/metrics.hpp"
#include "rrs/streaming.hpp"

namespace {

using namespace rrs;

struct Market {
  std::size_t n, m, k;
  std::vector<Pair> pairs;
  RecommendationRun run;
};

// n x m market with ~`per_user` matches per A-user and random top-K lists.
Market make_market(std::size_t n, std::size_t m, std::size_t k, std::size_t per_user) {
  Rng rng(7);
  Market x{n, m, k, {}, {k, std::vector<std::vector<UserId>>(n), std::vector<std::vector<UserId>>(m)}};
  for (UserId a = 0; a < n; ++a)
    for (std::size_t i = 0; i < per_user; ++i) x.pairs.push_back({a, static_cast<UserId>(uniform_below(rng, m))});
  std::sort(x.pairs.begin(), x.pairs.end());
  x.pairs.erase(std::unique(x.pairs.begin(), x.pairs.end()), x.pairs.end());
  auto fill = [&](std::vector<UserId>& list, std::size_t others) {
    std::vector<UserId> ids(others);
    for (std::size_t i = 0; i < others; ++i) ids[i] = static_cast<UserId>(i);
    for (std::size_t i = 0; i < k; ++i) std::swap(ids[i], ids[i + uniform_below(rng, others - i)]);
    list.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
  };
  for (auto& l : x.run.lists_a) fill(l, m);
  for (auto& l : x.run.lists_b) fill(l, n);
  return x;
}

void BM_EvaluateRun(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = make_market(n, n, 50, 10);
  const MatchSet ms(n, n, x.pairs);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_run(x.run, ms));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n));
}
BENCHMARK(BM_EvaluateRun)->Arg(1000)->Arg(5000);

void BM_StreamingReplay(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = make_market(n, n, 50, 10);
  const MatchSet ms(n, n, x.pairs);
  for (auto _ : state) {
    StreamingMetricsState st(50);
    for (UserId a = 0; a < n; ++a)
      if (!ms.of(Side::A, a).empty()) st.process_user(Side::A, a, x.run.lists_a[a], ms.of(Side::A, a));
    for (UserId b = 0; b < n; ++b)
      if (!ms.of(Side::B, b).empty()) st.process_user(Side::B, b, x.run.lists_b[b], ms.of(Side::B, b));
    benchmark::DoNotOptimize(st.exact());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n));
}
BENCHMARK(BM_StreamingReplay)->Arg(1000)->Arg(5000);

void BM_FullRanking(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = make_market(n, n, 50, 10);
  const MatchSet ms(n, n, x.pairs);
  const auto model = init_model(n, n, 64, 1);
  for (auto _ : state) benchmark::DoNotOptimize(rank_top_k(row_scorer(model), ms, nullptr, 50));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n));
}
BENCHMARK(BM_FullRanking)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_RerankScoring(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto models = init_from_pretrained(init_model(n, n, 64, 2));
  const MatchSet none(n, n, std::vector<Pair>{});
  std::vector<double> row(n);
  for (auto _ : state) {
    VacantSlotCache cache(models.pretrained, none, 100, 3);
    const auto scorer = rerank_row_scorer(models, cache);
    for (UserId a = 0; a < 100; ++a) scorer(Side::A, a, row);
    benchmark::DoNotOptimize(row.data());
  }
}
BENCHMARK(BM_RerankScoring)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_BprStep(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  auto model = init_model(2000, 2000, 64, 4);
  Rng rng(5);
  std::vector<BprTriple> triples(batch);
  for (auto& t : triples)
    t = {static_cast<UserId>(uniform_below(rng, 2000)), static_cast<UserId>(uniform_below(rng, 2000)),
         static_cast<UserId>(uniform_below(rng, 2000)), uniform_below(rng, 2) ? NegativeSide::A : NegativeSide::B};
  auto grads = Gradients::zeros_like(model);
  auto opt = make_optimizer(model, {});
  for (auto _ : state) {
    grads.set_zero();
    benchmark::DoNotOptimize(accumulate_bpr(model, triples, 1e-6, grads));
    adam_step(model, opt, grads);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_BprStep)->Arg(1024)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
