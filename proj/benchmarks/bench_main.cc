//
// Copyright 2026 The flmarket Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include <vector>

#include <benchmark/benchmark.h>

#include "flmarket/aggregation.h"
#include "flmarket/allin.h"
#include "flmarket/ldp.h"
#include "flmarket/market.h"
#include "flmarket/murba.h"
#include "flmarket/rng.h"

namespace flmarket {
namespace {

void BM_AllIn(benchmark::State& state) {
  MarketConfig cfg;
  cfg.n = static_cast<int>(state.range(0));
  Rng rng(1);
  const BidProfile profile = ToSingleMinded(GenerateBidProfile(cfg, rng));
  for (auto _ : state) {
    benchmark::DoNotOptimize(AllIn(profile, 0.01 * cfg.n));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_AllIn)->RangeMultiplier(10)->Range(10, 100000)->Complexity();

void BM_VarOptErr(benchmark::State& state) {
  Rng rng(2);
  std::vector<double> eps(state.range(0));
  for (double& e : eps) e = rng.Uniform(0.0, 5.0);
  const ClipBound bound(1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ErrBound(VarOpt(eps), eps, bound));
  }
}
BENCHMARK(BM_VarOptErr)->Arg(10)->Arg(1000);

void BM_LaplacePerturb(benchmark::State& state) {
  Rng rng(3);
  const GradientVector g = GradientVector::Zero(state.range(0));
  const ClipBound bound(1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(LaplacePerturb(ClipGradient(g, bound), 1.0, bound, rng));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LaplacePerturb)->Arg(1000)->Arg(100000);

void BM_MbrForward(benchmark::State& state) {
  const int n = 5;
  const int m = static_cast<int>(state.range(0));
  MarketConfig market;
  market.n = n;
  Rng rng(4);
  const murba::MbrModel model(murba::MbrArchitecture{n, m, {32, 32}},
                              murba::ScalingForMarket(market, 20.0), rng);
  const BidProfile profile = GenerateBidProfile(market, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(murba::MurbaAuction(model, profile, 10.0));
  }
}
BENCHMARK(BM_MbrForward)->Arg(5)->Arg(20);

void BM_BestResponse(benchmark::State& state) {
  const int n = 5;
  MarketConfig market;
  market.n = n;
  Rng rng(5);
  const murba::MbrModel model(murba::MbrArchitecture{n, 5, {32, 32}},
                              murba::ScalingForMarket(market, 20.0), rng);
  const murba::ProfileBatch batch = murba::GenerateProfileBatch(market, n, 100, 1.0, 20.0, 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(murba::FindMisreports(model, batch, {25, 0.1}));
  }
}
BENCHMARK(BM_BestResponse)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace flmarket

BENCHMARK_MAIN();
