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

#include "flmarket/murba.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include <gtest/gtest.h>

#include "flmarket/errors.h"
#include "flmarket/rng.h"
#include "oracles.h"

namespace flmarket::murba {
namespace {

using flmarket::testing::GradientRelativeError;
using flmarket::testing::NumericGradient;

MarketConfig LowMarket(int n) {
  MarketConfig m;
  m.n = n;
  m.sensitivity = kLowSensitivityE;
  return m;
}

MbrModel RandomModel(int n, int m, std::vector<int> hidden, uint64_t seed) {
  Rng rng(seed);
  return MbrModel(MbrArchitecture{n, m, std::move(hidden)}, ScalingForMarket(LowMarket(n), 20.0),
                  rng);
}

// Model whose outputs ignore the input: allocation logits are the given
// per-slot biases (dummy slot first) and payments are uniform.
MbrModel ConstantModel(int n, int m, const std::vector<double>& slot_bias) {
  const int in = n * (m + 1) + 1;
  nn::DenseNetwork alloc({in, n * (m + 1)}, nn::OutputActivation::kSoftmaxRows, m + 1);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k <= m; ++k) alloc.layers()[0].bias[i * (m + 1) + k] = slot_bias[k];
  }
  nn::DenseNetwork pay({in, n}, nn::OutputActivation::kSoftmaxVector);
  return MbrModel(MbrArchitecture{n, m, {}}, ScalingForMarket(LowMarket(n), 20.0),
                  std::move(alloc), std::move(pay));
}

ProfileBatch Batch(int n, int k, uint64_t seed) {
  return GenerateProfileBatch(LowMarket(n), n, k, 1.0, 20.0, seed);
}

// Utility of `owner` when its input slice is replaced by `slice`.
double SliceUtility(const MbrModel& model, const BidProfile& profile, double budget, int owner,
                    const Vector& slice) {
  MbrInput input = MbrInput::FromProfile(profile, budget, model.num_sub_bids());
  const Eigen::Index off = MbrInput::SliceOffset(owner, model.num_sub_bids());
  input.raw().segment(off, slice.size()) = slice;
  const MbrOutput out = MbrForward(model, input);
  double eps = 0;
  for (int k = 1; k <= model.num_sub_bids(); ++k) {
    eps += out.allocation(owner, k - 1) * input.privacy_budget(owner) / k;
  }
  return out.payments[owner] - profile[owner].valuation(eps);
}

TEST(TransformTest, LinearTwoSubBids) {
  const BidProfile p({MakeBid(ValuationFunction(ValuationFamily::kLinear, 1.0), 2.0)});
  const auto sub = TransformBids(p, 2);
  ASSERT_EQ(sub[0].size(), 2u);
  EXPECT_DOUBLE_EQ(sub[0][0].valuation, 4.0);
  EXPECT_DOUBLE_EQ(sub[0][0].privacy, 2.0);
  EXPECT_DOUBLE_EQ(sub[0][1].valuation, 2.0);
  EXPECT_DOUBLE_EQ(sub[0][1].privacy, 1.0);
}

TEST(TransformTest, SingleSubBidAndLimits) {
  const BidProfile p({MakeBid(ValuationFunction(ValuationFamily::kQuadratic, 1.0), 3.0)});
  const auto one = TransformBids(p, 1);
  ASSERT_EQ(one[0].size(), 1u);
  EXPECT_DOUBLE_EQ(one[0][0].valuation, 9.0);
  const auto many = TransformBids(p, 1000);
  EXPECT_LT(many[0].back().valuation, 1e-4);
  EXPECT_THROW(TransformBids(p, 0), DomainError);
}

TEST(InputTest, LayoutAndMonotoneValuations) {
  Rng rng(1);
  const BidProfile p = GenerateBidProfile(LowMarket(3), rng);
  const MbrInput in = MbrInput::FromProfile(p, 7.0, 4);
  EXPECT_EQ(in.dim(), 3 * 5 + 1);
  EXPECT_EQ(in.raw()[in.dim() - 1], 7.0);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(in.raw()[MbrInput::SliceOffset(i, 4) + 4], p[i].privacy_budget);
    for (int m = 1; m <= 4; ++m) {
      EXPECT_EQ(in.raw()[MbrInput::SliceOffset(i, 4) + m - 1], p[i].valuation(p[i].privacy_budget / m));
      if (m > 1) {
        EXPECT_LE(in.raw()[MbrInput::SliceOffset(i, 4) + m - 1],
                  in.raw()[MbrInput::SliceOffset(i, 4) + m - 2]);
      }
    }
  }
}

TEST(ForwardTest, ZeroModelIsUniform) {
  const MbrModel model = ConstantModel(3, 4, std::vector<double>(5, 0.0));
  Rng rng(2);
  const BidProfile p = GenerateBidProfile(LowMarket(3), rng);
  const MbrOutput out = MbrForward(model, MbrInput::FromProfile(p, 9.0, 4));
  for (int i = 0; i < 3; ++i) {
    for (int m = 0; m < 4; ++m) EXPECT_NEAR(out.allocation(i, m), 0.2, 1e-15);
    EXPECT_NEAR(out.payments[i], 3.0, 1e-14);
  }
}

TEST(ForwardTest, StructuralInvariantsOnRandomModels) {
  Rng rng(3);
  for (int t = 0; t < 1000; ++t) {
    const int n = 2 + static_cast<int>(rng.UniformIndex(4));
    const int m = 1 + static_cast<int>(rng.UniformIndex(4));
    const MbrModel model = RandomModel(n, m, {8}, 100 + t);
    const BidProfile p = GenerateBidProfile(LowMarket(n), rng);
    const double budget = rng.Uniform(0.5, 40);
    const MbrOutput out = MbrForward(model, MbrInput::FromProfile(p, budget, m));
    EXPECT_NEAR(out.payments.sum(), budget, 1e-9);
    EXPECT_GE(out.payments.minCoeff(), 0.0);
    for (int i = 0; i < n; ++i) EXPECT_LE(out.allocation.row(i).sum(), 1.0 + 1e-12);
    const AuctionOutcome o = MurbaAuction(model, p, budget);
    for (int i = 0; i < n; ++i) EXPECT_LE(o.epsilons[i], p[i].privacy_budget + 1e-9);
  }
}

TEST(ForwardTest, ShapeMismatch) {
  const MbrModel model = RandomModel(3, 2, {4}, 1);
  Rng rng(4);
  const BidProfile p = GenerateBidProfile(LowMarket(4), rng);
  EXPECT_THROW(MurbaAuction(model, p, 5.0), ShapeError);
  EXPECT_THROW(MbrForward(model, MbrInput(3, 3)), ShapeError);
}

TEST(AuctionTest, FractionalAllocation) {
  const MbrModel model = ConstantModel(1, 2, {-60.0, 0.0, 0.0});
  const BidProfile p({MakeBid(ValuationFunction(ValuationFamily::kLinear, 1.0), 2.0)});
  const AuctionOutcome o = MurbaAuction(model, p, 3.0);
  EXPECT_NEAR(o.epsilons[0], 1.5, 1e-12);
  EXPECT_NEAR(o.payments[0], 3.0, 1e-12);
}

TEST(AuctionTest, DummyWinsMeansZeroEps) {
  const MbrModel model = ConstantModel(2, 3, {800.0, 0.0, 0.0, 0.0});
  Rng rng(5);
  const AuctionOutcome o = MurbaAuction(model, GenerateBidProfile(LowMarket(2), rng), 3.0);
  EXPECT_EQ(o.epsilons[0], 0.0);
  EXPECT_EQ(o.epsilons[1], 0.0);
}

TEST(BestResponseTest, ZeroIterationsIsTruthful) {
  const MbrModel model = RandomModel(3, 3, {8}, 7);
  Rng rng(6);
  const BidProfile p = GenerateBidProfile(LowMarket(3), rng);
  const MbrInput in = MbrInput::FromProfile(p, 10.0, 3);
  const Vector slice = BestResponse(model, p, 10.0, 1, {0, 0.1});
  EXPECT_EQ(slice, in.raw().segment(MbrInput::SliceOffset(1, 3), 4));
}

TEST(BestResponseTest, NeverWorseThanTruthAndFeasible) {
  Rng rng(7);
  for (int t = 0; t < 30; ++t) {
    const MbrModel model = RandomModel(3, 3, {8}, 200 + t);
    const BidProfile p = GenerateBidProfile(LowMarket(3), rng);
    const double budget = rng.Uniform(1, 20);
    for (int i = 0; i < 3; ++i) {
      const Vector truth =
          MbrInput::FromProfile(p, budget, 3).raw().segment(MbrInput::SliceOffset(i, 3), 4);
      const Vector best = BestResponse(model, p, budget, i, {25, 0.1});
      EXPECT_GE(SliceUtility(model, p, budget, i, best),
                SliceUtility(model, p, budget, i, truth) - 1e-12);
      for (int m = 0; m < 3; ++m) {
        EXPECT_GE(best[m], 0.0);
        if (m > 0) {
          EXPECT_LE(best[m], best[m - 1] + 1e-12);
        }
      }
      EXPECT_GE(best[3], 0.0);
      EXPECT_LE(best[3], p[i].privacy_budget);
    }
  }
}

TEST(BestResponseTest, FirstStepIsAnAscentDirection) {
  Rng rng(8);
  for (int t = 0; t < 30; ++t) {
    const MbrModel model = RandomModel(2, 3, {6}, 300 + t);
    const BidProfile p = GenerateBidProfile(LowMarket(2), rng);
    const double budget = rng.Uniform(1, 20);
    const int owner = static_cast<int>(t % 2);
    const Vector truth =
        MbrInput::FromProfile(p, budget, 3).raw().segment(MbrInput::SliceOffset(owner, 3), 4);
    const Vector step = BestResponse(model, p, budget, owner, {1, 1e-4}) - truth;
    std::vector<double> x(truth.data(), truth.data() + truth.size());
    const auto grad = NumericGradient(
        [&](const std::vector<double>& s) {
          return SliceUtility(model, p, budget, owner, Eigen::Map<const Vector>(s.data(), 4));
        },
        x, 1e-6);
    double dot = 0;
    for (int j = 0; j < 4; ++j) dot += step[j] * grad[j];
    EXPECT_GE(dot, -1e-12);
  }
}

TEST(RegretTest, ConstantModelHasNoRegret) {
  const MbrModel model = ConstantModel(3, 3, {80.0, 0.0, 0.0, 0.0});
  const ProfileBatch batch = Batch(3, 20, 9);
  for (double r : EmpiricalRegret(model, batch, {25, 0.1})) EXPECT_NEAR(r, 0.0, 1e-12);
}

TEST(RegretTest, NonNegativeAndSingleProfile) {
  const MbrModel model = RandomModel(3, 2, {8}, 10);
  const ProfileBatch batch = Batch(3, 1, 11);
  const auto regret = EmpiricalRegret(model, batch, {25, 0.1});
  for (int i = 0; i < 3; ++i) {
    EXPECT_GE(regret[i], 0.0);
    const Vector truth = MbrInput::FromProfile(batch.profiles[0], batch.budgets[0], 2)
                             .raw()
                             .segment(MbrInput::SliceOffset(i, 2), 3);
    const Vector best = BestResponse(model, batch.profiles[0], batch.budgets[0], i, {25, 0.1});
    const double gain = SliceUtility(model, batch.profiles[0], batch.budgets[0], i, best) -
                        SliceUtility(model, batch.profiles[0], batch.budgets[0], i, truth);
    EXPECT_NEAR(regret[i], std::max(0.0, gain), 1e-12);
  }
}

TEST(RegretTest, TranslationConsistent) {
  Rng rng(12);
  for (int t = 0; t < 5; ++t) {
    const MbrModel model = RandomModel(3, 3, {8}, 400 + t);
    const ProfileBatch batch = Batch(3, 10, 500 + t);
    const double shift = rng.Uniform(-5, 5);
    const auto base = EmpiricalRegret(model, batch, {10, 0.1});
    const auto shifted = EmpiricalRegret(model, batch, {10, 0.1}, {shift});
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(base[i], shifted[i], 1e-9);
  }
}

TEST(IrTest, Examples) {
  const ProfileBatch batch = Batch(2, 10, 13);
  // Tiny allocation and a payment shift of -0.5 minus the uniform share:
  // every utility is -0.5 up to the negligible valuation.
  const MbrModel model = ConstantModel(2, 2, {80.0, 0.0, 0.0});
  for (size_t k = 0; k < batch.size(); ++k) {
    ProfileBatch one{{batch.profiles[k]}, {batch.budgets[k]}};
    const auto ir = EmpiricalIr(model, one, {-0.5 - batch.budgets[k] / 2});
    for (double v : ir) EXPECT_NEAR(v, 0.5, 1e-12);
    for (double v : EmpiricalIr(model, one)) EXPECT_EQ(v, 0.0);
  }
  const MbrModel random = RandomModel(2, 2, {8}, 14);
  for (double v : EmpiricalIr(random, batch)) EXPECT_GE(v, 0.0);
}

TEST(ErrTest, EqualAllocation) {
  // All mass on the first sub-bid and equal budgets: eps_i = e for all i.
  const MbrModel model = ConstantModel(3, 2, {-60.0, 60.0, -60.0});
  const double e = 1.7;
  std::vector<Bid> bids(3, MakeBid(ValuationFunction(ValuationFamily::kLinear, 1.0), e));
  const ProfileBatch batch{{BidProfile(bids), BidProfile(bids)}, {3.0, 8.0}};
  EXPECT_NEAR(EmpiricalErr(model, batch, ClipBound(1.0)), 8.0 / (3 * e * e), 1e-12);
}

TEST(ErrTest, MonotoneInAllocationAndCapped) {
  std::vector<Bid> small(2, MakeBid(ValuationFunction(ValuationFamily::kLinear, 1.0), 1.0));
  std::vector<Bid> large(2, MakeBid(ValuationFunction(ValuationFamily::kLinear, 1.0), 2.0));
  const MbrModel model = ConstantModel(2, 2, {0.0, 1.0, 0.5});
  const ProfileBatch a{{BidProfile(small)}, {5.0}};
  const ProfileBatch b{{BidProfile(large)}, {5.0}};
  EXPECT_LE(EmpiricalErr(model, b, ClipBound(1.0)), EmpiricalErr(model, a, ClipBound(1.0)));

  const MbrModel dummy = ConstantModel(2, 2, {60.0, 0.0, 0.0});
  EXPECT_EQ(EmpiricalErr(dummy, a, ClipBound(1.0)), ErrCap(ClipBound(1.0)));
  EXPECT_EQ(ErrCap(ClipBound(1.0)), 8e12);
}

TEST(LagrangianTest, GradientMatchesFiniteDifferences) {
  const ClipBound bound(1.0);
  for (uint64_t seed = 0; seed < 3; ++seed) {
    const MbrModel model = RandomModel(2, 2, {4}, 600 + seed);
    const ProfileBatch batch = Batch(2, 4, 700 + seed);
    const Matrix mis = FindMisreports(model, batch, {5, 0.1});
    TrainState state;
    state.phi_rgv = {1.0, 0.5};
    state.phi_irv = {2.0, 1.5};
    state.rho_rgv = 3.0;
    state.rho_irv = 5.0;
    MbrGradients grads;
    EvaluateLagrangian(model, batch, mis, state, bound, &grads);
    std::vector<double> analytic = grads.allocation.Flatten();
    const auto pay = grads.payment.Flatten();
    analytic.insert(analytic.end(), pay.begin(), pay.end());

    std::vector<double> params = model.allocation().FlattenParameters();
    const size_t n_alloc = params.size();
    const auto pay_params = model.payment().FlattenParameters();
    params.insert(params.end(), pay_params.begin(), pay_params.end());
    const auto numeric = NumericGradient(
        [&](const std::vector<double>& p) {
          MbrModel copy = model;
          copy.allocation().SetParameters(std::vector<double>(p.begin(), p.begin() + n_alloc));
          copy.payment().SetParameters(std::vector<double>(p.begin() + n_alloc, p.end()));
          return EvaluateLagrangian(copy, batch, mis, state, bound).value;
        },
        params, 1e-6);
    EXPECT_LT(GradientRelativeError(analytic, numeric), 1e-3) << "seed " << seed;
  }
}

TEST(LagrangianTest, ValueDecomposes) {
  const MbrModel model = RandomModel(3, 2, {6}, 800);
  const ProfileBatch batch = Batch(3, 6, 801);
  const Matrix mis = FindMisreports(model, batch, {5, 0.1});
  TrainState state;
  state.phi_rgv = {1, 2, 3};
  state.phi_irv = {0.5, 0.5, 0.5};
  state.rho_rgv = 2;
  state.rho_irv = 4;
  const LagrangianTerms t = EvaluateLagrangian(model, batch, mis, state, ClipBound(1.0));
  double rgv = 0;
  double irv = 0;
  double expected = t.err;
  for (int i = 0; i < 3; ++i) {
    expected += state.phi_rgv[i] * t.regret[i] + state.phi_irv[i] * t.ir[i];
    rgv += t.regret[i];
    irv += t.ir[i];
  }
  expected += state.rho_rgv / 2 * rgv * rgv + state.rho_irv / 2 * irv * irv;
  EXPECT_NEAR(t.value, expected, 1e-9 * std::abs(expected));
  EXPECT_NEAR(t.err, EmpiricalErr(model, batch, ClipBound(1.0)), 1e-9 * t.err);
  const auto ir = EmpiricalIr(model, batch);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(t.ir[i], ir[i], 1e-12);
}

TrainConfig TinyConfig() {
  TrainConfig cfg;
  cfg.arch = {3, 2, {8}};
  cfg.market = LowMarket(3);
  cfg.num_batches = 2;
  cfg.batch_size = 8;
  cfg.epochs = 1;
  cfg.best_response = {5, 0.1};
  cfg.seed = 42;
  return cfg;
}

TEST(TrainTest, MultiplierUpdate) {
  TrainConfig cfg = TinyConfig();
  cfg.num_batches = 1;
  cfg.multiplier_period = 1;
  const auto sample = GenerateTrainingSample(cfg, cfg.seed);
  const MbrModel initial = InitialModel(cfg);
  TrainState state;
  state.phi_rgv.assign(3, cfg.phi_init);
  state.phi_irv.assign(3, cfg.phi_init);
  const Matrix mis = FindMisreports(initial, sample[0], cfg.best_response);
  const LagrangianTerms t = EvaluateLagrangian(initial, sample[0], mis, state, ClipBound(cfg.clip));
  const TrainResult r = TrainMbr(cfg, sample);
  for (int i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(r.state.phi_rgv[i], 1.0 + cfg.rho_rgv_init * t.regret[i]);
    EXPECT_DOUBLE_EQ(r.state.phi_irv[i], 1.0 + cfg.rho_irv_init * t.ir[i]);
  }
}

TEST(TrainTest, MultipliersWaitForPeriod) {
  TrainConfig cfg = TinyConfig();
  cfg.multiplier_period = 3;
  const TrainResult r = TrainMbr(cfg, GenerateTrainingSample(cfg, cfg.seed));
  for (double phi : r.state.phi_rgv) EXPECT_EQ(phi, 1.0);
  for (double phi : r.state.phi_irv) EXPECT_EQ(phi, 1.0);
}

TEST(TrainTest, PenaltySchedule) {
  TrainConfig cfg = TinyConfig();
  cfg.epochs = 4;
  const TrainResult r = TrainMbr(cfg, GenerateTrainingSample(cfg, cfg.seed));
  EXPECT_EQ(r.state.rho_rgv, 3.0);
  EXPECT_EQ(r.state.rho_irv, 10.0);
  EXPECT_EQ(r.log.size(), 4u);
}

TEST(TrainTest, ZeroEpochsReturnsInitialModel) {
  TrainConfig cfg = TinyConfig();
  cfg.epochs = 0;
  const TrainResult r = TrainMbr(cfg, GenerateTrainingSample(cfg, cfg.seed));
  EXPECT_EQ(r.model, InitialModel(cfg));
  EXPECT_TRUE(r.log.empty());
}

TEST(TrainTest, Deterministic) {
  const TrainConfig cfg = TinyConfig();
  const auto sample = GenerateTrainingSample(cfg, cfg.seed);
  const TrainResult a = TrainMbr(cfg, sample);
  const TrainResult b = TrainMbr(cfg, sample);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(EpochLogRow(a.log[0]), EpochLogRow(b.log[0]));
}

TEST(TrainTest, DivergenceIsReported) {
  TrainConfig cfg = TinyConfig();
  cfg.learning_rate = 1e308;
  cfg.epochs = 3;
  int rows = 0;
  EXPECT_THROW(TrainMbr(cfg, GenerateTrainingSample(cfg, cfg.seed),
                        [&](const EpochLog&) { ++rows; }),
               DivergenceError);
}

TEST(TrainTest, ValidatesConfig) {
  TrainConfig cfg = TinyConfig();
  cfg.multiplier_period = 0;
  EXPECT_THROW(cfg.Validate(), DomainError);
  cfg = TinyConfig();
  cfg.budget_low = 30;
  EXPECT_THROW(cfg.Validate(), DomainError);
}

TEST(TrainTest, DeskSmokeRunImproves) {
  TrainConfig cfg;
  cfg.arch = {5, 5, {16, 16}};
  cfg.market = LowMarket(5);
  cfg.batch_size = 100;
  cfg.num_batches = 20;
  cfg.epochs = 10;
  cfg.seed = 3;
  const TrainResult r = TrainMbr(cfg, GenerateTrainingSample(cfg, cfg.seed));
  ASSERT_EQ(r.log.size(), 10u);
  for (const EpochLog& row : r.log) EXPECT_TRUE(std::isfinite(row.lagrangian));
  EXPECT_LT(r.log.back().lagrangian, r.log.front().lagrangian);
  EXPECT_LT(r.log.back().regret_mean, r.log.front().regret_mean);
}

TEST(CheckpointTest, RoundTrip) {
  const MbrModel model = RandomModel(4, 3, {7, 5}, 900);
  const std::string dir = ::testing::TempDir();
  const std::string path = CheckpointPath(dir, 4, 3);
  EXPECT_EQ(std::filesystem::path(path).filename(), "mbr_n4_m3.mbr");
  SaveModel(model, path);
  EXPECT_EQ(LoadModel(path), model);
  std::remove(path.c_str());
  EXPECT_THROW(LoadModel(path), std::runtime_error);
}

TEST(EvaluateTest, StructuralChecks) {
  const MbrModel model = RandomModel(3, 3, {8}, 901);
  const EvaluationReport r = Evaluate(model, Batch(3, 20, 902), {5, 0.1}, ClipBound(1.0));
  EXPECT_EQ(r.budget_violations, 0);
  EXPECT_EQ(r.privacy_violations, 0);
  EXPECT_GE(r.regret_max, r.regret_mean);
  EXPECT_GE(r.ir_max, r.ir_mean);
}

}  // namespace
}  // namespace flmarket::murba
