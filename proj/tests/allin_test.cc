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

#include "flmarket/allin.h"

#include <chrono>
#include <vector>

#include <gtest/gtest.h>

#include "flmarket/errors.h"
#include "flmarket/rng.h"
#include "oracles.h"

namespace flmarket {
namespace {

BidProfile StepProfile(const std::vector<std::pair<double, double>>& bids) {
  std::vector<Bid> out;
  for (auto [v, e] : bids) out.push_back(MakeBid(ValuationFunction::Step(v), e));
  return BidProfile(std::move(out));
}

TEST(AllInTest, ThreeOwnerExample) {
  AllInTrace trace;
  const AuctionOutcome o = AllIn(StepProfile({{1, 2}, {3, 2}, {4, 1}}), 6.0, &trace);
  EXPECT_EQ(o.epsilons, (std::vector<double>{2, 2, 0}));
  EXPECT_EQ(o.payments, (std::vector<double>{3, 3, 0}));
  EXPECT_EQ(trace.unit_valuations, (std::vector<double>{0.5, 1.5, 4.0}));
  EXPECT_EQ(trace.winners, (std::vector<size_t>{0, 1}));
  EXPECT_EQ(trace.first_rejected, 2u);
  EXPECT_DOUBLE_EQ(trace.unit_payment, 1.5);
}

TEST(AllInTest, SingleWinnerTakesBudget) {
  const AuctionOutcome o = AllIn(StepProfile({{2, 1}}), 2.0);
  EXPECT_EQ(o.epsilons[0], 1.0);
  EXPECT_EQ(o.payments[0], 2.0);
}

TEST(AllInTest, SingleLoser) {
  const AuctionOutcome o = AllIn(StepProfile({{5, 1}}), 2.0);
  EXPECT_EQ(o.epsilons[0], 0.0);
  EXPECT_EQ(o.payments[0], 0.0);
  EXPECT_TRUE(o.empty_winner_set());
}

TEST(AllInTest, PaysCriticalUnitPriceWhenSomeoneIsRejected) {
  // Units 1, 2, 3: the third fails (3 > 14 / 6), and the first two are
  // paid the rejected owner's unit valuation, 3 per unit, rather than 3.5.
  const AuctionOutcome o = AllIn(StepProfile({{2, 2}, {4, 2}, {6, 2}}), 14.0);
  EXPECT_EQ(o.epsilons, (std::vector<double>{2, 2, 0}));
  EXPECT_EQ(o.payments, (std::vector<double>{6, 6, 0}));
}

TEST(AllInTest, TiesScanByIndex) {
  AllInTrace trace;
  AllIn(StepProfile({{2, 1}, {2, 1}, {1, 1}}), 10.0, &trace);
  EXPECT_EQ(trace.order, (std::vector<size_t>{2, 0, 1}));
}

TEST(AllInTest, RejectsInvalidInput) {
  EXPECT_THROW(AllIn(StepProfile({{1, 1}}), 0.0), DomainError);
  EXPECT_THROW(AllIn(StepProfile({{1, 1}}), -1.0), DomainError);
  EXPECT_THROW(AllIn(StepProfile({{1, 0}}), 1.0), DomainError);
  EXPECT_THROW(AllIn(StepProfile({{0, 1}}), 1.0), DomainError);
  EXPECT_THROW(AllIn(BidProfile({MakeBid(ValuationFunction(ValuationFamily::kLinear, 1), 1)}), 1.0),
               DomainError);
}

struct RandomStepMarket {
  std::vector<double> values;
  std::vector<double> budgets;
  double budget;
};

RandomStepMarket DrawMarket(Rng& rng, int n, double sensitivity) {
  MarketConfig cfg;
  cfg.n = n;
  cfg.sensitivity = sensitivity;
  const BidProfile p = ToSingleMinded(GenerateBidProfile(cfg, rng));
  RandomStepMarket m;
  for (const Bid& b : p.bids()) {
    m.values.push_back(b.valuation.scale());
    m.budgets.push_back(b.privacy_budget);
  }
  m.budget = rng.Uniform(1, 40);
  return m;
}

BidProfile ToProfile(const std::vector<double>& values, const std::vector<double>& budgets) {
  std::vector<std::pair<double, double>> bids;
  for (size_t i = 0; i < values.size(); ++i) bids.push_back({values[i], budgets[i]});
  return StepProfile(bids);
}

TEST(AllInTest, MatchesOracleWinnersAndCriticalValues) {
  Rng rng(17);
  for (int t = 0; t < 300; ++t) {
    const RandomStepMarket m = DrawMarket(rng, 8, t % 2 ? 5.0 : 2.0);
    const AuctionOutcome o = AllIn(ToProfile(m.values, m.budgets), m.budget);
    for (size_t i = 0; i < m.values.size(); ++i) {
      const bool wins = testing::OracleWins(m.values, m.budgets, m.budget, i);
      ASSERT_EQ(o.epsilons[i] > 0, wins);
      if (wins) {
        const double critical = testing::OracleCriticalValue(m.values, m.budgets, m.budget, i);
        EXPECT_NEAR(o.payments[i], critical, 1e-9 * std::max(1.0, critical));
      }
    }
  }
}

TEST(AllInTest, InvariantsOnRandomProfiles) {
  Rng rng(5);
  for (int t = 0; t < 10000; ++t) {
    const RandomStepMarket m = DrawMarket(rng, 10, t % 2 ? 5.0 : 2.0);
    const AuctionOutcome o = AllIn(ToProfile(m.values, m.budgets), m.budget);
    EXPECT_LE(o.TotalPayment(), m.budget + 1e-9);
    for (size_t i = 0; i < m.values.size(); ++i) {
      EXPECT_LE(o.epsilons[i], m.budgets[i]);
      if (o.epsilons[i] > 0) {
        EXPECT_EQ(o.epsilons[i], m.budgets[i]);
        EXPECT_GE(o.payments[i], m.values[i] - 1e-12);
      } else {
        EXPECT_EQ(o.payments[i], 0.0);
      }
    }
  }
}

TEST(AllInTest, MonotoneInReport) {
  Rng rng(6);
  for (int t = 0; t < 500; ++t) {
    RandomStepMarket m = DrawMarket(rng, 6, 5.0);
    const AuctionOutcome base = AllIn(ToProfile(m.values, m.budgets), m.budget);
    for (size_t i = 0; i < m.values.size(); ++i) {
      if (base.epsilons[i] == 0) continue;
      std::vector<double> lower = m.values;
      lower[i] *= 0.5;
      EXPECT_GT(AllIn(ToProfile(lower, m.budgets), m.budget).epsilons[i], 0);
    }
  }
}

TEST(AllInTest, NoProfitableMisreport) {
  Rng rng(29);
  MarketConfig cfg;
  for (int t = 0; t < 100; ++t) {
    cfg.sensitivity = t % 2 ? 5.0 : 2.0;
    const BidProfile truth = GenerateBidProfile(cfg, rng);
    const double budget = rng.Uniform(1, 40);
    const testing::SweepResult r = testing::AllInMisreportSweep(
        truth, budget, [](const BidProfile& p, double b) { return AllIn(p, b); });
    EXPECT_EQ(r.truthfulness_violations, 0);
    EXPECT_EQ(r.ir_violations, 0);
    EXPECT_EQ(r.budget_violations, 0);
    EXPECT_GT(r.checked, 0);
  }
}

TEST(AllInTest, LargeMarketIsFast) {
  Rng rng(1);
  MarketConfig cfg;
  cfg.n = 100000;
  const BidProfile p = ToSingleMinded(GenerateBidProfile(cfg, rng));
  const auto start = std::chrono::steady_clock::now();
  const AuctionOutcome o = AllIn(p, 1000.0);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 1.0);
  EXPECT_LE(o.TotalPayment(), 1000.0 + 1e-9);
}

}  // namespace
}  // namespace flmarket
