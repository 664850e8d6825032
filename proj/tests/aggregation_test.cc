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

#include "flmarket/aggregation.h"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "flmarket/errors.h"
#include "flmarket/rng.h"
#include "oracles.h"

namespace flmarket {
namespace {

using testing::RelativeError;

void ExpectWeights(const AggregationWeights& w, const std::vector<double>& want) {
  ASSERT_EQ(w.size(), want.size());
  for (size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(w[i], want[i], 1e-15) << "i=" << i;
}

TEST(WeightsTest, ValidatesSimplex) {
  EXPECT_NO_THROW(AggregationWeights({0.25, 0.75}));
  EXPECT_THROW(AggregationWeights({0.5, 0.6}), DomainError);
  EXPECT_THROW(AggregationWeights({-0.1, 1.1}), DomainError);
  EXPECT_THROW(AggregationWeights({}), DomainError);
}

TEST(BiasOptTest, RemainderToLargestEps) {
  ExpectWeights(BiasOpt(std::vector<double>{0, 1, 2, 3}), {0, 0.25, 0.25, 0.5});
}

TEST(BiasOptTest, AllWinnersUniform) {
  ExpectWeights(BiasOpt(std::vector<double>{0.4, 2, 1}), {1.0 / 3, 1.0 / 3, 1.0 / 3});
}

TEST(BiasOptTest, SingleWinnerTakesAll) {
  ExpectWeights(BiasOpt(std::vector<double>{0, 0, 0, 5}), {0, 0, 0, 1});
}

TEST(BiasOptTest, TiesGoToLowestIndex) {
  ExpectWeights(BiasOpt(std::vector<double>{0, 2, 2, 0}), {0, 0.75, 0.25, 0});
}

TEST(BiasOptTest, NoWinners) {
  EXPECT_THROW(BiasOpt(std::vector<double>{0, 0}), EmptyWinnerSet);
}

TEST(VarOptTest, ProportionalToSquares) {
  const AggregationWeights w = VarOpt(std::vector<double>{1, 2});
  EXPECT_NEAR(w[0], 0.2, 1e-15);
  EXPECT_NEAR(w[1], 0.8, 1e-15);
}

TEST(VarOptTest, EqualEpsUniform) {
  ExpectWeights(VarOpt(std::vector<double>{3, 3, 3, 3}), {0.25, 0.25, 0.25, 0.25});
}

TEST(VarOptTest, ZeroExcluded) {
  ExpectWeights(VarOpt(std::vector<double>{0, 1, 1}), {0, 0.5, 0.5});
}

TEST(VarOptTest, NoWinnersAndBadInput) {
  EXPECT_THROW(VarOpt(std::vector<double>{0, 0, 0}), EmptyWinnerSet);
  EXPECT_THROW(VarOpt(std::vector<double>{1, -1}), DomainError);
  EXPECT_THROW(VarOpt(std::vector<double>{}), DomainError);
}

TEST(BoundsTest, BiasBound) {
  const ClipBound l(1.0);
  EXPECT_DOUBLE_EQ(BiasBound(AggregationWeights({0.25, 0.25, 0.25, 0.25}), l), 0.0);
  EXPECT_DOUBLE_EQ(BiasBound(BiasOpt(std::vector<double>{0, 1, 2, 3}), l), 0.5);
  EXPECT_DOUBLE_EQ(BiasBound(AggregationWeights({1, 0}), l), 1.0);
}

TEST(BoundsTest, VarBound) {
  const ClipBound l(1.0);
  const std::vector<double> eps{1, 2};
  EXPECT_NEAR(VarBound(VarOpt(eps), eps, l).value(), 1.6, 1e-15);
  EXPECT_EQ(VarBound(AggregationWeights({0.5, 0.5}), std::vector<double>{0, 1}, l),
            kPositiveInfinity);
  const std::vector<double> equal{1.5, 1.5, 1.5};
  EXPECT_NEAR(VarBound(AggregationWeights({1.0 / 3, 1.0 / 3, 1.0 / 3}), equal, l).value(),
              8.0 / (3 * 1.5 * 1.5), 1e-14);
  EXPECT_THROW(VarBound(AggregationWeights({1.0}), eps, l), ShapeError);
}

TEST(BoundsTest, ErrBound) {
  const ClipBound l(1.0);
  const std::vector<double> eps{1, 2};
  EXPECT_NEAR(ErrBound(VarOpt(eps), eps, l).value(), 1.96, 1e-14);
  const std::vector<double> equal{2, 2};
  const AggregationWeights u({0.5, 0.5});
  EXPECT_EQ(ErrBound(u, equal, l), VarBound(u, equal, l));
  const std::vector<double> pos{0.5, 1, 3};
  EXPECT_EQ(ErrBound(BiasOpt(pos), pos, l),
            VarBound(AggregationWeights({1.0 / 3, 1.0 / 3, 1.0 / 3}), pos, l));
}

TEST(BoundsTest, ClosedFormVariance) {
  const std::vector<double> eps{1, 2, 3};
  EXPECT_NEAR(VarOptVarianceBound(eps, ClipBound(1.0)).value(), 8.0 / 14, 1e-15);
  EXPECT_NEAR(VarOptVarianceBound(eps, ClipBound(2.0)).value(), 32.0 / 14, 1e-14);
}

TEST(BoundsTest, VarOptErrorGradient) {
  Rng rng(4);
  const ClipBound l(1.5);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> eps(4);
    for (double& e : eps) e = rng.Uniform(0.1, 3);
    std::vector<double> grad(4);
    const double value = VarOptErrorWithGradient(eps, l, grad);
    EXPECT_NEAR(value, ErrBound(VarOpt(eps), eps, l).value(), 1e-12);
    const auto numeric = testing::NumericGradient(
        [&](const std::vector<double>& x) { return ErrBound(VarOpt(x), x, l).value(); }, eps, 1e-6);
    EXPECT_LT(testing::GradientRelativeError(grad, numeric), 1e-6);
  }
}

TEST(AggregateTest, Examples) {
  auto v = [](double a, double b) {
    GradientVector g(2);
    g << a, b;
    return g;
  };
  EXPECT_EQ(Aggregate(AggregationWeights({1, 0}), std::vector{v(1, 1), v(9, 9)}), v(1, 1));
  EXPECT_EQ(Aggregate(AggregationWeights({0.5, 0.5}), std::vector{v(0, 2), v(2, 0)}), v(1, 1));
  const GradientVector r = Aggregate(AggregationWeights({0.2, 0.8}), std::vector{v(10, 0), v(0, 10)});
  EXPECT_NEAR(r[0], 2, 1e-15);
  EXPECT_NEAR(r[1], 8, 1e-15);
}

TEST(AggregateTest, ShapeErrors) {
  EXPECT_THROW(Aggregate(AggregationWeights({1.0}),
                         std::vector<GradientVector>{GradientVector::Zero(2), GradientVector::Zero(2)}),
               ShapeError);
  EXPECT_THROW(Aggregate(AggregationWeights({0.5, 0.5}),
                         std::vector<GradientVector>{GradientVector::Zero(2), GradientVector::Zero(3)}),
               ShapeError);
}

TEST(AggregateTest, Linear) {
  Rng rng(8);
  const AggregationWeights w({0.1, 0.6, 0.3});
  std::vector<GradientVector> g(3, GradientVector(4));
  std::vector<GradientVector> h(3, GradientVector(4));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      g[i][j] = rng.Uniform(-1, 1);
      h[i][j] = rng.Uniform(-1, 1);
    }
  }
  const double a = 2.5;
  const double b = -0.75;
  std::vector<GradientVector> mix(3);
  for (int i = 0; i < 3; ++i) mix[i] = a * g[i] + b * h[i];
  const GradientVector lhs = Aggregate(w, mix);
  const GradientVector rhs = a * Aggregate(w, g) + b * Aggregate(w, h);
  EXPECT_LT((lhs - rhs).norm(), 1e-12);
}

TEST(BruteForceTest, TwoOwners) {
  const std::vector<double> eps{1, 2};
  const GridMinimum g = BruteForceMinVariance(eps, ClipBound(1.0), 0.01);
  EXPECT_NEAR(g.value.value(), 1.6, 1e-3);
  EXPECT_NEAR(g.weights[0], 0.2, 0.02);
  EXPECT_NEAR(g.weights[1], 0.8, 0.02);
}

TEST(BruteForceTest, SymmetricOwners) {
  const GridMinimum g = BruteForceMinVariance(std::vector<double>{1, 1}, ClipBound(1.0), 0.01);
  EXPECT_NEAR(g.weights[0], 0.5, 1e-9);
}

TEST(BruteForceTest, ThreeOwners) {
  const GridMinimum g = BruteForceMinVariance(std::vector<double>{1, 2, 3}, ClipBound(1.0), 0.02);
  EXPECT_NEAR(g.value.value(), 8.0 / 14, 2e-3);
}

TEST(BruteForceTest, Limits) {
  EXPECT_THROW(BruteForceMinVariance(std::vector<double>(5, 1.0), ClipBound(1.0), 0.1),
               DomainError);
  EXPECT_THROW(BruteForceMinVariance(std::vector<double>{1, 2}, ClipBound(1.0), 0.3), DomainError);
}

TEST(BruteForceTest, MinBiasMatchesClosedForm) {
  Rng rng(21);
  for (int t = 0; t < 30; ++t) {
    std::vector<double> eps(4);
    for (double& e : eps) e = rng.Uniform(0, 1) < 0.4 ? 0.0 : rng.Uniform(0.1, 5);
    size_t winners = 0;
    for (double e : eps) winners += e > 0;
    if (winners == 0) continue;
    const double closed = 2 * (1 - static_cast<double>(winners) / 4);
    EXPECT_NEAR(BiasBound(BiasOpt(eps), ClipBound(1.0)), closed, 1e-12);
    const GridMinimum g = BruteForceMinBias(eps, ClipBound(1.0), 0.05);
    EXPECT_GE(g.value.value(), closed - 1e-9);
  }
}

// Inverse-variance weights minimise sum lambda_i^2 v_i on the simplex.
TEST(InverseVarianceTest, BeatsRandomSimplexPoints) {
  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    const size_t n = 2 + rng.UniformIndex(4);
    std::vector<double> v(n);
    for (double& x : v) x = rng.Uniform(0.1, 10);
    std::vector<double> eps(n);
    // VarOpt weights are inverse-variance weights for v_i = 8 / eps_i^2.
    for (size_t i = 0; i < n; ++i) eps[i] = std::sqrt(8.0 / v[i]);
    const AggregationWeights w = VarOpt(eps);
    double inv = 0;
    double value = 0;
    for (size_t i = 0; i < n; ++i) {
      inv += 1 / v[i];
      value += w[i] * w[i] * v[i];
    }
    EXPECT_LT(RelativeError(value, 1 / inv), 1e-12);
    for (int s = 0; s < 1000; ++s) {
      const auto lam = testing::SimplexSample(rng, n);
      double other = 0;
      for (size_t i = 0; i < n; ++i) other += lam[i] * lam[i] * v[i];
      EXPECT_GE(other, value * (1 - 1e-12));
    }
  }
}

TEST(AggregatorNameTest, RoundTrip) {
  EXPECT_EQ(ParseAggregator(AggregatorName(Aggregator::kBiasOpt)), Aggregator::kBiasOpt);
  EXPECT_EQ(ParseAggregator("varopt"), Aggregator::kVarOpt);
  EXPECT_THROW(ParseAggregator("mean"), ParseError);
}

}  // namespace
}  // namespace flmarket
