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

#ifndef FLMARKET_AGGREGATION_H_
#define FLMARKET_AGGREGATION_H_

#include <span>
#include <string_view>
#include <vector>

#include "flmarket/extended_real.h"
#include "flmarket/ldp.h"

namespace flmarket {

// Point on the probability simplex used to combine noisy gradients.
class AggregationWeights {
 public:
  // Throws DomainError unless every weight is in [0, 1] and the weights sum
  // to one within 1e-9.
  explicit AggregationWeights(std::vector<double> lambdas);

  size_t size() const { return lambdas_.size(); }
  double operator[](size_t i) const { return lambdas_[i]; }
  const std::vector<double>& values() const { return lambdas_; }

 private:
  std::vector<double> lambdas_;
};

enum class Aggregator { kBiasOpt, kVarOpt };

std::string_view AggregatorName(Aggregator a);
Aggregator ParseAggregator(std::string_view name);

// Weight 1/n to every winner (eps > 0), the remainder to the first winner
// with the largest eps, zero to everyone else.
AggregationWeights BiasOpt(std::span<const double> epsilons);

// Inverse-variance weights over winners: lambda_i proportional to eps_i^2.
AggregationWeights VarOpt(std::span<const double> epsilons);

AggregationWeights ComputeWeights(Aggregator a, std::span<const double> epsilons);

// sum_i |lambda_i - 1/n| L
double BiasBound(const AggregationWeights& lambdas, ClipBound bound);

// sum_{lambda_i > 0} 8 (lambda_i L / eps_i)^2; +inf if a positive weight sits
// on a zero eps.
ExtendedReal VarBound(const AggregationWeights& lambdas,
                      std::span<const double> epsilons, ClipBound bound);

// VarBound + BiasBound^2.
ExtendedReal ErrBound(const AggregationWeights& lambdas,
                      std::span<const double> epsilons, ClipBound bound);

// Closed-form variance bound of VarOpt weights, 8 L^2 / sum eps^2.
ExtendedReal VarOptVarianceBound(std::span<const double> epsilons, ClipBound bound);

// ErrBound(VarOpt(eps), eps, L) together with its gradient with respect
// to eps. Requires sum eps^2 > 0. Used as the differentiable training
// objective of the allocation network.
double VarOptErrorWithGradient(std::span<const double> epsilons, ClipBound bound,
                               std::span<double> grad);

// sum_i lambda_i g_i
GradientVector Aggregate(const AggregationWeights& lambdas,
                         std::span<const GradientVector> noisy_gradients);

struct GridMinimum {
  AggregationWeights weights;
  ExtendedReal value;
};

// Exhaustive minimum of VarBound over the simplex grid with spacing
// `grid_step` (1/grid_step must be an integer). Only for n <= 4.
GridMinimum BruteForceMinVariance(std::span<const double> epsilons,
                                  ClipBound bound, double grid_step);

// Exhaustive minimum of BiasBound over grid points that put zero weight on
// zero-eps owners. Only for n <= 4.
GridMinimum BruteForceMinBias(std::span<const double> epsilons, ClipBound bound,
                              double grid_step);

}  // namespace flmarket

#endif  // FLMARKET_AGGREGATION_H_
