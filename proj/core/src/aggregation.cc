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
#include <functional>
#include <string>

#include "flmarket/errors.h"

namespace flmarket {
namespace {

constexpr double kSimplexTolerance = 1e-9;

void CheckEpsilons(std::span<const double> epsilons) {
  if (epsilons.empty()) throw DomainError("empty privacy parameter vector");
  for (double e : epsilons) {
    if (!(e >= 0) || !std::isfinite(e)) {
      throw DomainError("privacy parameters must be finite and non-negative");
    }
  }
}

int GridUnits(double grid_step) {
  if (!(grid_step > 0) || grid_step > 1) throw DomainError("grid step must be in (0, 1]");
  const double units = 1.0 / grid_step;
  const long rounded = std::lround(units);
  if (std::abs(units - static_cast<double>(rounded)) > 1e-9 * units) {
    throw DomainError("grid step must divide 1");
  }
  return static_cast<int>(rounded);
}

// Visits every composition of `units` into `n` non-negative parts,
// optionally forcing parts with allowed[i] == false to zero.
void ForEachGridPoint(size_t n, int units, const std::vector<bool>& allowed,
                      const std::function<void(const std::vector<int>&)>& visit) {
  std::vector<int> parts(n, 0);
  std::function<void(size_t, int)> rec = [&](size_t i, int remaining) {
    if (i + 1 == n) {
      if (remaining > 0 && !allowed[i]) return;
      parts[i] = remaining;
      visit(parts);
      return;
    }
    const int hi = allowed[i] ? remaining : 0;
    for (int k = 0; k <= hi; ++k) {
      parts[i] = k;
      rec(i + 1, remaining - k);
    }
  };
  rec(0, units);
}

template <typename Objective>
GridMinimum GridSearch(size_t n, double grid_step, const std::vector<bool>& allowed,
                       Objective objective) {
  if (n > 4) throw DomainError("brute-force simplex search limited to n <= 4");
  const int units = GridUnits(grid_step);
  std::vector<double> best;
  ExtendedReal best_value = kPositiveInfinity;
  std::vector<double> lambdas(n);
  ForEachGridPoint(n, units, allowed, [&](const std::vector<int>& parts) {
    for (size_t i = 0; i < n; ++i) lambdas[i] = static_cast<double>(parts[i]) / units;
    const ExtendedReal v = objective(AggregationWeights(lambdas));
    if (best.empty() || v < best_value) {
      best = lambdas;
      best_value = v;
    }
  });
  if (best.empty()) throw EmptyWinnerSet();
  return GridMinimum{AggregationWeights(best), best_value};
}

}  // namespace

AggregationWeights::AggregationWeights(std::vector<double> lambdas)
    : lambdas_(std::move(lambdas)) {
  if (lambdas_.empty()) throw DomainError("empty aggregation weights");
  double sum = 0;
  for (double l : lambdas_) {
    if (!(l >= -kSimplexTolerance && l <= 1 + kSimplexTolerance)) {
      throw DomainError("aggregation weight outside [0, 1]");
    }
    sum += l;
  }
  if (std::abs(sum - 1.0) > kSimplexTolerance) {
    throw DomainError("aggregation weights must sum to 1");
  }
}

std::string_view AggregatorName(Aggregator a) {
  return a == Aggregator::kBiasOpt ? "biasopt" : "varopt";
}

Aggregator ParseAggregator(std::string_view name) {
  if (name == "biasopt") return Aggregator::kBiasOpt;
  if (name == "varopt") return Aggregator::kVarOpt;
  throw ParseError("aggregator must be 'biasopt' or 'varopt', got '" +
                   std::string(name) + "'");
}

AggregationWeights BiasOpt(std::span<const double> epsilons) {
  CheckEpsilons(epsilons);
  const size_t n = epsilons.size();
  std::vector<double> lambdas(n, 0.0);
  size_t winners = 0;
  size_t top = n;
  for (size_t i = 0; i < n; ++i) {
    if (epsilons[i] <= 0) continue;
    ++winners;
    lambdas[i] = 1.0 / static_cast<double>(n);
    if (top == n || epsilons[i] > epsilons[top]) top = i;
  }
  if (winners == 0) throw EmptyWinnerSet();
  lambdas[top] = 1.0 - static_cast<double>(winners - 1) / static_cast<double>(n);
  return AggregationWeights(std::move(lambdas));
}

AggregationWeights VarOpt(std::span<const double> epsilons) {
  CheckEpsilons(epsilons);
  // 1/v_i = eps_i^2 / (8 L^2); the constant cancels in the normalization.
  double total = 0;
  for (double e : epsilons) total += e * e;
  if (!(total > 0)) throw EmptyWinnerSet();
  std::vector<double> lambdas(epsilons.size());
  for (size_t i = 0; i < epsilons.size(); ++i) {
    lambdas[i] = epsilons[i] * epsilons[i] / total;
  }
  return AggregationWeights(std::move(lambdas));
}

AggregationWeights ComputeWeights(Aggregator a, std::span<const double> epsilons) {
  return a == Aggregator::kBiasOpt ? BiasOpt(epsilons) : VarOpt(epsilons);
}

double BiasBound(const AggregationWeights& lambdas, ClipBound bound) {
  const double uniform = 1.0 / static_cast<double>(lambdas.size());
  double sum = 0;
  for (double l : lambdas.values()) sum += std::abs(l - uniform);
  return sum * bound.value();
}

ExtendedReal VarBound(const AggregationWeights& lambdas,
                      std::span<const double> epsilons, ClipBound bound) {
  if (lambdas.size() != epsilons.size()) {
    throw ShapeError("weights and privacy parameters differ in length");
  }
  CheckEpsilons(epsilons);
  double sum = 0;
  for (size_t i = 0; i < lambdas.size(); ++i) {
    if (lambdas[i] <= 0) continue;
    if (epsilons[i] <= 0) return kPositiveInfinity;
    const double r = lambdas[i] * bound.value() / epsilons[i];
    sum += 8.0 * r * r;
  }
  return sum;
}

ExtendedReal ErrBound(const AggregationWeights& lambdas,
                      std::span<const double> epsilons, ClipBound bound) {
  const ExtendedReal var = VarBound(lambdas, epsilons, bound);
  if (!var.is_finite()) return var;
  const double bias = BiasBound(lambdas, bound);
  return var.value() + bias * bias;
}

ExtendedReal VarOptVarianceBound(std::span<const double> epsilons, ClipBound bound) {
  CheckEpsilons(epsilons);
  double total = 0;
  for (double e : epsilons) total += e * e;
  if (!(total > 0)) return kPositiveInfinity;
  return 8.0 * bound.value() * bound.value() / total;
}

double VarOptErrorWithGradient(std::span<const double> epsilons, ClipBound bound,
                               std::span<double> grad) {
  const size_t n = epsilons.size();
  if (grad.size() != n) throw ShapeError("gradient buffer has the wrong length");
  const double l2 = bound.value() * bound.value();
  double s = 0;
  for (double e : epsilons) s += e * e;
  if (!(s > 0)) throw EmptyWinnerSet();

  const double uniform = 1.0 / static_cast<double>(n);
  double abs_dev = 0;
  double signed_mass = 0;  // sum_i sign(lambda_i - 1/n) lambda_i
  std::vector<double> sign(n);
  for (size_t i = 0; i < n; ++i) {
    const double lambda = epsilons[i] * epsilons[i] / s;
    const double d = lambda - uniform;
    sign[i] = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
    abs_dev += std::abs(d);
    signed_mass += sign[i] * lambda;
  }
  // d lambda_i / d eps_j = (2 eps_j / s) (delta_ij - lambda_i)
  for (size_t j = 0; j < n; ++j) {
    const double dvar = -16.0 * l2 * epsilons[j] / (s * s);
    const double dabs = 2.0 * epsilons[j] / s * (sign[j] - signed_mass);
    grad[j] = dvar + 2.0 * l2 * abs_dev * dabs;
  }
  return 8.0 * l2 / s + l2 * abs_dev * abs_dev;
}

GradientVector Aggregate(const AggregationWeights& lambdas,
                         std::span<const GradientVector> noisy_gradients) {
  if (lambdas.size() != noisy_gradients.size()) {
    throw ShapeError("one noisy gradient per weight is required");
  }
  const Eigen::Index d = noisy_gradients.front().size();
  GradientVector out = GradientVector::Zero(d);
  for (size_t i = 0; i < lambdas.size(); ++i) {
    if (noisy_gradients[i].size() != d) {
      throw ShapeError("noisy gradients differ in dimension");
    }
    out += lambdas[i] * noisy_gradients[i];
  }
  return out;
}

GridMinimum BruteForceMinVariance(std::span<const double> epsilons,
                                  ClipBound bound, double grid_step) {
  CheckEpsilons(epsilons);
  const std::vector<bool> allowed(epsilons.size(), true);
  return GridSearch(epsilons.size(), grid_step, allowed,
                    [&](const AggregationWeights& w) {
                      return VarBound(w, epsilons, bound);
                    });
}

GridMinimum BruteForceMinBias(std::span<const double> epsilons, ClipBound bound,
                              double grid_step) {
  CheckEpsilons(epsilons);
  std::vector<bool> allowed(epsilons.size());
  for (size_t i = 0; i < epsilons.size(); ++i) allowed[i] = epsilons[i] > 0;
  return GridSearch(epsilons.size(), grid_step, allowed,
                    [&](const AggregationWeights& w) {
                      return ExtendedReal(BiasBound(w, bound));
                    });
}

}  // namespace flmarket
