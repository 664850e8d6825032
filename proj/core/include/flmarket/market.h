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

#ifndef FLMARKET_MARKET_H_
#define FLMARKET_MARKET_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "flmarket/extended_real.h"
#include "flmarket/rng.h"

namespace flmarket {

enum class ValuationFamily { kLinear, kQuadratic, kSquareRoot, kExponential, kStep };

std::string_view FamilyName(ValuationFamily family);
ValuationFamily ParseFamily(std::string_view name);

// Privacy valuation v(eps): money an owner asks for privacy loss eps.
//
//   Linear       scale * 2 eps
//   Quadratic    scale * eps^2
//   SquareRoot   scale * 2 sqrt(eps)
//   Exponential  scale * (exp(eps) - 1)
//   Step         0 at eps == 0, scale for eps > 0
//
// Every family is non-decreasing with v(0) = 0.
class ValuationFunction {
 public:
  ValuationFunction(ValuationFamily family, double scale);

  static ValuationFunction Step(double value) {
    return ValuationFunction(ValuationFamily::kStep, value);
  }

  ValuationFamily family() const { return family_; }
  double scale() const { return scale_; }
  bool is_step() const { return family_ == ValuationFamily::kStep; }

  double operator()(double eps) const;

  // dv/deps. Step functions report 0. For the square root the slope at
  // eps == 0 is unbounded; callers get the slope at `kMinSlopeEps` instead.
  double Derivative(double eps) const;

  static constexpr double kMinSlopeEps = 1e-6;

  friend bool operator==(const ValuationFunction&, const ValuationFunction&) = default;

 private:
  ValuationFamily family_;
  double scale_;
};

double EvalValuation(const ValuationFunction& f, double eps);

struct Bid {
  ValuationFunction valuation;
  double privacy_budget;

  friend bool operator==(const Bid&, const Bid&) = default;
};

// Validates the budget and returns the bid.
Bid MakeBid(ValuationFunction valuation, double privacy_budget);

class BidProfile {
 public:
  explicit BidProfile(std::vector<Bid> bids);

  size_t size() const { return bids_.size(); }
  const Bid& operator[](size_t i) const { return bids_[i]; }
  const std::vector<Bid>& bids() const { return bids_; }

  // Copy of this profile with owner i's bid replaced.
  BidProfile WithBid(size_t i, Bid bid) const;

  friend bool operator==(const BidProfile&, const BidProfile&) = default;

 private:
  std::vector<Bid> bids_;
};

struct AuctionOutcome {
  std::vector<double> epsilons;
  std::vector<double> payments;

  size_t size() const { return epsilons.size(); }
  double TotalPayment() const;
  size_t NumWinners() const;
  bool empty_winner_set() const { return NumWinners() == 0; }
};

struct MarketConfig {
  int n = 10;
  double budget = 20.0;
  // Upper end E of the privacy-budget draw.
  double sensitivity = 5.0;
  double alpha_low = 0.5;
  double alpha_high = 1.5;
  double budget_range_low = 0.5;
  uint64_t seed = 0;

  void Validate() const;
};

// The two privacy-sensitivity scenarios used throughout the experiments.
inline constexpr double kLowSensitivityE = 5.0;
inline constexpr double kHighSensitivityE = 2.0;
double ScenarioSensitivity(std::string_view scenario);

// Payment minus valuation when eps fits in the owner's true budget,
// -infinity otherwise.
ExtendedReal OwnerUtility(const Bid& true_bid, double eps, double payment);

// Draws n owners: family uniform over the four continuous families, rate
// uniform on [alpha_low, alpha_high], budget uniform on
// [budget_range_low, sensitivity].
BidProfile GenerateBidProfile(const MarketConfig& cfg, Rng& rng);

// Single-minded view of a bid: a step valuation worth v(budget).
Bid ToSingleMinded(const Bid& bid);
BidProfile ToSingleMinded(const BidProfile& profile);

}  // namespace flmarket

#endif  // FLMARKET_MARKET_H_
