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

#include "flmarket/market.h"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "flmarket/errors.h"

namespace flmarket {

std::string_view FamilyName(ValuationFamily family) {
  switch (family) {
    case ValuationFamily::kLinear:
      return "linear";
    case ValuationFamily::kQuadratic:
      return "quadratic";
    case ValuationFamily::kSquareRoot:
      return "sqrt";
    case ValuationFamily::kExponential:
      return "exp";
    case ValuationFamily::kStep:
      return "step";
  }
  return "?";
}

ValuationFamily ParseFamily(std::string_view name) {
  for (auto f : {ValuationFamily::kLinear, ValuationFamily::kQuadratic,
                 ValuationFamily::kSquareRoot, ValuationFamily::kExponential,
                 ValuationFamily::kStep}) {
    if (FamilyName(f) == name) return f;
  }
  throw ParseError("unknown valuation family '" + std::string(name) + "'");
}

ValuationFunction::ValuationFunction(ValuationFamily family, double scale)
    : family_(family), scale_(scale) {
  // Step valuations of zero arise from single-minded views of a zero
  // budget; continuous families need a positive rate.
  if (!std::isfinite(scale) || scale < 0 ||
      (scale == 0 && family != ValuationFamily::kStep)) {
    throw DomainError("valuation scale must be positive");
  }
}

double ValuationFunction::operator()(double eps) const {
  if (!(eps >= 0)) throw DomainError("valuation evaluated at negative eps");
  switch (family_) {
    case ValuationFamily::kLinear:
      return scale_ * 2.0 * eps;
    case ValuationFamily::kQuadratic:
      return scale_ * eps * eps;
    case ValuationFamily::kSquareRoot:
      return scale_ * 2.0 * std::sqrt(eps);
    case ValuationFamily::kExponential:
      return scale_ * std::expm1(eps);
    case ValuationFamily::kStep:
      return eps > 0 ? scale_ : 0.0;
  }
  return 0.0;
}

double ValuationFunction::Derivative(double eps) const {
  if (!(eps >= 0)) throw DomainError("valuation slope at negative eps");
  switch (family_) {
    case ValuationFamily::kLinear:
      return scale_ * 2.0;
    case ValuationFamily::kQuadratic:
      return scale_ * 2.0 * eps;
    case ValuationFamily::kSquareRoot:
      return scale_ / std::sqrt(std::max(eps, kMinSlopeEps));
    case ValuationFamily::kExponential:
      return scale_ * std::exp(eps);
    case ValuationFamily::kStep:
      return 0.0;
  }
  return 0.0;
}

double EvalValuation(const ValuationFunction& f, double eps) { return f(eps); }

Bid MakeBid(ValuationFunction valuation, double privacy_budget) {
  if (!(privacy_budget >= 0) || !std::isfinite(privacy_budget)) {
    throw DomainError("privacy budget must be finite and non-negative");
  }
  return Bid{valuation, privacy_budget};
}

BidProfile::BidProfile(std::vector<Bid> bids) : bids_(std::move(bids)) {
  if (bids_.empty()) throw DomainError("bid profile needs at least one bid");
  for (const Bid& b : bids_) {
    if (!(b.privacy_budget >= 0)) throw DomainError("negative privacy budget");
  }
}

BidProfile BidProfile::WithBid(size_t i, Bid bid) const {
  std::vector<Bid> copy = bids_;
  copy.at(i) = bid;
  return BidProfile(std::move(copy));
}

double AuctionOutcome::TotalPayment() const {
  double total = 0;
  for (double p : payments) total += p;
  return total;
}

size_t AuctionOutcome::NumWinners() const {
  size_t w = 0;
  for (double e : epsilons) w += e > 0 ? 1 : 0;
  return w;
}

void MarketConfig::Validate() const {
  if (n < 1) throw DomainError("market needs n >= 1");
  if (!(budget > 0)) throw DomainError("financial budget must be positive");
  if (!(sensitivity > 0)) throw DomainError("sensitivity E must be positive");
  if (!(budget_range_low >= 0) || !(budget_range_low < sensitivity)) {
    throw DomainError("privacy budget range must satisfy 0 <= low < E");
  }
  if (!(alpha_low > 0) || !(alpha_low <= alpha_high)) {
    throw DomainError("alpha range must be a positive interval");
  }
}

double ScenarioSensitivity(std::string_view scenario) {
  if (scenario == "low") return kLowSensitivityE;
  if (scenario == "high") return kHighSensitivityE;
  throw ParseError("scenario must be 'low' or 'high'");
}

ExtendedReal OwnerUtility(const Bid& true_bid, double eps, double payment) {
  if (!(eps >= 0)) throw DomainError("negative privacy parameter");
  if (!std::isfinite(payment)) throw DomainError("payment must be finite");
  if (eps > true_bid.privacy_budget) return kNegativeInfinity;
  return payment - true_bid.valuation(eps);
}

BidProfile GenerateBidProfile(const MarketConfig& cfg, Rng& rng) {
  cfg.Validate();
  static constexpr ValuationFamily kContinuous[] = {
      ValuationFamily::kLinear, ValuationFamily::kQuadratic,
      ValuationFamily::kSquareRoot, ValuationFamily::kExponential};
  std::vector<Bid> bids;
  bids.reserve(cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    const ValuationFamily family = kContinuous[rng.UniformIndex(4)];
    const double alpha = rng.Uniform(cfg.alpha_low, cfg.alpha_high);
    const double budget = rng.Uniform(cfg.budget_range_low, cfg.sensitivity);
    bids.push_back(Bid{ValuationFunction(family, alpha), budget});
  }
  return BidProfile(std::move(bids));
}

Bid ToSingleMinded(const Bid& bid) {
  if (bid.valuation.is_step()) return bid;
  return Bid{ValuationFunction::Step(bid.valuation(bid.privacy_budget)),
             bid.privacy_budget};
}

BidProfile ToSingleMinded(const BidProfile& profile) {
  std::vector<Bid> bids;
  bids.reserve(profile.size());
  for (const Bid& b : profile.bids()) bids.push_back(ToSingleMinded(b));
  return BidProfile(std::move(bids));
}

}  // namespace flmarket
