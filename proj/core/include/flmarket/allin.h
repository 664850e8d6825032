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

#ifndef FLMARKET_ALLIN_H_
#define FLMARKET_ALLIN_H_

#include <optional>
#include <vector>

#include "flmarket/market.h"

namespace flmarket {

// Diagnostic view of one All-in run.
struct AllInTrace {
  std::vector<double> unit_valuations;
  // Owners in the order they were scanned (ascending unit valuation, ties
  // by index).
  std::vector<size_t> order;
  std::vector<size_t> winners;
  // First owner whose unit valuation failed the budget test, if any.
  std::optional<size_t> first_rejected;
  double unit_payment = 0;
};

// Single-minded budget-feasible auction.
//
// Owners are scanned by ascending unit valuation V'/eps', and each one is
// admitted while its unit valuation does not exceed B divided by the
// admitted budgets including its own. The scan stops at the first owner
// that fails. Winners sell their whole reported budget at the uniform
// unit price
//
//   p_unit = min(B / sum_{j in W} eps'_j, unit valuation of the first rejected owner),
//
// which is each winner's critical value: reporting a unit valuation above
// p_unit loses the auction. Total payment never exceeds B, and equals B when
// nobody is rejected.
//
// Every bid must use a step valuation with positive value and budget.
AuctionOutcome AllIn(const BidProfile& profile, double budget,
                     AllInTrace* trace = nullptr);

}  // namespace flmarket

#endif  // FLMARKET_ALLIN_H_
