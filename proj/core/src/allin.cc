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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flmarket/errors.h"

namespace flmarket {

AuctionOutcome AllIn(const BidProfile& profile, double budget, AllInTrace* trace) {
  if (!(budget > 0) || !std::isfinite(budget)) {
    throw DomainError("All-in needs a positive financial budget");
  }
  const size_t n = profile.size();
  std::vector<double> unit(n);
  for (size_t i = 0; i < n; ++i) {
    const Bid& b = profile[i];
    if (!b.valuation.is_step()) throw DomainError("All-in takes single-minded bids only");
    if (!(b.privacy_budget > 0)) throw DomainError("All-in bids need a positive privacy budget");
    if (!(b.valuation.scale() > 0)) throw DomainError("All-in bids need a positive value");
    unit[i] = b.valuation.scale() / b.privacy_budget;
  }

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return unit[a] < unit[b]; });

  std::vector<size_t> winners;
  std::optional<size_t> rejected;
  double admitted = 0;
  for (size_t i : order) {
    const double with_i = admitted + profile[i].privacy_budget;
    if (unit[i] <= budget / with_i) {
      winners.push_back(i);
      admitted = with_i;
    } else {
      rejected = i;
      break;
    }
  }

  AuctionOutcome out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  double unit_payment = 0;
  if (!winners.empty()) {
    unit_payment = budget / admitted;
    if (rejected) unit_payment = std::min(unit_payment, unit[*rejected]);
    for (size_t i : winners) {
      out.epsilons[i] = profile[i].privacy_budget;
      out.payments[i] = profile[i].privacy_budget * unit_payment;
    }
  }

  if (trace != nullptr) {
    trace->unit_valuations = std::move(unit);
    trace->order = std::move(order);
    trace->winners = std::move(winners);
    trace->first_rejected = rejected;
    trace->unit_payment = unit_payment;
  }
  return out;
}

}  // namespace flmarket
