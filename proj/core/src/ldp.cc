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

#include "flmarket/ldp.h"

#include <cmath>

#include "flmarket/errors.h"

namespace flmarket {

ClipBound::ClipBound(double l1_cap) : l1_cap_(l1_cap) {
  if (!(l1_cap > 0) || !std::isfinite(l1_cap)) {
    throw DomainError("clip bound L must be positive and finite");
  }
}

GradientVector ClipGradient(const GradientVector& g, ClipBound bound) {
  if (!g.allFinite()) throw DomainError("gradient has non-finite entries");
  const double norm = g.lpNorm<1>();
  if (norm <= bound.value()) return g;
  return g * (bound.value() / norm);
}

double LaplaceScale(double eps, ClipBound bound) {
  if (!(eps > 0)) throw DomainError("Laplace mechanism needs eps > 0");
  return 2.0 * bound.value() / eps;
}

GradientVector LaplacePerturb(const GradientVector& g, double eps,
                              ClipBound bound, Rng& rng) {
  const double scale = LaplaceScale(eps, bound);
  GradientVector out = g;
  for (Eigen::Index j = 0; j < out.size(); ++j) out[j] += rng.Laplace(scale);
  return out;
}

double PerCoordinateVariance(double eps, ClipBound bound) {
  const double b = LaplaceScale(eps, bound);
  return 2.0 * b * b;
}

}  // namespace flmarket
