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

#ifndef FLMARKET_LDP_H_
#define FLMARKET_LDP_H_

#include <Eigen/Core>

#include "flmarket/rng.h"

namespace flmarket {

using GradientVector = Eigen::VectorXd;

// L1-norm cap applied to local gradients before perturbation.
class ClipBound {
 public:
  explicit ClipBound(double l1_cap);
  double value() const { return l1_cap_; }

 private:
  double l1_cap_;
};

// g * min(1, L / ||g||_1). Gradients already inside the ball are returned
// unchanged (bit-exact).
GradientVector ClipGradient(const GradientVector& g, ClipBound bound);

// Laplace mechanism: g + z with z_j ~ Lap(2L/eps) i.i.d. The caller clips
// first; eps must be positive.
GradientVector LaplacePerturb(const GradientVector& g, double eps,
                              ClipBound bound, Rng& rng);

// Laplace scale 2L/eps used by LaplacePerturb.
double LaplaceScale(double eps, ClipBound bound);

// Per-coordinate variance of the perturbed gradient, 2 (2L/eps)^2.
double PerCoordinateVariance(double eps, ClipBound bound);

}  // namespace flmarket

#endif  // FLMARKET_LDP_H_
