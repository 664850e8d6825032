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

#ifndef FLMARKET_RNG_H_
#define FLMARKET_RNG_H_

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace flmarket {

// splitmix64 finalizer; used to derive independent stream seeds.
constexpr uint64_t MixSeed(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for a sub-stream identified by a path of integers, e.g.
// DeriveSeed(run_seed, {round, owner}).
constexpr uint64_t DeriveSeed(uint64_t seed, std::initializer_list<uint64_t> path) {
  uint64_t s = MixSeed(seed);
  for (uint64_t p : path) s = MixSeed(s ^ MixSeed(p + 0x632be59bd9b4e019ULL));
  return s;
}

// Seedable random source. Draws are built from raw 64-bit engine output
// so sequences do not depend on the standard library's distributions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t NextBits() { return engine_(); }

  // Uniform on the open interval (0, 1).
  double UniformOpen() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform on [lo, hi].
  double Uniform(double lo, double hi) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

  // Uniform integer in [0, n).
  uint64_t UniformIndex(uint64_t n) {
    return static_cast<uint64_t>(
        static_cast<double>(engine_() >> 11) * 0x1.0p-53 * static_cast<double>(n));
  }

  // Laplace(0, scale) by inverting the CDF on an open-interval uniform.
  double Laplace(double scale) {
    const double u = UniformOpen() - 0.5;
    return u < 0 ? scale * std::log1p(2.0 * u) : -scale * std::log1p(-2.0 * u);
  }

  // Standard normal via Box-Muller (cosine branch only).
  double Gaussian() {
    const double u1 = UniformOpen();
    const double u2 = UniformOpen();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace flmarket

#endif  // FLMARKET_RNG_H_
