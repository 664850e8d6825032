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

#ifndef FLMARKET_EXTENDED_REAL_H_
#define FLMARKET_EXTENDED_REAL_H_

#include <compare>
#include <ostream>
#include <string>

namespace flmarket {

// A real number extended with the two infinities. Utilities of infeasible
// allocations are -inf and variance bounds of zero-privacy winners are
// +inf; both take part in comparisons but never in arithmetic, so there is
// no operator+ on purpose.
class ExtendedReal {
 public:
  enum class Kind { kNegativeInfinity = 0, kFinite = 1, kPositiveInfinity = 2 };

  constexpr ExtendedReal() = default;
  constexpr ExtendedReal(double value) : value_(value) {}  // NOLINT: implicit

  static constexpr ExtendedReal NegativeInfinity() {
    return ExtendedReal(Kind::kNegativeInfinity);
  }
  static constexpr ExtendedReal PositiveInfinity() {
    return ExtendedReal(Kind::kPositiveInfinity);
  }

  constexpr Kind kind() const { return kind_; }
  constexpr bool is_finite() const { return kind_ == Kind::kFinite; }
  constexpr bool is_positive_infinity() const {
    return kind_ == Kind::kPositiveInfinity;
  }
  constexpr bool is_negative_infinity() const {
    return kind_ == Kind::kNegativeInfinity;
  }

  // Only valid for finite values; throws std::logic_error otherwise.
  double value() const;

  // IEEE representation, for CSV output and plotting only.
  double ToDouble() const;
  std::string ToString() const;

  friend constexpr bool operator==(const ExtendedReal& a,
                                   const ExtendedReal& b) {
    return a.kind_ == b.kind_ && (a.kind_ != Kind::kFinite || a.value_ == b.value_);
  }
  friend constexpr std::partial_ordering operator<=>(const ExtendedReal& a,
                                                     const ExtendedReal& b) {
    if (a.kind_ != b.kind_) return a.kind_ <=> b.kind_;
    if (a.kind_ != Kind::kFinite) return std::partial_ordering::equivalent;
    return a.value_ <=> b.value_;
  }

 private:
  constexpr explicit ExtendedReal(Kind kind) : kind_(kind) {}

  Kind kind_ = Kind::kFinite;
  double value_ = 0.0;
};

std::ostream& operator<<(std::ostream& os, const ExtendedReal& x);

inline constexpr ExtendedReal kNegativeInfinity = ExtendedReal::NegativeInfinity();
inline constexpr ExtendedReal kPositiveInfinity = ExtendedReal::PositiveInfinity();

}  // namespace flmarket

#endif  // FLMARKET_EXTENDED_REAL_H_
