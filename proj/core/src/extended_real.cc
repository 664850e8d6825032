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

#include "flmarket/extended_real.h"

#include <limits>
#include <sstream>
#include <stdexcept>

namespace flmarket {

double ExtendedReal::value() const {
  if (kind_ != Kind::kFinite) {
    throw std::logic_error("value() on an infinite ExtendedReal");
  }
  return value_;
}

double ExtendedReal::ToDouble() const {
  switch (kind_) {
    case Kind::kNegativeInfinity:
      return -std::numeric_limits<double>::infinity();
    case Kind::kPositiveInfinity:
      return std::numeric_limits<double>::infinity();
    case Kind::kFinite:
      break;
  }
  return value_;
}

std::string ExtendedReal::ToString() const {
  switch (kind_) {
    case Kind::kNegativeInfinity:
      return "-inf";
    case Kind::kPositiveInfinity:
      return "inf";
    case Kind::kFinite:
      break;
  }
  std::ostringstream os;
  os.precision(17);
  os << value_;
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const ExtendedReal& x) {
  return os << x.ToString();
}

}  // namespace flmarket
