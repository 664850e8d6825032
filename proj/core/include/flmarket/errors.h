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

#ifndef FLMARKET_ERRORS_H_
#define FLMARKET_ERRORS_H_

#include <stdexcept>
#include <string>

namespace flmarket {

// Argument outside the mathematical domain of an operation (negative
// privacy parameter, non-positive clip bound, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Vector/matrix shapes that do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An aggregation rule was asked for weights when every privacy parameter
// is zero.
class EmptyWinnerSet : public std::runtime_error {
 public:
  EmptyWinnerSet() : std::runtime_error("no owner has a positive privacy parameter") {}
};

// Malformed input files (CSV, checkpoints, configs).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training diverged (non-finite objective).
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace flmarket

#endif  // FLMARKET_ERRORS_H_
