// Copyright 2026 The GSBA Authors.
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

#ifndef GSBA_ERRORS_H_
#define GSBA_ERRORS_H_

#include <stdexcept>
#include <string>

namespace gsba {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unknown dataset id, missing or corrupt files.
class DatasetError : public Error {
 public:
  using Error::Error;
};

// Architecture and input shape do not fit together.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

// A charged oracle query would exceed the training-time query budget.
class BudgetExhausted : public Error {
 public:
  using Error::Error;
};

// A loss went non-finite during training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or argument (bad epsilon, target == label, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace gsba

#endif  // GSBA_ERRORS_H_
