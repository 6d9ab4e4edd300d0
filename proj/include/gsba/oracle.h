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

#ifndef GSBA_ORACLE_H_
#define GSBA_ORACLE_H_

#include <torch/torch.h>

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "gsba/models.h"

namespace gsba {

// Counts target queries, one image = one query. `used` only grows and never
// passes the budget; verification queries are tallied separately and are
// never charged.
class QueryLedger {
 public:
  // std::nullopt means unlimited.
  explicit QueryLedger(std::optional<int64_t> budget = std::nullopt);

  // Charges n queries or throws BudgetExhausted without changing `used`.
  void charge(int64_t n);
  void record_verification(int64_t n);

  int64_t used() const;
  std::optional<int64_t> budget() const { return budget_; }
  // Remaining budget; INT64_MAX when unlimited.
  int64_t remaining() const;
  int64_t verification_queries() const { return verification_.load(); }

 private:
  const std::optional<int64_t> budget_;
  mutable std::mutex mu_;
  int64_t used_ = 0;
  std::atomic<int64_t> verification_{0};
};

enum class ResponseMode { kProbability, kLabel };

ResponseMode parse_response_mode(std::string_view name);  // "P" | "L"
std::string_view to_string(ResponseMode mode);

struct ProbabilityResponse {
  torch::Tensor probabilities;  // (N, C), rows sum to 1
};

struct LabelResponse {
  torch::Tensor labels;  // (N) int64
};

using OracleResponse = std::variant<ProbabilityResponse, LabelResponse>;

// Hard labels of any response (argmax of the probabilities in P-mode).
torch::Tensor response_labels(const OracleResponse& response);

enum class Charge { kTraining, kVerification };

// The only channel to the target. Returns detached tensors; the wrapped model
// and its gradients are not reachable from this type.
class BlackBoxOracle {
 public:
  BlackBoxOracle(ClassifierModel target, ResponseMode mode, std::shared_ptr<QueryLedger> ledger);

  OracleResponse query(const torch::Tensor& pixels, Charge charge = Charge::kTraining) const;

  ResponseMode mode() const { return mode_; }
  int64_t num_classes() const { return target_.num_classes; }
  const QueryLedger& ledger() const { return *ledger_; }

 private:
  ClassifierModel target_;
  ResponseMode mode_;
  std::shared_ptr<QueryLedger> ledger_;
};

}  // namespace gsba

#endif  // GSBA_ORACLE_H_
