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

#include "gsba/oracle.h"

#include <limits>

#include "gsba/errors.h"

namespace gsba {

QueryLedger::QueryLedger(std::optional<int64_t> budget) : budget_(budget) {
  if (budget_ && *budget_ < 0) throw InvalidArgument("query budget must be non-negative");
}

void QueryLedger::charge(int64_t n) {
  if (n < 0) throw InvalidArgument("cannot charge a negative number of queries");
  std::lock_guard lock(mu_);
  if (budget_ && used_ + n > *budget_) {
    throw BudgetExhausted("query budget exhausted: used " + std::to_string(used_) + " + " +
                          std::to_string(n) + " > " + std::to_string(*budget_));
  }
  used_ += n;
}

void QueryLedger::record_verification(int64_t n) { verification_.fetch_add(n); }

int64_t QueryLedger::used() const {
  std::lock_guard lock(mu_);
  return used_;
}

int64_t QueryLedger::remaining() const {
  if (!budget_) return std::numeric_limits<int64_t>::max();
  std::lock_guard lock(mu_);
  return *budget_ - used_;
}

ResponseMode parse_response_mode(std::string_view name) {
  if (name == "P" || name == "p" || name == "probability") return ResponseMode::kProbability;
  if (name == "L" || name == "l" || name == "label") return ResponseMode::kLabel;
  throw InvalidArgument("unknown oracle mode: '" + std::string(name) + "' (expected P or L)");
}

std::string_view to_string(ResponseMode mode) { return mode == ResponseMode::kProbability ? "P" : "L"; }

torch::Tensor response_labels(const OracleResponse& response) {
  if (const auto* p = std::get_if<ProbabilityResponse>(&response)) return p->probabilities.argmax(1);
  return std::get<LabelResponse>(response).labels;
}

BlackBoxOracle::BlackBoxOracle(ClassifierModel target, ResponseMode mode,
                               std::shared_ptr<QueryLedger> ledger)
    : target_(std::move(target)), mode_(mode), ledger_(std::move(ledger)) {
  if (!target_.net) throw InvalidArgument("oracle needs a target model");
  if (!ledger_) throw InvalidArgument("oracle needs a query ledger");
  target_.net->eval();
}

OracleResponse BlackBoxOracle::query(const torch::Tensor& pixels, Charge charge) const {
  const int64_t n = pixels.size(0);
  if (charge == Charge::kTraining) {
    ledger_->charge(n);
  } else {
    ledger_->record_verification(n);
  }
  torch::NoGradGuard no_grad;
  auto logits = target_.net->forward(pixels.detach());
  if (mode_ == ResponseMode::kProbability) return ProbabilityResponse{torch::softmax(logits, 1)};
  return LabelResponse{logits.argmax(1)};
}

}  // namespace gsba
