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

#ifndef GSBA_EVAL_H_
#define GSBA_EVAL_H_

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gsba/attack.h"
#include "gsba/data.h"
#include "gsba/experiment.h"
#include "gsba/models.h"
#include "gsba/oracle.h"
#include "gsba/surrogate.h"
#include "json.hpp"

namespace gsba {

inline constexpr int kHistogramBins = 10;

// Bin of `steps` when [1, max_steps] is split into kHistogramBins equal,
// left-closed intervals. Steps above max_steps land in the last bin.
int histogram_bin(int64_t steps, int64_t max_steps);

struct ExperimentReport {
  std::string method;
  nlohmann::json config;
  std::vector<AttackOutcome> outcomes;
  int64_t claimed_successes = 0;
  int64_t verified_successes = 0;
  double asr = 0.0;
  // Mean reported steps over verified successes; empty when there are none.
  std::optional<double> avg_steps;
  int64_t histogram_max_steps = 1;
  std::array<int64_t, kHistogramBins> step_histogram{};
  int64_t training_queries = 0;
  std::optional<int64_t> training_budget;
  int64_t attack_queries = 0;
  int64_t verification_queries = 0;
  double wall_seconds = 0.0;
};

// Re-checks every claimed success: the adversarial image must lie within
// delta (+1e-6) of the original in l_inf and inside [0,1], and the live
// oracle (uncharged) must answer a label other than the original
// (untargeted) or the target class (targeted). Unverified claims become
// failures. Never throws for attack failures.
ExperimentReport verify_and_score(const BlackBoxOracle& oracle, std::vector<AttackOutcome> outcomes,
                                  double delta, int64_t histogram_max_steps);

// What every experiment needs besides its config.
struct ExperimentInputs {
  ClassifierModel target;
  std::string target_id;
  ImageBatch attacker_data;  // real samples for the discriminator
  EvalSet eval;
};

// Loads or trains the target and draws the evaluation set, following `config`.
ExperimentInputs prepare_inputs(const ExperimentConfig& config);

// Trains a surrogate against a fresh oracle holding `budget` queries.
SurrogateBundle train_for_experiment(const ExperimentInputs& inputs, const ExperimentConfig& config,
                                     SurrogateVariant variant, int64_t budget,
                                     const TrainingCallback& on_record = {});

// GSBA over the eval set with a trained bundle, then verify_and_score.
ExperimentReport evaluate_gsba(const SurrogateBundle& bundle, const ExperimentInputs& inputs,
                               const ExperimentConfig& config);

enum class TransferMethod { kFgsm, kBim, kPgd, kCw };

TransferMethod parse_transfer_method(std::string_view name);  // fgsm|bim|pgd|cw
std::string_view to_string(TransferMethod method);

// Runs a white-box attack against S and submits each iterate to the live
// oracle (uncharged) until it is fooled; the reported step is the first
// fooling iterate.
ExperimentReport run_surrogate_transfer(const SurrogateBundle& bundle,
                                        const ExperimentInputs& inputs,
                                        const ExperimentConfig& config, TransferMethod method);

// run_surrogate_transfer with PGD.
ExperimentReport run_baseline_surrogate_pgd(const SurrogateBundle& bundle,
                                            const ExperimentInputs& inputs,
                                            const ExperimentConfig& config);

struct AblationRun {
  SurrogateBundle bundle;
  ExperimentReport report;
};

// One train + attack + score cycle for `variant` under the config's seed and
// budget.
AblationRun run_ablation(SurrogateVariant variant, const ExperimentInputs& inputs,
                         const ExperimentConfig& config);

struct SweepPoint {
  double fraction = 1.0;
  int64_t budget = 0;
  ExperimentReport report;
};

// Fresh full-method surrogate per fraction at round(budget * fraction)
// queries; points come back in the order of `fractions`.
std::vector<SweepPoint> run_budget_sweep(const std::vector<double>& fractions,
                                         const ExperimentInputs& inputs,
                                         const ExperimentConfig& config);

// Output directory handling. prepare_output_dir throws InvalidArgument when
// `dir` exists and is non-empty unless `overwrite` is set.
void prepare_output_dir(const std::filesystem::path& dir, bool overwrite);

nlohmann::json summary_json(const ExperimentReport& report);
// Table with one row per report: method, ASR, AVG steps.
std::string summary_table(const std::vector<ExperimentReport>& reports);

// Writes config.json, outcomes.ndjson, summary.json, summary.txt and
// histogram.csv into `dir` (which must already be prepared).
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);
void write_sweep_csv(const std::vector<SweepPoint>& points, const std::filesystem::path& path);

}  // namespace gsba

#endif  // GSBA_EVAL_H_
