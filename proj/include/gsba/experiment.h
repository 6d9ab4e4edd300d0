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

#ifndef GSBA_EXPERIMENT_H_
#define GSBA_EXPERIMENT_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gsba/attack.h"
#include "gsba/models.h"
#include "gsba/oracle.h"
#include "gsba/surrogate.h"
#include "gsba/whitebox.h"
#include "json.hpp"

namespace gsba {

// Parses "0.1", "8/255" or "1e-2". Fractions are evaluated as one division of
// two doubles. Throws InvalidArgument on anything else.
double parse_fraction(std::string_view text);

// Every knob of the pipeline in one flat record shared by all commands.
struct ExperimentConfig {
  std::string dataset = "mnist";
  std::string cache_dir;  // empty: GSBA_DATA_DIR or ./data
  std::string target_arch = "small-cnn";
  TargetTrainConfig target_training;
  ResponseMode mode = ResponseMode::kProbability;
  bool targeted = false;
  double delta = 8.0 / 255.0;
  int64_t budget = 1'000'000;
  int64_t eval_samples = 100;
  uint64_t eval_seed = 0;
  // Seeds surrogate training, inversion restarts and PGD random starts.
  uint64_t seed = 0;
  SurrogateConfig surrogate;
  InversionParams inversion;
  // Surrogate+PGD baseline; epsilon always follows delta.
  int pgd_iterations = 50;
  double pgd_step = 0.01;
  std::vector<double> fractions{0.1, 0.25, 0.5, 1.0};
  std::vector<uint64_t> seeds{0, 1, 2};
  std::string target_path;
  std::string surrogate_path;
  std::string output_dir;
  bool overwrite = false;

  // Throws InvalidArgument with the offending field.
  void validate() const;

  // Sub-configurations with the shared seed, delta and budget applied.
  SurrogateConfig surrogate_config(SurrogateVariant variant) const;
  InversionParams inversion_params() const;
  AttackParams pgd_params() const;
};

// Applies the keys of `j` on top of `base`. Unknown keys, wrong types and
// unparsable enum values throw InvalidArgument. "delta" accepts a number or a
// fraction string.
ExperimentConfig merge_config(const ExperimentConfig& base, const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);

}  // namespace gsba

#endif  // GSBA_EXPERIMENT_H_
