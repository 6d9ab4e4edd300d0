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

#ifndef GSBA_ATTACK_H_
#define GSBA_ATTACK_H_

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gsba/surrogate.h"

namespace gsba {

enum class InversionDistance { kL2, kLinf };

InversionDistance parse_inversion_distance(std::string_view name);  // l2 | linf
std::string_view to_string(InversionDistance distance);

struct InversionParams {
  int restarts = 8;
  int iterations = 200;
  double step_size = 0.05;  // Adam learning rate on z
  InversionDistance distance = InversionDistance::kL2;
  // Temperature of the smooth maximum used for InversionDistance::kLinf.
  double linf_temperature = 0.01;
  uint64_t seed = 0;

  void validate() const;
};

struct Inversion {
  torch::Tensor latent;  // z*, (d_z)
  torch::Tensor image;   // G(z*, y), (C, H, W)
  double linf_distance = 0.0;
};

// Descends ||G(z, y) - x||, one Adam trajectory per row of `initial_latents`
// (R, d_z). Restarts are independent; the one with the smallest l_inf
// distance to x wins (lowest row on ties). Restarts whose objective goes
// non-finite are discarded; throws Error if none survive.
Inversion invert_from(GeneratorNet& g, const torch::Tensor& x, int64_t y,
                      const torch::Tensor& initial_latents, const InversionParams& params);

// Restart latents are standard-normal draws from a generator seeded with
// params.seed, so `restarts = k` uses a prefix of the draws of `restarts = k+1`.
Inversion invert(GeneratorNet& g, const torch::Tensor& x, int64_t y, const InversionParams& params);

// Batched form: problem i reconstructs xs[i] within class ys[i]. Trajectories
// of different problems never interact.
std::vector<Inversion> invert_many(GeneratorNet& g, const torch::Tensor& xs,
                                   const std::vector<int64_t>& ys, const InversionParams& params);

struct AttackSetting {
  bool targeted = false;
  int64_t target_class = -1;  // meaningful only when targeted

  std::string to_string() const;
};

struct AttackOutcome {
  int64_t sample_id = -1;
  torch::Tensor original;
  std::optional<torch::Tensor> adversarial;
  bool success = false;
  int64_t reported_steps = 0;
  double linf_perturbation = 0.0;
  int64_t original_label = -1;
  // Class of the selected candidate (the generator class for GSBA).
  int64_t candidate_class = -1;
  std::optional<int64_t> verified_label;
  AttackSetting setting;
};

struct Candidate {
  int64_t class_id;
  double linf_distance;
};

// Index of the closest candidate; ties go to the lowest class id.
size_t select_closest(const std::vector<Candidate>& candidates);

// Inverts G for every class except y_orig and keeps the closest result. Makes
// no target queries. reported_steps is always 1.
AttackOutcome attack_untargeted(GeneratorNet& g, const torch::Tensor& x_orig, int64_t y_orig,
                                double delta, const InversionParams& params);

// Throws InvalidArgument when t == y_orig.
AttackOutcome attack_targeted(GeneratorNet& g, const torch::Tensor& x_orig, int64_t y_orig,
                              int64_t t, double delta, const InversionParams& params);

// The default evaluation target (y + 1) mod C.
int64_t default_target_class(int64_t y, int64_t num_classes);

}  // namespace gsba

#endif  // GSBA_ATTACK_H_
