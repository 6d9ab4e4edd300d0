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

#ifndef GSBA_WHITEBOX_H_
#define GSBA_WHITEBOX_H_

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <string_view>

namespace gsba {

enum class AdvLossKind { kClassification, kCwMargin };

AdvLossKind parse_adv_loss_kind(std::string_view name);  // "ce" | "cw"

// What the attacker wants from a batch. `labels` are the true classes y.
// For targeted attacks `targets` holds t (t != y per sample); for untargeted
// attacks it is left undefined and t = y.
struct AdvLossSpec {
  AdvLossKind kind = AdvLossKind::kClassification;
  bool targeted = false;
  torch::Tensor labels;
  torch::Tensor targets;

  // Throws InvalidArgument when targeted and some t == y.
  void validate() const;
  const torch::Tensor& goal_classes() const { return targeted ? targets : labels; }
};

// Probabilities are clamped at this value before any logarithm.
inline constexpr double kProbFloor = 1e-12;

// max_{i != c} log p_i - log p_c per row. Positive iff some class other than c
// beats c; zero on a two-way tie.
torch::Tensor cw_margin(const torch::Tensor& probs, const torch::Tensor& classes);

// The adversarial objective f of the constrained attack problem, per sample:
//   classification, untargeted:  -log p(y|x)
//   classification, targeted:     log p(t|x)
//   C&W, untargeted:  max{0, log p_y - max_{i!=y} log p_i}
//   C&W, targeted:    max{0, max_{i!=t} log p_i - log p_t}
// Rows of `probs` must be probability vectors (sum 1 +- 1e-5).
torch::Tensor adv_loss(const torch::Tensor& probs, const AdvLossSpec& spec);

// Per-sample value every attack here descends: lower means more
// adversarial. Equals adv_loss for C&W and -adv_loss for the classification
// losses, whose printed forms grow as the attack progresses.
torch::Tensor attack_objective(const torch::Tensor& logits, const AdvLossSpec& spec);

// Whether each sample already meets the goal (argmax != y, or argmax == t).
torch::Tensor attack_succeeded(const torch::Tensor& logits, const AdvLossSpec& spec);

// l_inf attack parameters in [0,1] pixel units.
struct AttackParams {
  double epsilon = 8.0 / 255.0;
  double step_size = 2.0 / 255.0;
  int iterations = 10;
  bool random_start = false;
  // Freeze a sample at the iterate that first meets the goal.
  bool early_stop = true;
  uint64_t seed = 0;

  // 0 <= step_size <= epsilon, step_size > 0 unless epsilon == 0,
  // iterations >= 1.
  void validate() const;
};

using LogitsFn = std::function<torch::Tensor(const torch::Tensor&)>;
// Called with every iterate (1-based index) after projection.
using IterateObserver = std::function<void(int, const torch::Tensor&)>;

struct WhiteboxResult {
  torch::Tensor adversarial;
  // 1-based iteration of first success against the attacked model, 0 if the
  // goal was never met.
  torch::Tensor first_success;
};

// Projects onto the l_inf ball around `origin` and the [0,1] box.
torch::Tensor project_linf(const torch::Tensor& x, const torch::Tensor& origin, double epsilon);

WhiteboxResult fgsm(const LogitsFn& model, const torch::Tensor& x, const AdvLossSpec& spec,
                    const AttackParams& params, const IterateObserver& observer = {});
WhiteboxResult bim(const LogitsFn& model, const torch::Tensor& x, const AdvLossSpec& spec,
                   const AttackParams& params, const IterateObserver& observer = {});
// BIM plus a uniform random start inside the ball (params.random_start is
// forced on).
WhiteboxResult pgd(const LogitsFn& model, const torch::Tensor& x, const AdvLossSpec& spec,
                   AttackParams params, const IterateObserver& observer = {});
// PGD machinery on the C&W hinge instead of the classification loss.
WhiteboxResult cw_attack(const LogitsFn& model, const torch::Tensor& x, AdvLossSpec spec,
                         AttackParams params, const IterateObserver& observer = {});

}  // namespace gsba

#endif  // GSBA_WHITEBOX_H_
