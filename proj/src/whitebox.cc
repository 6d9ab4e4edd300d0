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

#include "gsba/whitebox.h"

#include <cmath>

#include "gsba/errors.h"

namespace gsba {
namespace {

// Row-wise max of `values` with column `exclude[i]` masked out.
torch::Tensor max_excluding(const torch::Tensor& values, const torch::Tensor& exclude) {
  auto mask = torch::zeros_like(values, torch::kBool).scatter_(1, exclude.unsqueeze(1), true);
  return values.masked_fill(mask, -std::numeric_limits<double>::infinity()).amax(1);
}

torch::Tensor clamped_log(const torch::Tensor& probs) { return probs.clamp_min(kProbFloor).log(); }

// Shared by adv_loss and attack_objective; `logp` are clamped log-probs.
torch::Tensor loss_from_log_probs(const torch::Tensor& logp, const AdvLossSpec& spec) {
  const auto& goal = spec.goal_classes();
  auto goal_logp = logp.gather(1, goal.unsqueeze(1)).squeeze(1);
  if (spec.kind == AdvLossKind::kClassification) return spec.targeted ? goal_logp : -goal_logp;
  auto other = max_excluding(logp, goal);
  return spec.targeted ? (other - goal_logp).clamp_min(0.0) : (goal_logp - other).clamp_min(0.0);
}

torch::Tensor gradient_of_objective(const LogitsFn& model, const torch::Tensor& x,
                                    const AdvLossSpec& spec, torch::Tensor* logits_out) {
  auto input = x.detach().requires_grad_(true);
  auto logits = model(input);
  auto objective = attack_objective(logits, spec).sum();
  auto grad = torch::autograd::grad({objective}, {input})[0];
  if (logits_out != nullptr) *logits_out = logits.detach();
  return grad;
}

WhiteboxResult iterate_attack(const LogitsFn& model, const torch::Tensor& x,
                              const AdvLossSpec& spec, const AttackParams& params,
                              const IterateObserver& observer) {
  params.validate();
  spec.validate();
  const auto origin = x.detach();
  const int64_t n = origin.size(0);
  auto first = torch::zeros({n}, torch::kInt64);
  auto active = torch::ones({n}, torch::kBool);

  auto current = origin.clone();
  if (params.random_start && params.epsilon > 0) {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(params.seed);
    auto noise = torch::rand(origin.sizes(), gen, origin.scalar_type())
                     .mul_(2.0 * params.epsilon)
                     .sub_(params.epsilon);
    current = project_linf(origin + noise, origin, params.epsilon);
  }

  auto mark = [&](const torch::Tensor& logits, int iteration) {
    auto newly = attack_succeeded(logits, spec).logical_and(active);
    first.masked_fill_(newly, iteration);
    if (params.early_stop) active.logical_and_(newly.logical_not());
  };

  for (int it = 1; it <= params.iterations; ++it) {
    torch::Tensor logits;
    auto grad = gradient_of_objective(model, current, spec, &logits);
    if (it > 1) mark(logits, it - 1);
    if (!active.any().item<bool>()) break;
    auto stepped = project_linf(current - params.step_size * grad.sign(), origin, params.epsilon);
    auto keep = active.view({n, 1, 1, 1}).expand_as(current);
    current = torch::where(keep, stepped, current);
    if (observer) observer(it, current);
    if (it == params.iterations) {
      torch::NoGradGuard no_grad;
      mark(model(current), it);
    }
  }
  return {current.detach(), first};
}

}  // namespace

AdvLossKind parse_adv_loss_kind(std::string_view name) {
  if (name == "ce" || name == "classification") return AdvLossKind::kClassification;
  if (name == "cw" || name == "cw-margin") return AdvLossKind::kCwMargin;
  throw InvalidArgument("unknown adversarial loss: '" + std::string(name) + "'");
}

void AdvLossSpec::validate() const {
  if (!labels.defined() || labels.dim() != 1) throw InvalidArgument("labels must be a vector");
  if (!targeted) return;
  if (!targets.defined() || targets.sizes() != labels.sizes()) {
    throw InvalidArgument("targeted spec needs one target class per sample");
  }
  if (targets.eq(labels).any().item<bool>()) {
    throw InvalidArgument("targeted spec has a target class equal to the true label");
  }
}

torch::Tensor cw_margin(const torch::Tensor& probs, const torch::Tensor& classes) {
  auto logp = clamped_log(probs);
  return max_excluding(logp, classes) - logp.gather(1, classes.unsqueeze(1)).squeeze(1);
}

torch::Tensor adv_loss(const torch::Tensor& probs, const AdvLossSpec& spec) {
  spec.validate();
  if (probs.dim() != 2 || probs.size(0) != spec.labels.size(0)) {
    throw InvalidArgument("probabilities must be (N, C) with one row per label");
  }
  if (probs.lt(0).any().item<bool>() ||
      (probs.sum(1) - 1.0).abs().gt(1e-5).any().item<bool>()) {
    throw InvalidArgument("rows must be probability vectors");
  }
  return loss_from_log_probs(clamped_log(probs), spec);
}

torch::Tensor attack_objective(const torch::Tensor& logits, const AdvLossSpec& spec) {
  auto logp = torch::log_softmax(logits, 1).clamp_min(std::log(kProbFloor));
  auto f = loss_from_log_probs(logp, spec);
  return spec.kind == AdvLossKind::kClassification ? -f : f;
}

torch::Tensor attack_succeeded(const torch::Tensor& logits, const AdvLossSpec& spec) {
  auto predicted = logits.argmax(1);
  return spec.targeted ? predicted.eq(spec.targets) : predicted.ne(spec.labels);
}

void AttackParams::validate() const {
  if (!(epsilon >= 0.0) || !(step_size >= 0.0)) {
    throw InvalidArgument("epsilon and step size must be non-negative");
  }
  if (step_size > epsilon + 1e-12) throw InvalidArgument("step size must not exceed epsilon");
  if (epsilon > 0.0 && step_size <= 0.0) throw InvalidArgument("step size must be positive");
  if (iterations < 1) throw InvalidArgument("iterations must be >= 1");
}

torch::Tensor project_linf(const torch::Tensor& x, const torch::Tensor& origin, double epsilon) {
  return torch::max(torch::min(x, origin + epsilon), origin - epsilon).clamp(0.0, 1.0);
}

WhiteboxResult fgsm(const LogitsFn& model, const torch::Tensor& x, const AdvLossSpec& spec,
                    const AttackParams& params, const IterateObserver& observer) {
  AttackParams single = params;
  single.iterations = 1;
  single.step_size = params.epsilon;
  single.random_start = false;
  return iterate_attack(model, x, spec, single, observer);
}

WhiteboxResult bim(const LogitsFn& model, const torch::Tensor& x, const AdvLossSpec& spec,
                   const AttackParams& params, const IterateObserver& observer) {
  return iterate_attack(model, x, spec, params, observer);
}

WhiteboxResult pgd(const LogitsFn& model, const torch::Tensor& x, const AdvLossSpec& spec,
                   AttackParams params, const IterateObserver& observer) {
  params.random_start = true;
  return iterate_attack(model, x, spec, params, observer);
}

WhiteboxResult cw_attack(const LogitsFn& model, const torch::Tensor& x, AdvLossSpec spec,
                         AttackParams params, const IterateObserver& observer) {
  spec.kind = AdvLossKind::kCwMargin;
  params.random_start = true;
  return iterate_attack(model, x, spec, params, observer);
}

}  // namespace gsba
