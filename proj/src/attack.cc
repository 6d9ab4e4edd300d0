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

#include "gsba/attack.h"

#include <cmath>
#include <limits>

#include "gsba/errors.h"

namespace gsba {
namespace {

// Per-row objective ||G(z,y) - x|| under the configured norm.
torch::Tensor reconstruction_objective(const torch::Tensor& images, const torch::Tensor& targets,
                                       const InversionParams& params) {
  auto diff = (images - targets).flatten(1);
  if (params.distance == InversionDistance::kL2) return diff.pow(2).sum(1);
  const double tau = params.linf_temperature;
  return tau * torch::logsumexp(diff.abs() / tau, 1);
}

torch::Tensor linf_rows(const torch::Tensor& a, const torch::Tensor& b) {
  return (a - b).flatten(1).abs().amax(1);
}

// Runs every trajectory; rows [i*R, (i+1)*R) belong to problem i.
std::vector<Inversion> run_inversions(GeneratorNet& g, const torch::Tensor& xs,
                                      const std::vector<int64_t>& ys, torch::Tensor latents,
                                      int64_t restarts, const InversionParams& params) {
  const int64_t problems = static_cast<int64_t>(ys.size());
  for (int64_t y : ys) {
    if (y < 0 || y >= g.num_classes()) throw InvalidArgument("class out of range for generator");
  }
  const bool was_training = g.is_training();
  g.eval();

  auto labels = torch::tensor(ys, torch::kInt64).repeat_interleave(restarts);
  auto targets = xs.detach().repeat_interleave(restarts, 0);
  auto z = latents.detach().clone().requires_grad_(true);
  torch::optim::Adam optimizer({z}, torch::optim::AdamOptions(params.step_size));

  for (int it = 0; it < params.iterations; ++it) {
    auto objective = reconstruction_objective(g.forward(z, labels), targets, params);
    auto grad = torch::autograd::grad({objective.sum()}, {z})[0];
    // Rows that went non-finite stop moving; they are discarded below.
    grad = torch::nan_to_num(grad, 0.0, 0.0, 0.0);
    z.mutable_grad() = grad;
    optimizer.step();
  }

  torch::NoGradGuard no_grad;
  auto images = g.forward(z, labels);
  auto objective = reconstruction_objective(images, targets, params);
  auto dist = linf_rows(images, targets);
  auto finite = torch::isfinite(objective).logical_and(torch::isfinite(dist)).logical_and(
      torch::isfinite(z).all(1));
  g.train(was_training);

  std::vector<Inversion> out;
  out.reserve(problems);
  auto dist_acc = dist.accessor<float, 1>();
  auto finite_acc = finite.accessor<bool, 1>();
  for (int64_t p = 0; p < problems; ++p) {
    int64_t best = -1;
    for (int64_t r = 0; r < restarts; ++r) {
      const int64_t row = p * restarts + r;
      if (!finite_acc[row]) continue;
      if (best < 0 || dist_acc[row] < dist_acc[best]) best = row;
    }
    if (best < 0) throw Error("latent inversion diverged on every restart");
    out.push_back({z[best].detach().clone(), images[best].clone(),
                   static_cast<double>(dist_acc[best])});
  }
  return out;
}

torch::Tensor draw_latents(int64_t rows, int64_t dim, uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::randn({rows, dim}, gen, torch::kFloat32);
}

AttackOutcome base_outcome(const torch::Tensor& x_orig, int64_t y_orig, AttackSetting setting) {
  AttackOutcome outcome;
  outcome.original = x_orig;
  outcome.original_label = y_orig;
  outcome.reported_steps = 1;
  outcome.setting = setting;
  return outcome;
}

void finish(AttackOutcome& outcome, const Inversion& chosen, int64_t cls, double delta) {
  outcome.candidate_class = cls;
  outcome.linf_perturbation = chosen.linf_distance;
  outcome.success = chosen.linf_distance <= delta;
  if (outcome.success) outcome.adversarial = chosen.image;
}

}  // namespace

InversionDistance parse_inversion_distance(std::string_view name) {
  if (name == "l2") return InversionDistance::kL2;
  if (name == "linf") return InversionDistance::kLinf;
  throw InvalidArgument("unknown inversion distance: '" + std::string(name) + "'");
}

std::string_view to_string(InversionDistance distance) {
  return distance == InversionDistance::kL2 ? "l2" : "linf";
}

void InversionParams::validate() const {
  if (restarts < 1) throw InvalidArgument("inversion restarts must be >= 1");
  if (iterations < 1) throw InvalidArgument("inversion iterations must be >= 1");
  if (!(step_size > 0.0)) throw InvalidArgument("inversion step size must be positive");
  if (!(linf_temperature > 0.0)) throw InvalidArgument("linf temperature must be positive");
}

Inversion invert_from(GeneratorNet& g, const torch::Tensor& x, int64_t y,
                      const torch::Tensor& initial_latents, const InversionParams& params) {
  params.validate();
  if (initial_latents.dim() != 2 || initial_latents.size(1) != g.latent_dim()) {
    throw InvalidArgument("initial latents must be (R, latent_dim)");
  }
  return run_inversions(g, x.unsqueeze(0), {y}, initial_latents, initial_latents.size(0), params)
      .front();
}

Inversion invert(GeneratorNet& g, const torch::Tensor& x, int64_t y, const InversionParams& params) {
  return invert_many(g, x.unsqueeze(0), {y}, params).front();
}

std::vector<Inversion> invert_many(GeneratorNet& g, const torch::Tensor& xs,
                                   const std::vector<int64_t>& ys, const InversionParams& params) {
  params.validate();
  if (xs.size(0) != static_cast<int64_t>(ys.size())) {
    throw InvalidArgument("one class per image is required");
  }
  const int64_t rows = xs.size(0) * params.restarts;
  return run_inversions(g, xs, ys, draw_latents(rows, g.latent_dim(), params.seed),
                        params.restarts, params);
}

std::string AttackSetting::to_string() const {
  return targeted ? "targeted(" + std::to_string(target_class) + ")" : "untargeted";
}

size_t select_closest(const std::vector<Candidate>& candidates) {
  if (candidates.empty()) throw InvalidArgument("no candidates to select from");
  size_t best = 0;
  for (size_t i = 1; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    const auto& b = candidates[best];
    if (c.linf_distance < b.linf_distance ||
        (c.linf_distance == b.linf_distance && c.class_id < b.class_id)) {
      best = i;
    }
  }
  return best;
}

AttackOutcome attack_untargeted(GeneratorNet& g, const torch::Tensor& x_orig, int64_t y_orig,
                                double delta, const InversionParams& params) {
  std::vector<int64_t> classes;
  for (int64_t c = 0; c < g.num_classes(); ++c) {
    if (c != y_orig) classes.push_back(c);
  }
  auto xs = x_orig.unsqueeze(0).expand({static_cast<int64_t>(classes.size()), -1, -1, -1});
  auto inversions = invert_many(g, xs, classes, params);

  std::vector<Candidate> candidates;
  for (size_t i = 0; i < classes.size(); ++i) {
    candidates.push_back({classes[i], inversions[i].linf_distance});
  }
  const size_t chosen = select_closest(candidates);

  auto outcome = base_outcome(x_orig, y_orig, {});
  finish(outcome, inversions[chosen], classes[chosen], delta);
  return outcome;
}

AttackOutcome attack_targeted(GeneratorNet& g, const torch::Tensor& x_orig, int64_t y_orig,
                              int64_t t, double delta, const InversionParams& params) {
  if (t == y_orig) throw InvalidArgument("target class equals the original class");
  if (t < 0 || t >= g.num_classes()) throw InvalidArgument("target class out of range");
  auto inversion = invert(g, x_orig, t, params);
  auto outcome = base_outcome(x_orig, y_orig, {true, t});
  finish(outcome, inversion, t, delta);
  return outcome;
}

int64_t default_target_class(int64_t y, int64_t num_classes) { return (y + 1) % num_classes; }

}  // namespace gsba
