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

#include "gsba/experiment.h"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>

#include "gsba/data.h"
#include "gsba/errors.h"

namespace gsba {
namespace {

using json = nlohmann::json;

double parse_number(std::string_view text) {
  const std::string s(text);
  size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InvalidArgument("not a number: '" + s + "'");
  }
  if (used != s.size()) throw InvalidArgument("not a number: '" + s + "'");
  return value;
}

template <typename T>
T get(const json& v, std::string_view key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument("config key '" + std::string(key) + "' has the wrong type");
  }
}

using Setter = std::function<void(ExperimentConfig&, const json&, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"dataset", [](auto& c, const json& v, auto k) { c.dataset = get<std::string>(v, k); }},
      {"cache_dir", [](auto& c, const json& v, auto k) { c.cache_dir = get<std::string>(v, k); }},
      {"arch", [](auto& c, const json& v, auto k) { c.target_arch = get<std::string>(v, k); }},
      {"target_seed",
       [](auto& c, const json& v, auto k) { c.target_training.seed = get<uint64_t>(v, k); }},
      {"target_epochs",
       [](auto& c, const json& v, auto k) { c.target_training.epochs = get<int>(v, k); }},
      {"target_batch_size",
       [](auto& c, const json& v, auto k) { c.target_training.batch_size = get<int64_t>(v, k); }},
      {"target_lr",
       [](auto& c, const json& v, auto k) { c.target_training.learning_rate = get<double>(v, k); }},
      {"mode",
       [](auto& c, const json& v, auto k) { c.mode = parse_response_mode(get<std::string>(v, k)); }},
      {"setting",
       [](auto& c, const json& v, auto k) {
         const auto s = get<std::string>(v, k);
         if (s != "untargeted" && s != "targeted") {
           throw InvalidArgument("setting must be untargeted or targeted, got '" + s + "'");
         }
         c.targeted = s == "targeted";
       }},
      {"delta",
       [](auto& c, const json& v, auto k) {
         c.delta = v.is_string() ? parse_fraction(v.template get<std::string>()) : get<double>(v, k);
       }},
      {"budget", [](auto& c, const json& v, auto k) { c.budget = get<int64_t>(v, k); }},
      {"eval_samples", [](auto& c, const json& v, auto k) { c.eval_samples = get<int64_t>(v, k); }},
      {"eval_seed", [](auto& c, const json& v, auto k) { c.eval_seed = get<uint64_t>(v, k); }},
      {"seed", [](auto& c, const json& v, auto k) { c.seed = get<uint64_t>(v, k); }},
      {"variant",
       [](auto& c, const json& v, auto k) {
         c.surrogate.variant = parse_surrogate_variant(get<std::string>(v, k));
       }},
      {"alpha1", [](auto& c, const json& v, auto k) { c.surrogate.weights.alpha1 = get<double>(v, k); }},
      {"alpha2", [](auto& c, const json& v, auto k) { c.surrogate.weights.alpha2 = get<double>(v, k); }},
      {"alpha3", [](auto& c, const json& v, auto k) { c.surrogate.weights.alpha3 = get<double>(v, k); }},
      {"diversity_formula",
       [](auto& c, const json& v, auto k) {
         c.surrogate.diversity_formula = parse_diversity_formula(get<std::string>(v, k));
       }},
      {"similarity_direction",
       [](auto& c, const json& v, auto k) {
         c.surrogate.similarity_direction = parse_similarity_direction(get<std::string>(v, k));
       }},
      {"substitute_arch",
       [](auto& c, const json& v, auto k) { c.surrogate.substitute_arch = get<std::string>(v, k); }},
      {"generator_arch",
       [](auto& c, const json& v, auto k) { c.surrogate.generator_arch = get<std::string>(v, k); }},
      {"latent_dim",
       [](auto& c, const json& v, auto k) { c.surrogate.latent_dim = get<int64_t>(v, k); }},
      {"non_saturating",
       [](auto& c, const json& v, auto k) { c.surrogate.non_saturating = get<bool>(v, k); }},
      {"batch_size",
       [](auto& c, const json& v, auto k) { c.surrogate.batch_size = get<int64_t>(v, k); }},
      {"max_steps", [](auto& c, const json& v, auto k) { c.surrogate.max_steps = get<int64_t>(v, k); }},
      {"generator_lr",
       [](auto& c, const json& v, auto k) { c.surrogate.generator_lr = get<double>(v, k); }},
      {"discriminator_lr",
       [](auto& c, const json& v, auto k) { c.surrogate.discriminator_lr = get<double>(v, k); }},
      {"substitute_lr",
       [](auto& c, const json& v, auto k) { c.surrogate.substitute_lr = get<double>(v, k); }},
      {"bim_epsilon",
       [](auto& c, const json& v, auto k) {
         c.surrogate.bim_epsilon =
             v.is_string() ? parse_fraction(v.template get<std::string>()) : get<double>(v, k);
       }},
      {"bim_step",
       [](auto& c, const json& v, auto k) {
         c.surrogate.bim_step =
             v.is_string() ? parse_fraction(v.template get<std::string>()) : get<double>(v, k);
       }},
      {"bim_iterations",
       [](auto& c, const json& v, auto k) { c.surrogate.bim_iterations = get<int>(v, k); }},
      {"log_every", [](auto& c, const json& v, auto k) { c.surrogate.log_every = get<int64_t>(v, k); }},
      {"restarts", [](auto& c, const json& v, auto k) { c.inversion.restarts = get<int>(v, k); }},
      {"inversion_iterations",
       [](auto& c, const json& v, auto k) { c.inversion.iterations = get<int>(v, k); }},
      {"inversion_lr",
       [](auto& c, const json& v, auto k) { c.inversion.step_size = get<double>(v, k); }},
      {"inversion_distance",
       [](auto& c, const json& v, auto k) {
         c.inversion.distance = parse_inversion_distance(get<std::string>(v, k));
       }},
      {"pgd_iterations", [](auto& c, const json& v, auto k) { c.pgd_iterations = get<int>(v, k); }},
      {"pgd_step",
       [](auto& c, const json& v, auto k) {
         c.pgd_step = v.is_string() ? parse_fraction(v.template get<std::string>()) : get<double>(v, k);
       }},
      {"fractions",
       [](auto& c, const json& v, auto k) { c.fractions = get<std::vector<double>>(v, k); }},
      {"seeds", [](auto& c, const json& v, auto k) { c.seeds = get<std::vector<uint64_t>>(v, k); }},
      {"target", [](auto& c, const json& v, auto k) { c.target_path = get<std::string>(v, k); }},
      {"surrogate", [](auto& c, const json& v, auto k) { c.surrogate_path = get<std::string>(v, k); }},
      {"out", [](auto& c, const json& v, auto k) { c.output_dir = get<std::string>(v, k); }},
      {"overwrite", [](auto& c, const json& v, auto k) { c.overwrite = get<bool>(v, k); }},
  };
  return table;
}

}  // namespace

double parse_fraction(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) return parse_number(text);
  const double num = parse_number(text.substr(0, slash));
  const double den = parse_number(text.substr(slash + 1));
  if (den == 0.0) throw InvalidArgument("zero denominator in '" + std::string(text) + "'");
  return num / den;
}

void ExperimentConfig::validate() const {
  try {
    dataset_num_classes(dataset);
  } catch (const DatasetError& e) {
    throw InvalidArgument(e.what());
  }
  if (target_training.epochs < 1) throw InvalidArgument("target_epochs must be >= 1");
  if (target_training.batch_size < 1) throw InvalidArgument("target_batch_size must be >= 1");
  if (!(target_training.learning_rate > 0)) throw InvalidArgument("target_lr must be positive");
  if (!std::isfinite(delta) || delta < 0.0 || delta > 1.0) {
    throw InvalidArgument("delta must lie in [0, 1]");
  }
  if (budget < 1) throw InvalidArgument("budget must be >= 1");
  if (eval_samples < 1) throw InvalidArgument("eval_samples must be >= 1");
  surrogate.validate();
  inversion.validate();
  pgd_params().validate();
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw InvalidArgument("budget fractions must lie in (0, 1]");
  }
  if (seeds.empty()) throw InvalidArgument("seeds must not be empty");
}

SurrogateConfig ExperimentConfig::surrogate_config(SurrogateVariant variant) const {
  SurrogateConfig c = surrogate;
  c.variant = variant;
  c.seed = seed;
  return c;
}

InversionParams ExperimentConfig::inversion_params() const {
  InversionParams p = inversion;
  p.seed = seed;
  return p;
}

AttackParams ExperimentConfig::pgd_params() const {
  AttackParams p;
  p.epsilon = delta;
  p.step_size = pgd_step;
  p.iterations = pgd_iterations;
  p.random_start = true;
  p.early_stop = false;
  p.seed = seed;
  return p;
}

ExperimentConfig merge_config(const ExperimentConfig& base, const json& j) {
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  ExperimentConfig out = base;
  const auto& table = setters();
  for (const auto& [key, value] : j.items()) {
    auto it = table.find(key);
    if (it == table.end()) throw InvalidArgument("unknown config key '" + key + "'");
    it->second(out, value, key);
  }
  return out;
}

json to_json(const ExperimentConfig& c) {
  const auto& s = c.surrogate;
  return {{"dataset", c.dataset},
          {"cache_dir", c.cache_dir},
          {"arch", c.target_arch},
          {"target_seed", c.target_training.seed},
          {"target_epochs", c.target_training.epochs},
          {"target_batch_size", c.target_training.batch_size},
          {"target_lr", c.target_training.learning_rate},
          {"mode", std::string(to_string(c.mode))},
          {"setting", c.targeted ? "targeted" : "untargeted"},
          {"delta", c.delta},
          {"budget", c.budget},
          {"eval_samples", c.eval_samples},
          {"eval_seed", c.eval_seed},
          {"seed", c.seed},
          {"variant", std::string(to_string(s.variant))},
          {"alpha1", s.weights.alpha1},
          {"alpha2", s.weights.alpha2},
          {"alpha3", s.weights.alpha3},
          {"diversity_formula", std::string(to_string(s.diversity_formula))},
          {"similarity_direction", std::string(to_string(s.similarity_direction))},
          {"substitute_arch", s.substitute_arch},
          {"generator_arch", s.generator_arch},
          {"latent_dim", s.latent_dim},
          {"non_saturating", s.non_saturating},
          {"batch_size", s.batch_size},
          {"max_steps", s.max_steps},
          {"generator_lr", s.generator_lr},
          {"discriminator_lr", s.discriminator_lr},
          {"substitute_lr", s.substitute_lr},
          {"bim_epsilon", s.bim_epsilon},
          {"bim_step", s.bim_step},
          {"bim_iterations", s.bim_iterations},
          {"log_every", s.log_every},
          {"restarts", c.inversion.restarts},
          {"inversion_iterations", c.inversion.iterations},
          {"inversion_lr", c.inversion.step_size},
          {"inversion_distance", std::string(to_string(c.inversion.distance))},
          {"pgd_iterations", c.pgd_iterations},
          {"pgd_step", c.pgd_step},
          {"fractions", c.fractions},
          {"seeds", c.seeds},
          {"target", c.target_path},
          {"surrogate", c.surrogate_path},
          {"out", c.output_dir},
          {"overwrite", c.overwrite}};
}

}  // namespace gsba
