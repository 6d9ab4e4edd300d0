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

#include "gsba/eval.h"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "gsba/errors.h"
#include "gsba/whitebox.h"

namespace gsba {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::shared_ptr<QueryLedger> unlimited_ledger() { return std::make_shared<QueryLedger>(); }

bool goal_met(const AttackOutcome& o, int64_t label) {
  return o.setting.targeted ? label == o.setting.target_class : label != o.original_label;
}

json outcome_json(const AttackOutcome& o) {
  return {{"sample_id", o.sample_id},
          {"original_label", o.original_label},
          {"setting", o.setting.to_string()},
          {"candidate_class", o.candidate_class},
          {"success", o.success},
          {"reported_steps", o.reported_steps},
          {"linf_perturbation", o.linf_perturbation},
          {"verified_label", o.verified_label ? json(*o.verified_label) : json(nullptr)}};
}

std::string format_percent(double x) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1) << 100.0 * x << "%";
  return out.str();
}

}  // namespace

int histogram_bin(int64_t steps, int64_t max_steps) {
  if (steps < 1) throw InvalidArgument("steps must be >= 1");
  if (max_steps <= 1) return 0;
  const double width = static_cast<double>(max_steps - 1) / kHistogramBins;
  const auto bin = static_cast<int>(std::floor(static_cast<double>(steps - 1) / width));
  return std::min(bin, kHistogramBins - 1);
}

ExperimentReport verify_and_score(const BlackBoxOracle& oracle, std::vector<AttackOutcome> outcomes,
                                  double delta, int64_t histogram_max_steps) {
  ExperimentReport report;
  report.histogram_max_steps = std::max<int64_t>(histogram_max_steps, 1);
  const int64_t verification_before = oracle.ledger().verification_queries();

  std::vector<size_t> claimed;
  std::vector<torch::Tensor> images;
  for (size_t i = 0; i < outcomes.size(); ++i) {
    auto& o = outcomes[i];
    o.verified_label.reset();
    if (!o.success || !o.adversarial) {
      o.success = false;
      continue;
    }
    ++report.claimed_successes;
    const auto& adv = *o.adversarial;
    const double linf = (adv - o.original).abs().max().item<double>();
    const bool in_box = adv.min().item<double>() >= 0.0 && adv.max().item<double>() <= 1.0;
    o.linf_perturbation = linf;
    if (linf > delta + 1e-6 || !in_box) {
      o.success = false;
      continue;
    }
    claimed.push_back(i);
    images.push_back(adv);
  }
  if (!claimed.empty()) {
    auto labels = response_labels(oracle.query(torch::stack(images), Charge::kVerification));
    for (size_t k = 0; k < claimed.size(); ++k) {
      auto& o = outcomes[claimed[k]];
      o.verified_label = labels[static_cast<int64_t>(k)].item<int64_t>();
      o.success = goal_met(o, *o.verified_label);
    }
  }

  double step_sum = 0.0;
  for (const auto& o : outcomes) {
    if (!o.success) continue;
    ++report.verified_successes;
    step_sum += static_cast<double>(o.reported_steps);
    ++report.step_histogram[histogram_bin(o.reported_steps, report.histogram_max_steps)];
  }
  report.asr = outcomes.empty() ? 0.0
                                : static_cast<double>(report.verified_successes) /
                                      static_cast<double>(outcomes.size());
  if (report.verified_successes > 0) {
    report.avg_steps = step_sum / static_cast<double>(report.verified_successes);
  }
  report.verification_queries = oracle.ledger().verification_queries() - verification_before;
  report.outcomes = std::move(outcomes);
  return report;
}

ExperimentInputs prepare_inputs(const ExperimentConfig& config) {
  config.validate();
  const std::filesystem::path cache =
      config.cache_dir.empty() ? default_cache_dir() : std::filesystem::path(config.cache_dir);
  auto train = load_dataset(config.dataset, Split::kTrain, cache);
  auto test = load_dataset(config.dataset, Split::kTest, cache);

  TrainedTarget target;
  if (!config.target_path.empty() && std::filesystem::exists(config.target_path)) {
    target = load_target(config.target_path);
  } else {
    target = train_target(config.target_arch, train, test, config.target_training);
    if (!config.target_path.empty()) save_target(target, config.target_path);
  }
  if (target.model.input_shape != train.shape() || target.model.num_classes != train.num_classes) {
    throw ShapeMismatch("target checkpoint does not match dataset " + config.dataset);
  }
  const auto id = target_id(target);
  auto eval =
      build_eval_set(target.model.label_fn(), test, config.eval_samples, config.eval_seed, id);
  return {target.model, id, std::move(train), std::move(eval)};
}

SurrogateBundle train_for_experiment(const ExperimentInputs& inputs, const ExperimentConfig& config,
                                     SurrogateVariant variant, int64_t budget,
                                     const TrainingCallback& on_record) {
  auto ledger = std::make_shared<QueryLedger>(budget);
  BlackBoxOracle oracle(inputs.target, config.mode, ledger);
  return train_surrogate(oracle, inputs.attacker_data, config.surrogate_config(variant), on_record);
}

ExperimentReport evaluate_gsba(const SurrogateBundle& bundle, const ExperimentInputs& inputs,
                               const ExperimentConfig& config) {
  const auto start = Clock::now();
  BlackBoxOracle oracle(inputs.target, config.mode, unlimited_ledger());
  auto& g = *bundle.generator;
  g.eval();
  const auto params = config.inversion_params();
  const auto& samples = inputs.eval.samples;
  const int64_t num_classes = samples.num_classes;

  const int64_t used_before = oracle.ledger().used();
  std::vector<AttackOutcome> outcomes;
  for (int64_t i = 0; i < samples.size(); ++i) {
    const auto x = samples.pixels[i];
    const int64_t y = samples.labels[i].item<int64_t>();
    auto o = config.targeted ? attack_targeted(g, x, y, default_target_class(y, num_classes),
                                               config.delta, params)
                             : attack_untargeted(g, x, y, config.delta, params);
    o.sample_id = i;
    outcomes.push_back(std::move(o));
  }
  const int64_t attack_queries = oracle.ledger().used() - used_before;

  auto report = verify_and_score(oracle, std::move(outcomes), config.delta, config.pgd_iterations);
  report.method = config.mode == ResponseMode::kProbability ? "GSBA-P" : "GSBA-L";
  report.config = to_json(config);
  report.config["variant"] = std::string(to_string(bundle.config.variant));
  report.training_queries = bundle.queries_used;
  report.training_budget = bundle.query_budget;
  report.attack_queries = attack_queries;
  report.wall_seconds = seconds_since(start);
  return report;
}

TransferMethod parse_transfer_method(std::string_view name) {
  if (name == "fgsm") return TransferMethod::kFgsm;
  if (name == "bim") return TransferMethod::kBim;
  if (name == "pgd") return TransferMethod::kPgd;
  if (name == "cw") return TransferMethod::kCw;
  throw InvalidArgument("unknown transfer method: '" + std::string(name) + "'");
}

std::string_view to_string(TransferMethod method) {
  switch (method) {
    case TransferMethod::kFgsm: return "fgsm";
    case TransferMethod::kBim: return "bim";
    case TransferMethod::kPgd: return "pgd";
    case TransferMethod::kCw: return "cw";
  }
  return "?";
}

ExperimentReport run_baseline_surrogate_pgd(const SurrogateBundle& bundle,
                                            const ExperimentInputs& inputs,
                                            const ExperimentConfig& config) {
  return run_surrogate_transfer(bundle, inputs, config, TransferMethod::kPgd);
}

ExperimentReport run_surrogate_transfer(const SurrogateBundle& bundle,
                                        const ExperimentInputs& inputs,
                                        const ExperimentConfig& config, TransferMethod method) {
  const auto start = Clock::now();
  auto params = config.pgd_params();
  if (method == TransferMethod::kFgsm) params.iterations = 1;
  if (method == TransferMethod::kBim) params.random_start = false;
  params.validate();
  BlackBoxOracle oracle(inputs.target, config.mode, unlimited_ledger());
  const auto& s = bundle.substitute;
  s.net->eval();
  const auto& samples = inputs.eval.samples;
  const int64_t n = samples.size();
  const int64_t num_classes = samples.num_classes;

  AdvLossSpec spec{AdvLossKind::kClassification, config.targeted, samples.labels, {}};
  if (config.targeted) spec.targets = (samples.labels + 1).remainder(num_classes);
  const auto goal = config.targeted ? spec.targets : samples.labels;

  auto first_fool = torch::zeros({n}, torch::kInt64);
  auto fooled_image = samples.pixels.clone();
  const auto observe = [&](int iteration, const torch::Tensor& current) {
    auto pending = first_fool.eq(0).nonzero().squeeze(1);
    if (pending.numel() == 0) return;
    auto batch = current.detach().index_select(0, pending);
    auto labels = response_labels(oracle.query(batch, Charge::kVerification));
    auto hit = config.targeted ? labels.eq(goal.index_select(0, pending))
                               : labels.ne(goal.index_select(0, pending));
    auto rows = pending.masked_select(hit);
    first_fool.index_fill_(0, rows, iteration);
    fooled_image.index_copy_(0, rows, batch.index_select(0, hit.nonzero().squeeze(1)));
  };
  const LogitsFn logits = [&s](const torch::Tensor& x) { return s.logits(x); };
  const int64_t verification_before = oracle.ledger().verification_queries();
  switch (method) {
    case TransferMethod::kFgsm:
      fgsm(logits, samples.pixels, spec, params, observe);
      break;
    case TransferMethod::kBim:
      bim(logits, samples.pixels, spec, params, observe);
      break;
    case TransferMethod::kPgd:
      pgd(logits, samples.pixels, spec, params, observe);
      break;
    case TransferMethod::kCw:
      cw_attack(logits, samples.pixels, spec, params, observe);
      break;
  }
  const int64_t search_queries = oracle.ledger().verification_queries() - verification_before;

  std::vector<AttackOutcome> outcomes;
  for (int64_t i = 0; i < n; ++i) {
    AttackOutcome o;
    o.sample_id = i;
    o.original = samples.pixels[i];
    o.original_label = samples.labels[i].item<int64_t>();
    o.setting = {config.targeted, config.targeted ? goal[i].item<int64_t>() : -1};
    const int64_t step = first_fool[i].item<int64_t>();
    o.success = step > 0;
    o.reported_steps = step > 0 ? step : params.iterations;
    o.adversarial = fooled_image[i];
    o.linf_perturbation = (fooled_image[i] - o.original).abs().max().item<double>();
    o.candidate_class = o.setting.targeted ? o.setting.target_class : -1;
    outcomes.push_back(std::move(o));
  }
  auto report = verify_and_score(oracle, std::move(outcomes), config.delta, params.iterations);
  report.method = method == TransferMethod::kPgd ? "Surrogate+PGD"
                                                 : "Surrogate+" + std::string(to_string(method));
  report.config = to_json(config);
  report.training_queries = bundle.queries_used;
  report.training_budget = bundle.query_budget;
  report.attack_queries = search_queries;
  report.verification_queries += search_queries;
  report.wall_seconds = seconds_since(start);
  return report;
}

AblationRun run_ablation(SurrogateVariant variant, const ExperimentInputs& inputs,
                         const ExperimentConfig& config) {
  auto bundle = train_for_experiment(inputs, config, variant, config.budget);
  auto report = evaluate_gsba(bundle, inputs, config);
  report.method = "GSBA " + std::string(to_string(variant));
  return {std::move(bundle), std::move(report)};
}

std::vector<SweepPoint> run_budget_sweep(const std::vector<double>& fractions,
                                         const ExperimentInputs& inputs,
                                         const ExperimentConfig& config) {
  std::vector<SweepPoint> points;
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw InvalidArgument("budget fractions must lie in (0, 1]");
    const auto budget =
        std::max<int64_t>(1, std::llround(static_cast<double>(config.budget) * f));
    auto bundle = train_for_experiment(inputs, config, SurrogateVariant::kDiv, budget);
    auto report = evaluate_gsba(bundle, inputs, config);
    points.push_back({f, budget, std::move(report)});
  }
  return points;
}

void prepare_output_dir(const std::filesystem::path& dir, bool overwrite) {
  if (std::filesystem::exists(dir) && !std::filesystem::is_empty(dir)) {
    if (!overwrite) {
      throw InvalidArgument("output directory " + dir.string() +
                            " is not empty; pass --overwrite to replace it");
    }
    std::filesystem::remove_all(dir);
  }
  std::filesystem::create_directories(dir);
}

json summary_json(const ExperimentReport& r) {
  return {{"method", r.method},
          {"num_samples", r.outcomes.size()},
          {"claimed_successes", r.claimed_successes},
          {"verified_successes", r.verified_successes},
          {"asr", r.asr},
          {"avg_steps", r.avg_steps ? json(*r.avg_steps) : json(nullptr)},
          {"histogram_max_steps", r.histogram_max_steps},
          {"step_histogram", r.step_histogram},
          {"training_queries", r.training_queries},
          {"training_budget", r.training_budget ? json(*r.training_budget) : json(nullptr)},
          {"attack_queries", r.attack_queries},
          {"verification_queries", r.verification_queries},
          {"wall_seconds", r.wall_seconds}};
}

std::string summary_table(const std::vector<ExperimentReport>& reports) {
  std::ostringstream out;
  out << std::left << std::setw(24) << "Method" << std::right << std::setw(10) << "ASR"
      << std::setw(12) << "AVG steps" << std::setw(14) << "Queries" << "\n";
  for (const auto& r : reports) {
    std::ostringstream steps;
    if (r.avg_steps) {
      steps << std::fixed << std::setprecision(1) << *r.avg_steps;
    } else {
      steps << "n/a";
    }
    out << std::left << std::setw(24) << r.method << std::right << std::setw(10)
        << format_percent(r.asr) << std::setw(12) << steps.str() << std::setw(14)
        << r.training_queries << "\n";
  }
  return out.str();
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::ofstream(dir / "config.json") << report.config.dump(2) << "\n";
  std::ofstream outcomes(dir / "outcomes.ndjson");
  for (const auto& o : report.outcomes) outcomes << outcome_json(o).dump() << "\n";
  std::ofstream(dir / "summary.json") << summary_json(report).dump(2) << "\n";
  std::ofstream(dir / "summary.txt") << summary_table({report});
  std::ofstream hist(dir / "histogram.csv");
  hist << "bin,lower,upper,count\n";
  const double width = static_cast<double>(report.histogram_max_steps - 1) / kHistogramBins;
  for (int b = 0; b < kHistogramBins; ++b) {
    hist << b << "," << 1.0 + b * width << "," << 1.0 + (b + 1) * width << ","
         << report.step_histogram[b] << "\n";
  }
}

void write_sweep_csv(const std::vector<SweepPoint>& points, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "fraction,budget,asr,training_queries\n";
  for (const auto& p : points) {
    out << p.fraction << "," << p.budget << "," << p.report.asr << "," << p.report.training_queries
        << "\n";
  }
}

}  // namespace gsba
