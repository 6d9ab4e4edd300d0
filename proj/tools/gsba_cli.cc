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

// Command-line entry point: gsba <command> [--config FILE] [--key value ...]

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "gsba/errors.h"
#include "gsba/eval.h"
#include "gsba/experiment.h"
#include "json.hpp"

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;
using gsba::ExperimentConfig;

// Flags whose values stay strings even when they look numeric.
const std::vector<std::string> kStringKeys = {
    "dataset", "cache_dir", "arch", "mode", "setting", "delta", "variant", "diversity_formula",
    "similarity_direction", "substitute_arch", "generator_arch", "inversion_distance", "pgd_step",
    "bim_epsilon", "bim_step", "target", "surrogate", "out"};
const std::vector<std::string> kListKeys = {"fractions", "seeds"};

const std::vector<std::pair<std::string, std::string>> kFlags = {
    {"dataset", "mnist | fashion-mnist | cifar10 | cifar100"},
    {"cache_dir", "dataset root (default $GSBA_DATA_DIR or ./data)"},
    {"arch", "target architecture"},
    {"target_seed", "target training seed"},
    {"target_epochs", "target training epochs"},
    {"target_batch_size", "target training batch size"},
    {"target_lr", "target learning rate"},
    {"mode", "oracle response mode, P or L"},
    {"setting", "untargeted | targeted"},
    {"delta", "l_inf budget, e.g. 8/255"},
    {"budget", "training query budget"},
    {"eval_samples", "evaluation samples"},
    {"eval_seed", "evaluation-set seed"},
    {"seed", "surrogate, inversion and PGD seed"},
    {"variant", "base | adv | sim | div"},
    {"alpha1", "class-control weight"},
    {"alpha2", "inter-class similarity weight"},
    {"alpha3", "intra-class diversity weight"},
    {"diversity_formula", "entropy | negative_mean"},
    {"similarity_direction", "maximize | minimize"},
    {"substitute_arch", "substitute architecture"},
    {"generator_arch", "mlp | dcgan | auto"},
    {"latent_dim", "generator latent size"},
    {"non_saturating", "non-saturating generator GAN loss (true/false)"},
    {"batch_size", "surrogate batch size"},
    {"max_steps", "surrogate step cap"},
    {"generator_lr", "generator learning rate"},
    {"discriminator_lr", "discriminator learning rate"},
    {"substitute_lr", "substitute learning rate"},
    {"bim_epsilon", "BIM augmentation radius"},
    {"bim_step", "BIM augmentation step"},
    {"bim_iterations", "BIM augmentation iterations"},
    {"log_every", "training log period"},
    {"restarts", "inversion restarts"},
    {"inversion_iterations", "inversion iterations"},
    {"inversion_lr", "inversion Adam learning rate"},
    {"inversion_distance", "l2 | linf"},
    {"pgd_iterations", "transfer-attack iterations"},
    {"pgd_step", "transfer-attack step"},
    {"fractions", "comma-separated budget fractions"},
    {"seeds", "comma-separated seeds for ablation and sweep"},
    {"target", "target checkpoint path"},
    {"surrogate", "surrogate checkpoint directory"},
    {"out", "output path"},
};

struct CommandOptions {
  std::string config_file;
  std::map<std::string, std::string> values;
  bool overwrite = false;
  std::string method = "gsba";
  std::vector<std::string> report_dirs;
};

json flag_value(const std::string& key, const std::string& text) {
  if (std::find(kListKeys.begin(), kListKeys.end(), key) != kListKeys.end()) {
    return json::parse("[" + text + "]");
  }
  if (std::find(kStringKeys.begin(), kStringKeys.end(), key) != kStringKeys.end()) return text;
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return text;
  }
}

ExperimentConfig resolve_config(const CommandOptions& opts, CLI::App* cmd) {
  ExperimentConfig config;
  if (!opts.config_file.empty()) {
    std::ifstream in(opts.config_file);
    if (!in) throw gsba::InvalidArgument("cannot read config file " + opts.config_file);
    config = gsba::merge_config(config, json::parse(in));
  }
  json overrides = json::object();
  for (const auto& [key, text] : opts.values) {
    if (cmd->count("--" + key) > 0) {
      try {
        overrides[key] = flag_value(key, text);
      } catch (const json::exception&) {
        throw gsba::InvalidArgument("cannot parse --" + key + " " + text);
      }
    }
  }
  if (cmd->count("--overwrite") > 0) overrides["overwrite"] = opts.overwrite;
  config = gsba::merge_config(config, overrides);
  config.validate();
  return config;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw CLI::RequiredError(std::string("--") + flag);
}

void print_record(const gsba::TrainingRecord& r) {
  std::cout << "step " << r.step << " queries " << r.ledger_used << " loss_d " << r.loss_d
            << " loss_g " << r.loss_g << " cnt " << r.class_control << " sim " << r.similarity
            << " div " << r.diversity << " distill " << r.distill << std::endl;
}

int cmd_train_target(const ExperimentConfig& c) {
  require(c.target_path.empty() ? c.output_dir : c.target_path, "out");
  const fs::path path = c.target_path.empty() ? fs::path(c.output_dir) : fs::path(c.target_path);
  if (fs::exists(path) && !c.overwrite) {
    throw gsba::InvalidArgument(path.string() + " exists; pass --overwrite to replace it");
  }
  const fs::path cache = c.cache_dir.empty() ? gsba::default_cache_dir() : fs::path(c.cache_dir);
  auto train = gsba::load_dataset(c.dataset, gsba::Split::kTrain, cache);
  auto test = gsba::load_dataset(c.dataset, gsba::Split::kTest, cache);
  auto cfg = c.target_training;
  cfg.verbose = true;
  auto target = gsba::train_target(c.target_arch, train, test, cfg);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  gsba::save_target(target, path);
  std::cout << "checkpoint " << path.string() << "\n"
            << "test_accuracy " << target.test_accuracy << "\n";
  return 0;
}

int cmd_train_surrogate(const ExperimentConfig& c) {
  require(c.target_path, "target");
  require(c.output_dir, "out");
  gsba::prepare_output_dir(c.output_dir, c.overwrite);
  auto inputs = gsba::prepare_inputs(c);
  auto bundle = gsba::train_for_experiment(inputs, c, c.surrogate.variant, c.budget, print_record);
  gsba::save_surrogate(bundle, c.output_dir);
  std::cout << "checkpoint " << c.output_dir << "\n"
            << "queries_used " << bundle.queries_used << "\n";
  return 0;
}

int cmd_attack(const ExperimentConfig& c, const std::string& method) {
  require(c.target_path, "target");
  require(c.surrogate_path, "surrogate");
  require(c.output_dir, "out");
  gsba::prepare_output_dir(c.output_dir, c.overwrite);
  auto inputs = gsba::prepare_inputs(c);
  auto bundle = gsba::load_surrogate(c.surrogate_path);
  auto report = method == "gsba"
                    ? gsba::evaluate_gsba(bundle, inputs, c)
                    : gsba::run_surrogate_transfer(bundle, inputs, c,
                                                   gsba::parse_transfer_method(method));
  gsba::write_report(report, c.output_dir);
  std::cout << gsba::summary_table({report});
  return 0;
}

int cmd_ablation(ExperimentConfig c) {
  require(c.target_path, "target");
  require(c.output_dir, "out");
  gsba::prepare_output_dir(c.output_dir, c.overwrite);
  auto inputs = gsba::prepare_inputs(c);
  std::vector<gsba::ExperimentReport> rows;
  for (uint64_t seed : c.seeds) {
    c.seed = seed;
    for (auto variant : {gsba::SurrogateVariant::kBase, gsba::SurrogateVariant::kAdv,
                         gsba::SurrogateVariant::kSim, gsba::SurrogateVariant::kDiv}) {
      auto run = gsba::run_ablation(variant, inputs, c);
      const fs::path dir = fs::path(c.output_dir) /
                           ("seed" + std::to_string(seed)) / std::string(gsba::to_string(variant));
      fs::create_directories(dir);
      gsba::write_report(run.report, dir);
      run.report.method += " seed" + std::to_string(seed);
      std::cout << gsba::summary_table({run.report}) << std::flush;
      rows.push_back(std::move(run.report));
    }
  }
  const auto table = gsba::summary_table(rows);
  std::ofstream(fs::path(c.output_dir) / "summary.txt") << table;
  std::cout << table;
  return 0;
}

int cmd_sweep(ExperimentConfig c) {
  require(c.target_path, "target");
  require(c.output_dir, "out");
  gsba::prepare_output_dir(c.output_dir, c.overwrite);
  auto fractions = c.fractions;
  auto inputs = gsba::prepare_inputs(c);
  std::ofstream csv(fs::path(c.output_dir) / "sweep.csv");
  csv << "seed,fraction,budget,asr,training_queries\n";
  for (uint64_t seed : c.seeds) {
    c.seed = seed;
    auto points = gsba::run_budget_sweep(fractions, inputs, c);
    for (const auto& p : points) {
      const fs::path dir = fs::path(c.output_dir) / ("seed" + std::to_string(seed)) /
                           ("fraction" + std::to_string(p.fraction));
      fs::create_directories(dir);
      gsba::write_report(p.report, dir);
      csv << seed << "," << p.fraction << "," << p.budget << "," << p.report.asr << ","
          << p.report.training_queries << "\n";
      std::cout << "seed " << seed << " fraction " << p.fraction << " asr " << p.report.asr
                << std::endl;
    }
  }
  return 0;
}

int cmd_report(const std::vector<std::string>& dirs) {
  std::vector<gsba::ExperimentReport> rows;
  for (const auto& root : dirs) {
    std::vector<fs::path> found;
    if (fs::exists(fs::path(root) / "summary.json")) found.push_back(fs::path(root) / "summary.json");
    if (fs::is_directory(root)) {
      for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (entry.path().filename() == "summary.json" &&
            entry.path().parent_path() != fs::path(root)) {
          found.push_back(entry.path());
        }
      }
    }
    if (found.empty()) throw gsba::InvalidArgument("no summary.json under " + root);
    std::sort(found.begin(), found.end());
    for (const auto& path : found) {
      std::ifstream in(path);
      const auto j = json::parse(in);
      gsba::ExperimentReport r;
      auto where = fs::relative(path.parent_path(), root);
      if (where == ".") where = fs::path(root).filename();
      r.method = j.at("method").get<std::string>() + " (" + where.string() + ")";
      r.asr = j.at("asr").get<double>();
      if (!j.at("avg_steps").is_null()) r.avg_steps = j.at("avg_steps").get<double>();
      r.training_queries = j.at("training_queries").get<int64_t>();
      rows.push_back(std::move(r));
    }
  }
  std::cout << gsba::summary_table(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generative-surrogate black-box attacks"};
  app.require_subcommand(1);
  std::map<std::string, CommandOptions> options;
  std::map<std::string, CLI::App*> commands;
  for (const std::string name :
       {"train-target", "train-surrogate", "attack", "ablation", "sweep"}) {
    auto* cmd = app.add_subcommand(name);
    auto& opts = options[name];
    cmd->add_option("--config", opts.config_file, "JSON config; flags override its keys");
    for (const auto& [key, help] : kFlags) cmd->add_option("--" + key, opts.values[key], help);
    cmd->add_flag("--overwrite,!--no-overwrite", opts.overwrite,
                  "replace an existing output");
    commands[name] = cmd;
  }
  commands["train-target"]->get_option("--dataset")->required();
  commands["attack"]
      ->add_option("--method", options["attack"].method, "gsba | pgd | bim | fgsm | cw")
      ->check(CLI::IsMember({"gsba", "pgd", "bim", "fgsm", "cw"}));
  auto* report = app.add_subcommand("report", "tabulate summary.json files");
  std::vector<std::string> report_dirs;
  report->add_option("dirs", report_dirs, "output directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    torch::set_num_threads(1);
    if (report->parsed()) return cmd_report(report_dirs);
    for (auto& [name, cmd] : commands) {
      if (!cmd->parsed()) continue;
      const auto config = resolve_config(options[name], cmd);
      if (name == "train-target") return cmd_train_target(config);
      if (name == "train-surrogate") return cmd_train_surrogate(config);
      if (name == "attack") return cmd_attack(config, options[name].method);
      if (name == "ablation") return cmd_ablation(config);
      if (name == "sweep") return cmd_sweep(config);
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const gsba::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
