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

#include "gsba/surrogate.h"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

#include "gsba/errors.h"
#include "gsba/whitebox.h"

namespace gsba {
namespace {

namespace nn = torch::nn;
using json = nlohmann::json;

torch::Tensor clamped_log(const torch::Tensor& probs) { return probs.clamp_min(kProbFloor).log(); }

class MlpGenerator : public GeneratorNet {
 public:
  MlpGenerator(int64_t latent_dim, int64_t num_classes, const ImageShape& shape)
      : GeneratorNet(latent_dim, num_classes, shape) {
    body_ = register_module(
        "body", nn::Sequential(nn::Linear(latent_dim + num_classes, 256), nn::BatchNorm1d(256),
                               nn::ReLU(), nn::Linear(256, 512), nn::BatchNorm1d(512), nn::ReLU(),
                               nn::Linear(512, shape.numel()), nn::Sigmoid()));
  }
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& y) override {
    auto onehot = torch::one_hot(y, num_classes()).to(z.scalar_type());
    const auto& s = image_shape();
    return body_->forward(torch::cat({z, onehot}, 1)).view({-1, s.channels, s.height, s.width});
  }

 private:
  nn::Sequential body_{nullptr};
};

class DcganGenerator : public GeneratorNet {
 public:
  DcganGenerator(int64_t latent_dim, int64_t num_classes, const ImageShape& shape)
      : GeneratorNet(latent_dim, num_classes, shape) {
    base_h_ = shape.height / 8;
    base_w_ = shape.width / 8;
    project_ = register_module(
        "project", nn::Sequential(nn::Linear(latent_dim + num_classes, 256 * base_h_ * base_w_),
                                  nn::BatchNorm1d(256 * base_h_ * base_w_), nn::ReLU()));
    auto up = [](int64_t in, int64_t out) {
      return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1));
    };
    upsample_ = register_module(
        "upsample", nn::Sequential(up(256, 128), nn::BatchNorm2d(128), nn::ReLU(), up(128, 64),
                                   nn::BatchNorm2d(64), nn::ReLU(), up(64, shape.channels),
                                   nn::Sigmoid()));
  }
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& y) override {
    auto onehot = torch::one_hot(y, num_classes()).to(z.scalar_type());
    auto h = project_->forward(torch::cat({z, onehot}, 1)).view({-1, 256, base_h_, base_w_});
    return upsample_->forward(h);
  }

 private:
  int64_t base_h_ = 0;
  int64_t base_w_ = 0;
  nn::Sequential project_{nullptr};
  nn::Sequential upsample_{nullptr};
};

nn::Sequential discriminator_body(const ImageShape& shape) {
  if (shape.channels == 3 && shape.height % 4 == 0 && shape.width % 4 == 0) {
    auto down = [](int64_t in, int64_t out) {
      return nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1));
    };
    return nn::Sequential(down(3, 64), nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)),
                          down(64, 128), nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)),
                          nn::Flatten(),
                          nn::Linear(128 * (shape.height / 4) * (shape.width / 4), 1));
  }
  return nn::Sequential(nn::Flatten(), nn::Linear(shape.numel(), 256),
                        nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)),
                        nn::Linear(256, 1));
}

// Mean squared l2 distance between probability rows.
torch::Tensor probability_distance(const torch::Tensor& s, const torch::Tensor& t) {
  return (t - s).pow(2).sum(1).mean();
}

void check_finite(const torch::Tensor& loss, const char* name, int64_t step) {
  if (!std::isfinite(loss.item<double>())) {
    throw DivergenceError(std::string(name) + " became non-finite at step " + std::to_string(step));
  }
}

json config_to_json(const SurrogateConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"alpha1", c.weights.alpha1},
          {"alpha2", c.weights.alpha2},
          {"alpha3", c.weights.alpha3},
          {"diversity_formula", to_string(c.diversity_formula)},
          {"similarity_direction", to_string(c.similarity_direction)},
          {"substitute_arch", c.substitute_arch},
          {"generator_arch", c.generator_arch},
          {"latent_dim", c.latent_dim},
          {"non_saturating", c.non_saturating},
          {"batch_size", c.batch_size},
          {"max_steps", c.max_steps},
          {"generator_lr", c.generator_lr},
          {"discriminator_lr", c.discriminator_lr},
          {"substitute_lr", c.substitute_lr},
          {"bim_epsilon", c.bim_epsilon},
          {"bim_step", c.bim_step},
          {"bim_iterations", c.bim_iterations},
          {"seed", c.seed},
          {"log_every", c.log_every}};
}

SurrogateConfig config_from_json(const json& j) {
  SurrogateConfig c;
  c.variant = parse_surrogate_variant(j.at("variant").get<std::string>());
  c.weights = {j.at("alpha1").get<double>(), j.at("alpha2").get<double>(),
               j.at("alpha3").get<double>()};
  c.diversity_formula = parse_diversity_formula(j.at("diversity_formula").get<std::string>());
  c.similarity_direction =
      parse_similarity_direction(j.at("similarity_direction").get<std::string>());
  c.substitute_arch = j.at("substitute_arch").get<std::string>();
  c.generator_arch = j.at("generator_arch").get<std::string>();
  c.latent_dim = j.at("latent_dim").get<int64_t>();
  c.non_saturating = j.at("non_saturating").get<bool>();
  c.batch_size = j.at("batch_size").get<int64_t>();
  c.max_steps = j.at("max_steps").get<int64_t>();
  c.generator_lr = j.at("generator_lr").get<double>();
  c.discriminator_lr = j.at("discriminator_lr").get<double>();
  c.substitute_lr = j.at("substitute_lr").get<double>();
  c.bim_epsilon = j.at("bim_epsilon").get<double>();
  c.bim_step = j.at("bim_step").get<double>();
  c.bim_iterations = j.at("bim_iterations").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  c.log_every = j.at("log_every").get<int64_t>();
  return c;
}

json record_to_json(const TrainingRecord& r) {
  return {{"step", r.step},
          {"loss_d", r.loss_d},
          {"loss_g", r.loss_g},
          {"loss_g_adv", r.loss_g_adv},
          {"class_control", r.class_control},
          {"similarity", r.similarity},
          {"diversity", r.diversity},
          {"distill", r.distill},
          {"ledger_used", r.ledger_used}};
}

template <typename Net>
void save_module(Net& net, const std::filesystem::path& path) {
  torch::serialize::OutputArchive archive;
  net.save(archive);
  archive.save_to(path.string());
}

template <typename Net>
void load_module(Net& net, const std::filesystem::path& path) {
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  net.load(archive);
}

}  // namespace

std::shared_ptr<GeneratorNet> make_generator(std::string_view arch, int64_t latent_dim,
                                             int64_t num_classes, const ImageShape& shape) {
  if (latent_dim < 1) throw InvalidArgument("latent dimension must be positive");
  if (arch == "auto") arch = shape.channels == 3 ? "dcgan" : "mlp";
  if (arch == "mlp") return std::make_shared<MlpGenerator>(latent_dim, num_classes, shape);
  if (arch == "dcgan") {
    if (shape.height % 8 != 0 || shape.width % 8 != 0) {
      throw ShapeMismatch("dcgan generator needs H and W divisible by 8, got " + shape.to_string());
    }
    return std::make_shared<DcganGenerator>(latent_dim, num_classes, shape);
  }
  throw InvalidArgument("unknown generator architecture: '" + std::string(arch) + "'");
}

DiscriminatorNet::DiscriminatorNet(const ImageShape& shape) {
  body_ = register_module("body", discriminator_body(shape));
}

torch::Tensor DiscriminatorNet::forward(const torch::Tensor& x) { return body_->forward(x).squeeze(1); }

void LossWeights::validate() const {
  for (double a : {alpha1, alpha2, alpha3}) {
    if (!std::isfinite(a) || a < 0.0) throw InvalidArgument("loss weights must be finite and >= 0");
  }
}

GanLosses gan_losses(const torch::Tensor& real_logits, const torch::Tensor& fake_logits) {
  auto log_d_real = torch::log_sigmoid(real_logits);
  auto log_one_minus_d_fake = torch::log_sigmoid(-fake_logits);
  return {-(log_d_real.mean() + log_one_minus_d_fake.mean()), log_one_minus_d_fake.mean()};
}

GanLosses gan_losses(DiscriminatorNet& d, const torch::Tensor& x_real, const torch::Tensor& x_fake) {
  return gan_losses(d.forward(x_real), d.forward(x_fake));
}

torch::Tensor class_control_loss(const torch::Tensor& substitute_probs, const torch::Tensor& y) {
  return -clamped_log(substitute_probs).gather(1, y.unsqueeze(1)).mean();
}

torch::Tensor distill_loss(const torch::Tensor& substitute_probs, const OracleResponse& target) {
  if (const auto* p = std::get_if<ProbabilityResponse>(&target)) {
    return probability_distance(substitute_probs, p->probabilities.to(substitute_probs.scalar_type()));
  }
  return class_control_loss(substitute_probs, std::get<LabelResponse>(target).labels);
}

torch::Tensor distill_loss(const ClassifierModel& substitute, const BlackBoxOracle& oracle,
                           const torch::Tensor& x) {
  auto response = oracle.query(x, Charge::kTraining);
  return distill_loss(substitute.probabilities(x), response);
}

torch::Tensor inter_class_similarity(const torch::Tensor& substitute_probs, const torch::Tensor& y) {
  return cw_margin(substitute_probs, y).mean();
}

DiversityFormula parse_diversity_formula(std::string_view name) {
  if (name == "entropy") return DiversityFormula::kEntropy;
  if (name == "negative_mean") return DiversityFormula::kNegativeMean;
  throw InvalidArgument("unknown diversity formula: '" + std::string(name) + "'");
}

std::string_view to_string(DiversityFormula formula) {
  return formula == DiversityFormula::kEntropy ? "entropy" : "negative_mean";
}

torch::Tensor intra_class_diversity(const torch::Tensor& substitute_probs, const torch::Tensor& y,
                                    DiversityFormula formula) {
  const int64_t num_classes = substitute_probs.size(1);
  std::vector<torch::Tensor> per_class;
  for (int64_t c = 0; c < num_classes; ++c) {
    auto members = y.eq(c).nonzero().squeeze(1);
    if (members.numel() == 0) continue;
    auto keep = torch::arange(num_classes, torch::kInt64);
    keep = keep.masked_select(keep.ne(c));
    auto others = substitute_probs.index_select(0, members).index_select(1, keep).mean(0);
    if (formula == DiversityFormula::kEntropy) {
      auto p = others / others.sum().clamp_min(kProbFloor);
      per_class.push_back(-(p * clamped_log(p)).sum());
    } else {
      per_class.push_back(-others.mean());
    }
  }
  if (per_class.empty()) return torch::zeros({}, substitute_probs.options());
  return -torch::stack(per_class).mean();
}

SurrogateVariant parse_surrogate_variant(std::string_view name) {
  if (name == "base") return SurrogateVariant::kBase;
  if (name == "adv" || name == "+adv") return SurrogateVariant::kAdv;
  if (name == "sim" || name == "+sim") return SurrogateVariant::kSim;
  if (name == "div" || name == "+div" || name == "full") return SurrogateVariant::kDiv;
  throw InvalidArgument("unknown surrogate variant: '" + std::string(name) + "'");
}

std::string_view to_string(SurrogateVariant variant) {
  switch (variant) {
    case SurrogateVariant::kBase: return "base";
    case SurrogateVariant::kAdv: return "adv";
    case SurrogateVariant::kSim: return "sim";
    case SurrogateVariant::kDiv: return "div";
  }
  return "?";
}

SimilarityDirection parse_similarity_direction(std::string_view name) {
  if (name == "maximize") return SimilarityDirection::kMaximize;
  if (name == "minimize") return SimilarityDirection::kMinimize;
  throw InvalidArgument("unknown similarity direction: '" + std::string(name) + "'");
}

std::string_view to_string(SimilarityDirection direction) {
  return direction == SimilarityDirection::kMaximize ? "maximize" : "minimize";
}

void SurrogateConfig::validate() const {
  weights.validate();
  if (latent_dim < 1) throw InvalidArgument("latent_dim must be >= 1");
  if (batch_size < 2) throw InvalidArgument("batch_size must be >= 2");
  if (max_steps < 0) throw InvalidArgument("max_steps must be >= 0");
  if (!(generator_lr > 0) || !(discriminator_lr > 0) || !(substitute_lr > 0)) {
    throw InvalidArgument("learning rates must be positive");
  }
  if (log_every < 1) throw InvalidArgument("log_every must be >= 1");
  AttackParams bim{bim_epsilon, bim_step, bim_iterations};
  bim.validate();
}

SurrogateBundle make_surrogate_bundle(const ImageShape& shape, int64_t num_classes,
                                      const SurrogateConfig& config) {
  config.validate();
  torch::manual_seed(config.seed);
  SurrogateBundle bundle;
  bundle.generator = make_generator(config.generator_arch, config.latent_dim, num_classes, shape);
  bundle.discriminator = std::make_shared<DiscriminatorNet>(shape);
  bundle.substitute = make_classifier(config.substitute_arch, shape, num_classes);
  bundle.config = config;
  return bundle;
}

SurrogateBundle train_surrogate(const BlackBoxOracle& oracle, const ImageBatch& real_data,
                                const SurrogateConfig& config, const TrainingCallback& on_record) {
  real_data.validate();
  const int64_t num_classes = oracle.num_classes();
  if (real_data.num_classes != num_classes) {
    throw InvalidArgument("real data and oracle disagree on the class count");
  }
  SurrogateBundle bundle = make_surrogate_bundle(real_data.shape(), num_classes, config);
  bundle.query_budget = oracle.ledger().budget();
  auto& g = *bundle.generator;
  auto& d = *bundle.discriminator;
  auto& s = bundle.substitute;

  const bool use_adv = config.variant != SurrogateVariant::kBase;
  const bool use_sim =
      config.variant == SurrogateVariant::kSim || config.variant == SurrogateVariant::kDiv;
  const bool use_div = config.variant == SurrogateVariant::kDiv;
  const double sim_sign =
      config.similarity_direction == SimilarityDirection::kMaximize ? -1.0 : 1.0;

  torch::optim::Adam opt_g(g.parameters(),
                           torch::optim::AdamOptions(config.generator_lr).betas({0.5, 0.999}));
  torch::optim::Adam opt_d(d.parameters(),
                           torch::optim::AdamOptions(config.discriminator_lr).betas({0.5, 0.999}));
  torch::optim::Adam opt_s(s.net->parameters(), torch::optim::AdamOptions(config.substitute_lr));
  auto rng = at::make_generator<at::CPUGeneratorImpl>(config.seed);

  AttackParams bim_params{config.bim_epsilon, config.bim_step, config.bim_iterations};
  bim_params.early_stop = false;
  const LogitsFn substitute_logits = [&s](const torch::Tensor& x) { return s.logits(x); };

  g.train();
  d.train();
  s.net->train();
  const int64_t start_used = oracle.ledger().used();
  for (int64_t step = 1; step <= config.max_steps; ++step) {
    const int64_t n = std::min(config.batch_size, oracle.ledger().remaining());
    if (n < 1) break;

    // Batch norm needs two samples even when a single query is left.
    const int64_t gen_n = std::max<int64_t>(n, 2);
    auto z = torch::randn({gen_n, config.latent_dim}, rng, torch::kFloat32);
    auto y = torch::randint(num_classes, {gen_n}, rng, torch::kInt64);
    auto x_fake = g.forward(z, y);

    // Substitute distillation on the generated batch: the only target queries.
    torch::Tensor loss_s;
    try {
      loss_s = distill_loss(s, oracle, x_fake.detach().narrow(0, 0, n));
    } catch (const BudgetExhausted&) {
      break;
    }
    check_finite(loss_s, "distill loss", step);
    opt_s.zero_grad();
    loss_s.backward();
    opt_s.step();

    auto real_idx = torch::randint(real_data.size(), {gen_n}, rng, torch::kInt64);
    auto real = real_data.select(real_idx);

    // Discriminator on benign real, optionally BIM-augmented, and fake data.
    auto fake_logits_d = d.forward(x_fake.detach());
    auto loss_d = gan_losses(d.forward(real.pixels), fake_logits_d).discriminator;
    if (use_adv) {
      AdvLossSpec spec{AdvLossKind::kClassification, false, real.labels, {}};
      s.net->eval();
      auto x_adv = bim(substitute_logits, real.pixels, spec, bim_params).adversarial;
      s.net->train();
      loss_d = loss_d + gan_losses(d.forward(x_adv), fake_logits_d).discriminator;
    }
    check_finite(loss_d, "discriminator loss", step);
    opt_d.zero_grad();
    loss_d.backward();
    opt_d.step();

    // Generator objective.
    auto fake_logits_g = d.forward(x_fake);
    auto gen_gan = config.non_saturating ? -torch::log_sigmoid(fake_logits_g).mean()
                                         : torch::log_sigmoid(-fake_logits_g).mean();
    auto loss_g_adv = use_adv ? gen_gan : torch::zeros({});
    auto probs = s.probabilities(x_fake);
    auto cnt = class_control_loss(probs, y);
    auto sim = inter_class_similarity(probs, y);
    auto div = intra_class_diversity(probs, y, config.diversity_formula);
    auto total = gen_gan + loss_g_adv + config.weights.alpha1 * cnt;
    if (use_sim) total = total + sim_sign * config.weights.alpha2 * sim;
    if (use_div) total = total + config.weights.alpha3 * div;
    check_finite(total, "generator loss", step);
    opt_g.zero_grad();
    total.backward();
    opt_g.step();

    bundle.steps = step;
    const bool last = oracle.ledger().remaining() < 1 || step == config.max_steps;
    if (step % config.log_every == 0 || step == 1 || last) {
      TrainingRecord record{step,
                            loss_d.item<double>(),
                            gen_gan.item<double>(),
                            loss_g_adv.item<double>(),
                            cnt.item<double>(),
                            sim.item<double>(),
                            div.item<double>(),
                            loss_s.item<double>(),
                            oracle.ledger().used()};
      bundle.history.push_back(record);
      if (on_record) on_record(record);
    }
  }
  bundle.queries_used = oracle.ledger().used() - start_used;
  g.eval();
  d.eval();
  s.net->eval();
  return bundle;
}

void save_surrogate(const SurrogateBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_module(*bundle.generator, dir / "generator.pt");
  save_module(*bundle.discriminator, dir / "discriminator.pt");
  save_module(*bundle.substitute.net, dir / "substitute.pt");
  const auto& shape = bundle.generator->image_shape();
  json meta = {{"config", config_to_json(bundle.config)},
               {"num_classes", bundle.generator->num_classes()},
               {"image_shape", {shape.channels, shape.height, shape.width}},
               {"queries_used", bundle.queries_used},
               {"query_budget", bundle.query_budget ? json(*bundle.query_budget) : json(nullptr)},
               {"steps", bundle.steps}};
  std::ofstream(dir / "bundle.json") << meta.dump(2) << "\n";
  std::ofstream history(dir / "history.ndjson");
  for (const auto& r : bundle.history) history << record_to_json(r).dump() << "\n";
}

SurrogateBundle load_surrogate(const std::filesystem::path& dir) {
  std::ifstream in(dir / "bundle.json");
  if (!in) throw InvalidArgument("no surrogate checkpoint in " + dir.string());
  const json meta = json::parse(in);
  const auto dims = meta.at("image_shape").get<std::vector<int64_t>>();
  const ImageShape shape{dims.at(0), dims.at(1), dims.at(2)};
  auto bundle = make_surrogate_bundle(shape, meta.at("num_classes").get<int64_t>(),
                                      config_from_json(meta.at("config")));
  load_module(*bundle.generator, dir / "generator.pt");
  load_module(*bundle.discriminator, dir / "discriminator.pt");
  load_module(*bundle.substitute.net, dir / "substitute.pt");
  bundle.queries_used = meta.at("queries_used").get<int64_t>();
  if (!meta.at("query_budget").is_null()) bundle.query_budget = meta.at("query_budget").get<int64_t>();
  bundle.steps = meta.at("steps").get<int64_t>();
  std::ifstream history(dir / "history.ndjson");
  for (std::string line; std::getline(history, line);) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    bundle.history.push_back({j.at("step"), j.at("loss_d"), j.at("loss_g"), j.at("loss_g_adv"),
                              j.at("class_control"), j.at("similarity"), j.at("diversity"),
                              j.at("distill"), j.at("ledger_used")});
  }
  bundle.generator->eval();
  bundle.discriminator->eval();
  bundle.substitute.net->eval();
  return bundle;
}

}  // namespace gsba
