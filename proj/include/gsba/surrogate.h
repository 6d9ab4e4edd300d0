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

#ifndef GSBA_SURROGATE_H_
#define GSBA_SURROGATE_H_

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gsba/data.h"
#include "gsba/models.h"
#include "gsba/oracle.h"

namespace gsba {

// ---------------------------------------------------------------------------
// Networks
// ---------------------------------------------------------------------------

// Conditional generator G(z, y) -> image in [0,1]. Outputs pass through a
// sigmoid; in eval() mode the forward map is deterministic.
class GeneratorNet : public torch::nn::Module {
 public:
  GeneratorNet(int64_t latent_dim, int64_t num_classes, const ImageShape& shape)
      : latent_dim_(latent_dim), num_classes_(num_classes), shape_(shape) {}

  // z: (N, latent_dim) float, y: (N) int64 -> (N, C, H, W).
  virtual torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& y) = 0;

  int64_t latent_dim() const { return latent_dim_; }
  int64_t num_classes() const { return num_classes_; }
  const ImageShape& image_shape() const { return shape_; }

 private:
  int64_t latent_dim_;
  int64_t num_classes_;
  ImageShape shape_;
};

// Generator ids: "mlp" (two batch-normalized hidden layers over [z, onehot(y)]),
// "dcgan" (projection to 4x4 feature maps and transposed convolutions; needs
// H and W divisible by 8), "auto" (dcgan for 3-channel inputs, mlp otherwise).
std::shared_ptr<GeneratorNet> make_generator(std::string_view arch, int64_t latent_dim,
                                             int64_t num_classes, const ImageShape& shape);

// Unconditional real/fake discriminator; forward() returns the logit of D(x).
class DiscriminatorNet : public torch::nn::Module {
 public:
  explicit DiscriminatorNet(const ImageShape& shape);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};

// ---------------------------------------------------------------------------
// Loss terms
// ---------------------------------------------------------------------------

struct LossWeights {
  double alpha1 = 1.0;  // class control
  double alpha2 = 1.0;  // inter-class similarity
  double alpha3 = 1.0;  // intra-class diversity

  // Throws InvalidArgument on negative or non-finite weights.
  void validate() const;
};

struct GanLosses {
  torch::Tensor discriminator;  // -(E[log D(real)] + E[log(1 - D(fake))]), minimized by D
  torch::Tensor generator;      // E[log(1 - D(fake))], minimized by G
};

// Inputs are discriminator logits, D(x) = sigmoid(logit).
GanLosses gan_losses(const torch::Tensor& real_logits, const torch::Tensor& fake_logits);
GanLosses gan_losses(DiscriminatorNet& d, const torch::Tensor& x_real, const torch::Tensor& x_fake);

// Cross-entropy of S's probabilities against the conditioning labels.
torch::Tensor class_control_loss(const torch::Tensor& substitute_probs, const torch::Tensor& y);

// P-mode: mean over the batch of ||T(x) - S(x)||^2.
// L-mode: cross-entropy of S(x) against the oracle labels.
torch::Tensor distill_loss(const torch::Tensor& substitute_probs, const OracleResponse& target);

// Queries the oracle on `x` with Charge::kTraining; BudgetExhausted
// propagates with the ledger unchanged.
torch::Tensor distill_loss(const ClassifierModel& substitute, const BlackBoxOracle& oracle,
                           const torch::Tensor& x);

// Batch mean of max_{j != y} log S_j - log S_y.
torch::Tensor inter_class_similarity(const torch::Tensor& substitute_probs, const torch::Tensor& y);

enum class DiversityFormula { kEntropy, kNegativeMean };

DiversityFormula parse_diversity_formula(std::string_view name);
std::string_view to_string(DiversityFormula formula);

// For every class c present in `y`: average the probability vectors of the
// samples labelled c with column c removed, renormalize, and take the Shannon
// entropy. Returns minus the mean entropy over present classes, so lower is
// more diverse. kNegativeMean replaces the entropy with -(1/K) sum p_k of the
// averaged (unnormalized) vector.
torch::Tensor intra_class_diversity(const torch::Tensor& substitute_probs, const torch::Tensor& y,
                                    DiversityFormula formula = DiversityFormula::kEntropy);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

// Cumulative loss sets of the surrogate ablation: base uses the GAN and
// class-control terms on benign data, adv adds the BIM-augmented stream, sim
// adds inter-class similarity, div adds intra-class diversity (full method).
enum class SurrogateVariant { kBase, kAdv, kSim, kDiv };

SurrogateVariant parse_surrogate_variant(std::string_view name);  // base|adv|sim|div
std::string_view to_string(SurrogateVariant variant);

// How the inter-class similarity term enters the generator objective.
// kMaximize subtracts alpha2 * L_sim (samples drift toward the boundary);
// kMinimize adds it.
enum class SimilarityDirection { kMaximize, kMinimize };

SimilarityDirection parse_similarity_direction(std::string_view name);
std::string_view to_string(SimilarityDirection direction);

struct SurrogateConfig {
  SurrogateVariant variant = SurrogateVariant::kDiv;
  LossWeights weights;
  DiversityFormula diversity_formula = DiversityFormula::kEntropy;
  SimilarityDirection similarity_direction = SimilarityDirection::kMaximize;
  std::string substitute_arch = "sub-cnn";
  std::string generator_arch = "auto";
  int64_t latent_dim = 128;
  // Generator GAN term: -E[log D(G)] when true, E[log(1 - D(G))] otherwise.
  bool non_saturating = true;
  int64_t batch_size = 128;
  // Upper bound on optimizer steps; the query budget usually ends training.
  int64_t max_steps = 1'000'000;
  double generator_lr = 2e-4;
  double discriminator_lr = 2e-4;
  double substitute_lr = 1e-3;
  // BIM augmentation against S.
  double bim_epsilon = 8.0 / 255.0;
  double bim_step = 2.0 / 255.0;
  int bim_iterations = 10;
  uint64_t seed = 0;
  int64_t log_every = 50;

  void validate() const;
};

// One record of the training curve.
struct TrainingRecord {
  int64_t step = 0;
  double loss_d = 0.0;
  double loss_g = 0.0;
  double loss_g_adv = 0.0;
  double class_control = 0.0;
  double similarity = 0.0;
  double diversity = 0.0;
  double distill = 0.0;
  int64_t ledger_used = 0;
};

struct SurrogateBundle {
  std::shared_ptr<GeneratorNet> generator;
  std::shared_ptr<DiscriminatorNet> discriminator;
  ClassifierModel substitute;
  SurrogateConfig config;
  int64_t queries_used = 0;
  std::optional<int64_t> query_budget;
  int64_t steps = 0;
  std::vector<TrainingRecord> history;
};

SurrogateBundle make_surrogate_bundle(const ImageShape& shape, int64_t num_classes,
                                      const SurrogateConfig& config);

using TrainingCallback = std::function<void(const TrainingRecord&)>;

// Alternates S, D and G updates until the oracle's budget or max_steps runs
// out. Every target query goes through distill_loss with Charge::kTraining.
// The final batch shrinks to the remaining budget, so a finite budget B ends
// with ledger.used == B whenever max_steps allows.
SurrogateBundle train_surrogate(const BlackBoxOracle& oracle, const ImageBatch& real_data,
                                const SurrogateConfig& config,
                                const TrainingCallback& on_record = {});

// Directory checkpoint: generator.pt, discriminator.pt, substitute.pt,
// bundle.json (config, ledger snapshot) and history.ndjson.
void save_surrogate(const SurrogateBundle& bundle, const std::filesystem::path& dir);
SurrogateBundle load_surrogate(const std::filesystem::path& dir);

}  // namespace gsba

#endif  // GSBA_SURROGATE_H_
