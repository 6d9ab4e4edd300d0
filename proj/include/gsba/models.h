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

#ifndef GSBA_MODELS_H_
#define GSBA_MODELS_H_

#include <torch/torch.h>

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "gsba/data.h"

namespace gsba {

// Base for every image classifier in the zoo; forward() returns logits (N, C).
class ClassifierNet : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(torch::Tensor x) = 0;
};

// Architecture ids accepted by make_classifier().
//   small-cnn  four 3x3 conv layers, any channel count, H and W divisible by 4
//   sub-cnn    two strided conv layers; the desk-scale substitute
//   alexnet, vgg11, vgg13, vgg16, vgg19, resnet18, resnet20, resnet50
//              CIFAR-style variants, require 3x32x32 inputs
std::vector<std::string> known_architectures();

// A classifier together with what it was built for.
struct ClassifierModel {
  std::string arch;
  ImageShape input_shape;
  int64_t num_classes = 0;
  std::shared_ptr<ClassifierNet> net;

  torch::Tensor logits(const torch::Tensor& pixels) const;
  torch::Tensor probabilities(const torch::Tensor& pixels) const;
  // argmax labels, computed without gradient tracking.
  torch::Tensor predict(const torch::Tensor& pixels) const;
  LabelFn label_fn() const;
};

// Throws ShapeMismatch when `arch` cannot take `input_shape`, InvalidArgument
// for unknown ids.
ClassifierModel make_classifier(std::string_view arch, const ImageShape& input_shape,
                                int64_t num_classes);

struct TargetTrainConfig {
  int epochs = 6;
  int64_t batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  uint64_t seed = 1;
  bool verbose = false;
};

struct TrainedTarget {
  ClassifierModel model;
  double test_accuracy = 0.0;
  TargetTrainConfig config;
};

double accuracy(const ClassifierModel& model, const ImageBatch& data, int64_t batch_size = 500);

// Adam with a step decay at 2/3 of the schedule. Deterministic given seed.
TrainedTarget train_target(std::string_view arch, const ImageBatch& train, const ImageBatch& test,
                           const TargetTrainConfig& config);

// Single-file checkpoint: architecture id, shape, class count, training
// metadata and parameters.
void save_target(const TrainedTarget& target, const std::filesystem::path& path);
TrainedTarget load_target(const std::filesystem::path& path);

// Stable identifier for eval-set bookkeeping ("small-cnn@seed1").
std::string target_id(const TrainedTarget& target);

}  // namespace gsba

#endif  // GSBA_MODELS_H_
