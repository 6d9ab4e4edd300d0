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

#include "gsba/models.h"

#include <algorithm>
#include <array>
#include <iostream>

#include "gsba/errors.h"

namespace gsba {
namespace {

namespace nn = torch::nn;

nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false));
}

class SmallCnn : public ClassifierNet {
 public:
  SmallCnn(const ImageShape& shape, int64_t num_classes) {
    features_ = register_module(
        "features",
        nn::Sequential(nn::Conv2d(nn::Conv2dOptions(shape.channels, 16, 3).padding(1)), nn::ReLU(),
                       nn::Conv2d(nn::Conv2dOptions(16, 32, 3).padding(1)), nn::ReLU(),
                       nn::MaxPool2d(2),
                       nn::Conv2d(nn::Conv2dOptions(32, 32, 3).padding(1)), nn::ReLU(),
                       nn::Conv2d(nn::Conv2dOptions(32, 64, 3).padding(1)), nn::ReLU(),
                       nn::MaxPool2d(2)));
    const int64_t flat = 64 * (shape.height / 4) * (shape.width / 4);
    classifier_ = register_module(
        "classifier", nn::Sequential(nn::Flatten(), nn::Linear(flat, 128), nn::ReLU(),
                                     nn::Linear(128, num_classes)));
  }
  torch::Tensor forward(torch::Tensor x) override { return classifier_->forward(features_->forward(x)); }

 private:
  nn::Sequential features_{nullptr};
  nn::Sequential classifier_{nullptr};
};

class SubCnn : public ClassifierNet {
 public:
  SubCnn(const ImageShape& shape, int64_t num_classes) {
    const int64_t flat = 32 * ((shape.height + 3) / 4) * ((shape.width + 3) / 4);
    body_ = register_module(
        "body",
        nn::Sequential(nn::Conv2d(nn::Conv2dOptions(shape.channels, 16, 5).stride(2).padding(2)),
                       nn::ReLU(), nn::Conv2d(nn::Conv2dOptions(16, 32, 5).stride(2).padding(2)),
                       nn::ReLU(), nn::Flatten(), nn::Linear(flat, num_classes)));
  }
  torch::Tensor forward(torch::Tensor x) override { return body_->forward(x); }

 private:
  nn::Sequential body_{nullptr};
};

class AlexNetCifar : public ClassifierNet {
 public:
  explicit AlexNetCifar(int64_t num_classes) {
    features_ = register_module(
        "features",
        nn::Sequential(nn::Conv2d(nn::Conv2dOptions(3, 64, 5).padding(2)), nn::ReLU(),
                       nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2)),
                       nn::Conv2d(nn::Conv2dOptions(64, 192, 5).padding(2)), nn::ReLU(),
                       nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2)),
                       nn::Conv2d(nn::Conv2dOptions(192, 384, 3).padding(1)), nn::ReLU(),
                       nn::Conv2d(nn::Conv2dOptions(384, 256, 3).padding(1)), nn::ReLU(),
                       nn::Conv2d(nn::Conv2dOptions(256, 256, 3).padding(1)), nn::ReLU(),
                       nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2))));
    classifier_ = register_module(
        "classifier",
        nn::Sequential(nn::Flatten(), nn::Dropout(0.5), nn::Linear(256 * 3 * 3, 1024), nn::ReLU(),
                       nn::Dropout(0.5), nn::Linear(1024, 1024), nn::ReLU(),
                       nn::Linear(1024, num_classes)));
  }
  torch::Tensor forward(torch::Tensor x) override { return classifier_->forward(features_->forward(x)); }

 private:
  nn::Sequential features_{nullptr};
  nn::Sequential classifier_{nullptr};
};

// 0 marks a 2x2 max-pool.
std::vector<int64_t> vgg_config(int depth) {
  switch (depth) {
    case 11: return {64, 0, 128, 0, 256, 256, 0, 512, 512, 0, 512, 512, 0};
    case 13: return {64, 64, 0, 128, 128, 0, 256, 256, 0, 512, 512, 0, 512, 512, 0};
    case 16:
      return {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0};
    case 19:
      return {64,  64,  0,   128, 128, 0,   256, 256, 256, 256, 0,
              512, 512, 512, 512, 0,   512, 512, 512, 512, 0};
  }
  throw InvalidArgument("unsupported VGG depth " + std::to_string(depth));
}

class VggCifar : public ClassifierNet {
 public:
  VggCifar(int depth, int64_t num_classes) {
    nn::Sequential features;
    int64_t in = 3;
    for (int64_t width : vgg_config(depth)) {
      if (width == 0) {
        features->push_back(nn::MaxPool2d(2));
        continue;
      }
      features->push_back(nn::Conv2d(nn::Conv2dOptions(in, width, 3).padding(1)));
      features->push_back(nn::BatchNorm2d(width));
      features->push_back(nn::ReLU());
      in = width;
    }
    features_ = register_module("features", features);
    classifier_ = register_module("classifier",
                                  nn::Sequential(nn::Flatten(), nn::Linear(512, num_classes)));
  }
  torch::Tensor forward(torch::Tensor x) override { return classifier_->forward(features_->forward(x)); }

 private:
  nn::Sequential features_{nullptr};
  nn::Sequential classifier_{nullptr};
};

class BasicBlock : public nn::Module {
 public:
  BasicBlock(int64_t in, int64_t out, int64_t stride) {
    conv1_ = register_module("conv1", conv3x3(in, out, stride));
    bn1_ = register_module("bn1", nn::BatchNorm2d(out));
    conv2_ = register_module("conv2", conv3x3(out, out));
    bn2_ = register_module("bn2", nn::BatchNorm2d(out));
    if (stride != 1 || in != out) {
      shortcut_ = register_module(
          "shortcut",
          nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)),
                         nn::BatchNorm2d(out)));
    }
  }
  torch::Tensor forward(const torch::Tensor& x) {
    auto y = torch::relu(bn1_->forward(conv1_->forward(x)));
    y = bn2_->forward(conv2_->forward(y));
    return torch::relu(y + (shortcut_ ? shortcut_->forward(x) : x));
  }

 private:
  nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr};
  nn::Sequential shortcut_{nullptr};
};

class Bottleneck : public nn::Module {
 public:
  static constexpr int64_t kExpansion = 4;
  Bottleneck(int64_t in, int64_t planes, int64_t stride) {
    const int64_t out = planes * kExpansion;
    body_ = register_module(
        "body", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, planes, 1).bias(false)),
                               nn::BatchNorm2d(planes), nn::ReLU(), conv3x3(planes, planes, stride),
                               nn::BatchNorm2d(planes), nn::ReLU(),
                               nn::Conv2d(nn::Conv2dOptions(planes, out, 1).bias(false)),
                               nn::BatchNorm2d(out)));
    if (stride != 1 || in != out) {
      shortcut_ = register_module(
          "shortcut",
          nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)),
                         nn::BatchNorm2d(out)));
    }
  }
  torch::Tensor forward(const torch::Tensor& x) {
    return torch::relu(body_->forward(x) + (shortcut_ ? shortcut_->forward(x) : x));
  }

 private:
  nn::Sequential body_{nullptr};
  nn::Sequential shortcut_{nullptr};
};

// CIFAR ResNets: a 3x3 stem and no initial pooling. `widths` gives the
// channel count per stage, `blocks` the blocks per stage.
template <typename Block, int64_t Expansion>
class ResNetCifar : public ClassifierNet {
 public:
  ResNetCifar(std::vector<int64_t> widths, std::vector<int64_t> blocks, int64_t num_classes) {
    stem_ = register_module("stem", nn::Sequential(conv3x3(3, widths.front()),
                                                   nn::BatchNorm2d(widths.front()), nn::ReLU()));
    int64_t in = widths.front();
    for (size_t stage = 0; stage < widths.size(); ++stage) {
      for (int64_t b = 0; b < blocks[stage]; ++b) {
        const int64_t stride = (stage > 0 && b == 0) ? 2 : 1;
        auto block = std::make_shared<Block>(in, widths[stage], stride);
        layers_.push_back(register_module(
            "layer" + std::to_string(stage) + "_" + std::to_string(b), block));
        in = widths[stage] * Expansion;
      }
    }
    fc_ = register_module("fc", nn::Linear(in, num_classes));
  }
  torch::Tensor forward(torch::Tensor x) override {
    x = stem_->forward(x);
    for (auto& layer : layers_) x = layer->forward(x);
    x = torch::adaptive_avg_pool2d(x, {1, 1}).flatten(1);
    return fc_->forward(x);
  }

 private:
  nn::Sequential stem_{nullptr};
  std::vector<std::shared_ptr<Block>> layers_;
  nn::Linear fc_{nullptr};
};

void require_shape(std::string_view arch, const ImageShape& actual, const ImageShape& expected) {
  if (!(actual == expected)) {
    throw ShapeMismatch(std::string(arch) + " expects " + expected.to_string() + " inputs, got " +
                        actual.to_string());
  }
}

std::shared_ptr<ClassifierNet> build(std::string_view arch, const ImageShape& shape,
                                     int64_t num_classes) {
  const ImageShape cifar{3, 32, 32};
  if (arch == "small-cnn") {
    if (shape.channels <= 0 || shape.height % 4 != 0 || shape.width % 4 != 0 || shape.height < 8 ||
        shape.width < 8) {
      throw ShapeMismatch("small-cnn needs H and W divisible by 4, got " + shape.to_string());
    }
    return std::make_shared<SmallCnn>(shape, num_classes);
  }
  if (arch == "sub-cnn") {
    if (shape.channels <= 0 || shape.height < 4 || shape.width < 4) {
      throw ShapeMismatch("sub-cnn input too small: " + shape.to_string());
    }
    return std::make_shared<SubCnn>(shape, num_classes);
  }
  if (arch == "alexnet") {
    require_shape(arch, shape, cifar);
    return std::make_shared<AlexNetCifar>(num_classes);
  }
  for (int depth : {11, 13, 16, 19}) {
    if (arch == "vgg" + std::to_string(depth)) {
      require_shape(arch, shape, cifar);
      return std::make_shared<VggCifar>(depth, num_classes);
    }
  }
  if (arch == "resnet20") {
    require_shape(arch, shape, cifar);
    return std::make_shared<ResNetCifar<BasicBlock, 1>>(std::vector<int64_t>{16, 32, 64},
                                                        std::vector<int64_t>{3, 3, 3}, num_classes);
  }
  if (arch == "resnet18") {
    require_shape(arch, shape, cifar);
    return std::make_shared<ResNetCifar<BasicBlock, 1>>(
        std::vector<int64_t>{64, 128, 256, 512}, std::vector<int64_t>{2, 2, 2, 2}, num_classes);
  }
  if (arch == "resnet50") {
    require_shape(arch, shape, cifar);
    return std::make_shared<ResNetCifar<Bottleneck, Bottleneck::kExpansion>>(
        std::vector<int64_t>{64, 128, 256, 512}, std::vector<int64_t>{3, 4, 6, 3}, num_classes);
  }
  throw InvalidArgument("unknown architecture: '" + std::string(arch) + "'");
}

}  // namespace

std::vector<std::string> known_architectures() {
  return {"small-cnn", "sub-cnn", "alexnet", "vgg11",    "vgg13",
          "vgg16",     "vgg19",   "resnet18", "resnet20", "resnet50"};
}

torch::Tensor ClassifierModel::logits(const torch::Tensor& pixels) const { return net->forward(pixels); }

torch::Tensor ClassifierModel::probabilities(const torch::Tensor& pixels) const {
  return torch::softmax(net->forward(pixels), 1);
}

torch::Tensor ClassifierModel::predict(const torch::Tensor& pixels) const {
  torch::NoGradGuard no_grad;
  return net->forward(pixels).argmax(1);
}

LabelFn ClassifierModel::label_fn() const {
  return [net = net](const torch::Tensor& pixels) {
    torch::NoGradGuard no_grad;
    return net->forward(pixels).argmax(1);
  };
}

ClassifierModel make_classifier(std::string_view arch, const ImageShape& input_shape,
                                int64_t num_classes) {
  if (num_classes < 2) throw InvalidArgument("a classifier needs at least two classes");
  ClassifierModel model;
  model.arch = std::string(arch);
  model.input_shape = input_shape;
  model.num_classes = num_classes;
  model.net = build(arch, input_shape, num_classes);
  return model;
}

double accuracy(const ClassifierModel& model, const ImageBatch& data, int64_t batch_size) {
  if (data.size() == 0) return 0.0;
  const bool was_training = model.net->is_training();
  model.net->eval();
  int64_t correct = 0;
  for (int64_t begin = 0; begin < data.size(); begin += batch_size) {
    auto chunk = data.slice(begin, begin + batch_size);
    correct += model.predict(chunk.pixels).eq(chunk.labels).sum().item<int64_t>();
  }
  model.net->train(was_training);
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainedTarget train_target(std::string_view arch, const ImageBatch& train, const ImageBatch& test,
                           const TargetTrainConfig& config) {
  train.validate();
  torch::manual_seed(config.seed);
  TrainedTarget result{make_classifier(arch, train.shape(), train.num_classes), 0.0, config};
  auto& model = result.model;

  torch::optim::Adam optimizer(
      model.net->parameters(),
      torch::optim::AdamOptions(config.learning_rate).weight_decay(config.weight_decay));
  auto gen = at::make_generator<at::CPUGeneratorImpl>(config.seed);
  const int decay_epoch = std::max(1, (2 * config.epochs) / 3);

  model.net->train();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (epoch == decay_epoch) {
      for (auto& group : optimizer.param_groups()) {
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(config.learning_rate * 0.1);
      }
    }
    auto order = torch::randperm(train.size(), gen, torch::kInt64);
    double loss_sum = 0.0;
    int64_t batches = 0;
    for (int64_t begin = 0; begin < train.size(); begin += config.batch_size) {
      auto batch = train.select(order.slice(0, begin, begin + config.batch_size));
      optimizer.zero_grad();
      auto loss = torch::nn::functional::cross_entropy(model.logits(batch.pixels), batch.labels);
      loss.backward();
      optimizer.step();
      loss_sum += loss.item<double>();
      ++batches;
    }
    if (config.verbose) {
      std::cerr << "epoch " << epoch + 1 << "/" << config.epochs
                << " loss=" << loss_sum / static_cast<double>(std::max<int64_t>(batches, 1))
                << " test_acc=" << accuracy(model, test) << "\n";
    }
  }
  model.net->eval();
  result.test_accuracy = accuracy(model, test);
  return result;
}

void save_target(const TrainedTarget& target, const std::filesystem::path& path) {
  torch::serialize::OutputArchive archive;
  const auto& m = target.model;
  archive.write("meta.arch", c10::IValue(m.arch));
  archive.write("meta.channels", c10::IValue(m.input_shape.channels));
  archive.write("meta.height", c10::IValue(m.input_shape.height));
  archive.write("meta.width", c10::IValue(m.input_shape.width));
  archive.write("meta.num_classes", c10::IValue(m.num_classes));
  archive.write("meta.test_accuracy", c10::IValue(target.test_accuracy));
  archive.write("meta.seed", c10::IValue(static_cast<int64_t>(target.config.seed)));
  archive.write("meta.epochs", c10::IValue(static_cast<int64_t>(target.config.epochs)));
  archive.write("meta.batch_size", c10::IValue(target.config.batch_size));
  archive.write("meta.learning_rate", c10::IValue(target.config.learning_rate));
  torch::serialize::OutputArchive params;
  m.net->save(params);
  archive.write("net", params);
  archive.save_to(path.string());
}

TrainedTarget load_target(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InvalidArgument("no checkpoint at " + path.string());
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  c10::IValue v;
  auto read = [&](const char* key) {
    archive.read(key, v);
    return v;
  };
  const std::string arch = read("meta.arch").toStringRef();
  const ImageShape shape{read("meta.channels").toInt(), read("meta.height").toInt(),
                         read("meta.width").toInt()};
  TrainedTarget target{make_classifier(arch, shape, read("meta.num_classes").toInt()), 0.0, {}};
  target.test_accuracy = read("meta.test_accuracy").toDouble();
  target.config.seed = static_cast<uint64_t>(read("meta.seed").toInt());
  target.config.epochs = static_cast<int>(read("meta.epochs").toInt());
  target.config.batch_size = read("meta.batch_size").toInt();
  target.config.learning_rate = read("meta.learning_rate").toDouble();
  torch::serialize::InputArchive params;
  archive.read("net", params);
  target.model.net->load(params);
  target.model.net->eval();
  return target;
}

std::string target_id(const TrainedTarget& target) {
  return target.model.arch + "@seed" + std::to_string(target.config.seed);
}

}  // namespace gsba
