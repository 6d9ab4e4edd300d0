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

#ifndef GSBA_DATA_H_
#define GSBA_DATA_H_

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace gsba {

struct ImageShape {
  int64_t channels = 0;
  int64_t height = 0;
  int64_t width = 0;

  int64_t numel() const { return channels * height * width; }
  std::string to_string() const;
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

// Images in [0,1] with integer labels. Pixels are float32 (N, C, H, W),
// labels int64 (N).
struct ImageBatch {
  torch::Tensor pixels;
  torch::Tensor labels;
  int64_t num_classes = 0;

  int64_t size() const { return pixels.defined() ? pixels.size(0) : 0; }
  ImageShape shape() const;

  ImageBatch slice(int64_t begin, int64_t end) const;
  ImageBatch select(const torch::Tensor& indices) const;

  // Throws InvalidArgument if any invariant (pixel range, label count,
  // label range) is violated.
  void validate() const;
};

enum class Split { kTrain, kTest };

Split parse_split(std::string_view name);

// $GSBA_DATA_DIR if set, otherwise ./data.
std::filesystem::path default_cache_dir();

// Dataset ids: "mnist", "fashion-mnist" (IDX files, optionally .gz),
// "cifar10", "cifar100" (binary distributions). Files are looked up under
// <cache_dir>/<id>/. Pixels are scaled to [0,1]; file order is preserved.
ImageBatch load_dataset(std::string_view name, Split split,
                        const std::filesystem::path& cache_dir = default_cache_dir());

std::vector<std::string> known_datasets();
int64_t dataset_num_classes(std::string_view name);
ImageShape dataset_image_shape(std::string_view name);

// Predicted labels (N) for a pixel batch (N, C, H, W).
using LabelFn = std::function<torch::Tensor(const torch::Tensor&)>;

// Fixed evaluation samples, all classified correctly by `target_id`.
struct EvalSet {
  ImageBatch samples;
  uint64_t seed = 0;
  std::string target_id;
  // Row of each sample in the source split.
  std::vector<int64_t> source_indices;
};

// Draws a seeded permutation of `data` and keeps the first `n` samples the
// target classifies correctly. Uses the target directly; these queries are
// experimenter tooling and are not billed to any ledger.
EvalSet build_eval_set(const LabelFn& target, const ImageBatch& data, int64_t n,
                       uint64_t seed, std::string target_id);

void save_eval_set(const EvalSet& eval, const std::filesystem::path& path);
EvalSet load_eval_set(const std::filesystem::path& path);

bool operator==(const EvalSet& a, const EvalSet& b);

}  // namespace gsba

#endif  // GSBA_DATA_H_
