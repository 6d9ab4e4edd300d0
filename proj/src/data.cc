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

#include "gsba/data.h"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <optional>

#include "gsba/errors.h"

namespace gsba {
namespace {

namespace fs = std::filesystem;

struct DatasetInfo {
  std::string_view id;
  int64_t num_classes;
  ImageShape shape;
};

constexpr std::array<DatasetInfo, 4> kDatasets = {{
    {"mnist", 10, {1, 28, 28}},
    {"fashion-mnist", 10, {1, 28, 28}},
    {"cifar10", 10, {3, 32, 32}},
    {"cifar100", 100, {3, 32, 32}},
}};

const DatasetInfo& find_dataset(std::string_view name) {
  for (const auto& info : kDatasets) {
    if (info.id == name) return info;
  }
  throw DatasetError("unknown dataset: '" + std::string(name) + "'");
}

// Reads a whole file, transparently inflating gzip content.
std::vector<uint8_t> read_maybe_gz(const fs::path& path) {
  gzFile file = gzopen(path.c_str(), "rb");
  if (file == nullptr) throw DatasetError("cannot open " + path.string());
  std::vector<uint8_t> out;
  std::array<uint8_t, 1 << 16> chunk;
  for (;;) {
    int n = gzread(file, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      gzclose(file);
      throw DatasetError("read error in " + path.string());
    }
    if (n == 0) break;
    out.insert(out.end(), chunk.begin(), chunk.begin() + n);
  }
  gzclose(file);
  return out;
}

std::optional<fs::path> first_existing(const std::vector<fs::path>& candidates) {
  for (const auto& c : candidates) {
    if (fs::exists(c)) return c;
  }
  return std::nullopt;
}

uint32_t read_be32(const std::vector<uint8_t>& buf, size_t offset) {
  return (uint32_t{buf[offset]} << 24) | (uint32_t{buf[offset + 1]} << 16) |
         (uint32_t{buf[offset + 2]} << 8) | uint32_t{buf[offset + 3]};
}

ImageBatch load_idx(const fs::path& dir, Split split, const DatasetInfo& info) {
  const std::string prefix = split == Split::kTrain ? "train" : "t10k";
  auto images_path = first_existing({dir / (prefix + "-images-idx3-ubyte"),
                                     dir / (prefix + "-images-idx3-ubyte.gz"),
                                     dir / (prefix + "-images.idx3-ubyte")});
  auto labels_path = first_existing({dir / (prefix + "-labels-idx1-ubyte"),
                                     dir / (prefix + "-labels-idx1-ubyte.gz"),
                                     dir / (prefix + "-labels.idx1-ubyte")});
  if (!images_path || !labels_path) {
    throw DatasetError("missing " + std::string(info.id) + " " + prefix + " files under " +
                       dir.string());
  }
  auto images = read_maybe_gz(*images_path);
  auto labels = read_maybe_gz(*labels_path);
  if (images.size() < 16 || read_be32(images, 0) != 0x803) {
    throw DatasetError("corrupt IDX image file " + images_path->string());
  }
  if (labels.size() < 8 || read_be32(labels, 0) != 0x801) {
    throw DatasetError("corrupt IDX label file " + labels_path->string());
  }
  const int64_t n = read_be32(images, 4);
  const int64_t rows = read_be32(images, 8);
  const int64_t cols = read_be32(images, 12);
  if (rows != info.shape.height || cols != info.shape.width) {
    throw DatasetError("unexpected image size in " + images_path->string());
  }
  if (read_be32(labels, 4) != n || images.size() != static_cast<size_t>(16 + n * rows * cols) ||
      labels.size() != static_cast<size_t>(8 + n)) {
    throw DatasetError("truncated or mismatched IDX files under " + dir.string());
  }

  auto raw = torch::from_blob(images.data() + 16, {n, 1, rows, cols}, torch::kUInt8);
  ImageBatch batch;
  batch.pixels = raw.to(torch::kFloat32).div_(255.0);
  batch.labels = torch::from_blob(labels.data() + 8, {n}, torch::kUInt8).to(torch::kInt64);
  batch.num_classes = info.num_classes;
  return batch;
}

ImageBatch load_cifar(const fs::path& dir, Split split, const DatasetInfo& info) {
  const bool fine = info.num_classes == 100;
  const int64_t label_bytes = fine ? 2 : 1;
  const int64_t record = label_bytes + info.shape.numel();

  std::vector<fs::path> files;
  const fs::path sub = dir / (fine ? "cifar-100-binary" : "cifar-10-batches-bin");
  const fs::path root = fs::exists(sub) ? sub : dir;
  if (fine) {
    files.push_back(root / (split == Split::kTrain ? "train.bin" : "test.bin"));
  } else if (split == Split::kTrain) {
    for (int i = 1; i <= 5; ++i) files.push_back(root / ("data_batch_" + std::to_string(i) + ".bin"));
  } else {
    files.push_back(root / "test_batch.bin");
  }

  std::vector<uint8_t> pixels;
  std::vector<int64_t> labels;
  for (const auto& f : files) {
    if (!fs::exists(f)) throw DatasetError("missing " + f.string());
    auto buf = read_maybe_gz(f);
    if (buf.empty() || buf.size() % record != 0) throw DatasetError("corrupt CIFAR file " + f.string());
    const size_t count = buf.size() / record;
    for (size_t i = 0; i < count; ++i) {
      const uint8_t* rec = buf.data() + i * record;
      labels.push_back(rec[label_bytes - 1]);
      pixels.insert(pixels.end(), rec + label_bytes, rec + record);
    }
  }
  const int64_t n = static_cast<int64_t>(labels.size());
  ImageBatch batch;
  batch.pixels = torch::from_blob(pixels.data(),
                                  {n, info.shape.channels, info.shape.height, info.shape.width},
                                  torch::kUInt8)
                     .to(torch::kFloat32)
                     .div_(255.0);
  batch.labels = torch::from_blob(labels.data(), {n}, torch::kInt64).clone();
  batch.num_classes = info.num_classes;
  return batch;
}

constexpr char kEvalMagic[8] = {'G', 'S', 'B', 'A', 'E', 'V', 'L', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DatasetError("truncated eval-set archive");
  return value;
}

}  // namespace

std::string ImageShape::to_string() const {
  return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

ImageShape ImageBatch::shape() const {
  if (!pixels.defined() || pixels.dim() != 4) return {};
  return {pixels.size(1), pixels.size(2), pixels.size(3)};
}

ImageBatch ImageBatch::slice(int64_t begin, int64_t end) const {
  end = std::min(end, size());
  return {pixels.slice(0, begin, end), labels.slice(0, begin, end), num_classes};
}

ImageBatch ImageBatch::select(const torch::Tensor& indices) const {
  return {pixels.index_select(0, indices), labels.index_select(0, indices), num_classes};
}

void ImageBatch::validate() const {
  if (!pixels.defined() || pixels.dim() != 4) throw InvalidArgument("pixels must be (N, C, H, W)");
  if (!labels.defined() || labels.dim() != 1 || labels.size(0) != pixels.size(0)) {
    throw InvalidArgument("labels length must equal the number of images");
  }
  if (num_classes <= 0) throw InvalidArgument("num_classes must be positive");
  if (size() == 0) return;
  if (pixels.min().item<double>() < 0.0 || pixels.max().item<double>() > 1.0) {
    throw InvalidArgument("pixel values must lie in [0,1]");
  }
  if (labels.min().item<int64_t>() < 0 || labels.max().item<int64_t>() >= num_classes) {
    throw InvalidArgument("label out of range");
  }
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  throw InvalidArgument("unknown split: '" + std::string(name) + "'");
}

std::filesystem::path default_cache_dir() {
  if (const char* env = std::getenv("GSBA_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return "data";
}

ImageBatch load_dataset(std::string_view name, Split split, const std::filesystem::path& cache_dir) {
  const auto& info = find_dataset(name);
  const fs::path dir = cache_dir / std::string(info.id);
  ImageBatch batch = info.shape.channels == 1 ? load_idx(dir, split, info) : load_cifar(dir, split, info);
  batch.validate();
  return batch;
}

std::vector<std::string> known_datasets() {
  std::vector<std::string> ids;
  for (const auto& info : kDatasets) ids.emplace_back(info.id);
  return ids;
}

int64_t dataset_num_classes(std::string_view name) { return find_dataset(name).num_classes; }

ImageShape dataset_image_shape(std::string_view name) { return find_dataset(name).shape; }

EvalSet build_eval_set(const LabelFn& target, const ImageBatch& data, int64_t n, uint64_t seed,
                       std::string target_id) {
  if (n <= 0) throw InvalidArgument("eval-set size must be positive");
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto order = torch::randperm(data.size(), gen, torch::kInt64);

  constexpr int64_t kChunk = 256;
  std::vector<int64_t> chosen;
  for (int64_t begin = 0; begin < data.size() && static_cast<int64_t>(chosen.size()) < n;
       begin += kChunk) {
    auto idx = order.slice(0, begin, std::min(begin + kChunk, data.size()));
    torch::Tensor predicted;
    {
      torch::NoGradGuard no_grad;
      predicted = target(data.pixels.index_select(0, idx)).to(torch::kInt64);
    }
    auto correct = predicted.eq(data.labels.index_select(0, idx));
    auto idx_acc = idx.accessor<int64_t, 1>();
    auto ok = correct.accessor<bool, 1>();
    for (int64_t i = 0; i < idx.size(0) && static_cast<int64_t>(chosen.size()) < n; ++i) {
      if (ok[i]) chosen.push_back(idx_acc[i]);
    }
  }
  if (static_cast<int64_t>(chosen.size()) < n) {
    throw InvalidArgument("only " + std::to_string(chosen.size()) +
                          " correctly classified samples available, need " + std::to_string(n));
  }

  EvalSet eval;
  auto index = torch::tensor(chosen, torch::kInt64);
  eval.samples = data.select(index);
  eval.samples.pixels = eval.samples.pixels.contiguous();
  eval.seed = seed;
  eval.target_id = std::move(target_id);
  eval.source_indices = std::move(chosen);
  return eval;
}

void save_eval_set(const EvalSet& eval, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + path.string());
  const auto shape = eval.samples.shape();
  const int64_t n = eval.samples.size();
  out.write(kEvalMagic, sizeof(kEvalMagic));
  write_pod(out, eval.seed);
  write_pod(out, static_cast<uint32_t>(eval.target_id.size()));
  out.write(eval.target_id.data(), static_cast<std::streamsize>(eval.target_id.size()));
  for (int64_t v : {eval.samples.num_classes, n, shape.channels, shape.height, shape.width}) {
    write_pod(out, v);
  }
  auto labels = eval.samples.labels.to(torch::kInt64).contiguous();
  out.write(reinterpret_cast<const char*>(labels.data_ptr<int64_t>()), n * sizeof(int64_t));
  for (int64_t idx : eval.source_indices) write_pod(out, idx);
  auto pixels = eval.samples.pixels.to(torch::kFloat32).contiguous();
  out.write(reinterpret_cast<const char*>(pixels.data_ptr<float>()),
            pixels.numel() * static_cast<std::streamsize>(sizeof(float)));
  if (!out) throw DatasetError("write failed for " + path.string());
}

EvalSet load_eval_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  char magic[sizeof(kEvalMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kEvalMagic, sizeof(magic)) != 0) {
    throw DatasetError("not an eval-set archive: " + path.string());
  }
  EvalSet eval;
  eval.seed = read_pod<uint64_t>(in);
  eval.target_id.resize(read_pod<uint32_t>(in));
  in.read(eval.target_id.data(), static_cast<std::streamsize>(eval.target_id.size()));
  const auto num_classes = read_pod<int64_t>(in);
  const auto n = read_pod<int64_t>(in);
  const auto c = read_pod<int64_t>(in);
  const auto h = read_pod<int64_t>(in);
  const auto w = read_pod<int64_t>(in);
  if (n < 0 || c <= 0 || h <= 0 || w <= 0) throw DatasetError("corrupt eval-set header");

  eval.samples.num_classes = num_classes;
  eval.samples.labels = torch::empty({n}, torch::kInt64);
  in.read(reinterpret_cast<char*>(eval.samples.labels.data_ptr<int64_t>()), n * sizeof(int64_t));
  eval.source_indices.resize(n);
  in.read(reinterpret_cast<char*>(eval.source_indices.data()), n * sizeof(int64_t));
  eval.samples.pixels = torch::empty({n, c, h, w}, torch::kFloat32);
  in.read(reinterpret_cast<char*>(eval.samples.pixels.data_ptr<float>()),
          eval.samples.pixels.numel() * static_cast<std::streamsize>(sizeof(float)));
  if (!in) throw DatasetError("truncated eval-set archive " + path.string());
  eval.samples.validate();
  return eval;
}

bool operator==(const EvalSet& a, const EvalSet& b) {
  return a.seed == b.seed && a.target_id == b.target_id && a.source_indices == b.source_indices &&
         a.samples.num_classes == b.samples.num_classes &&
         a.samples.pixels.sizes() == b.samples.pixels.sizes() &&
         torch::equal(a.samples.labels, b.samples.labels) &&
         torch::equal(a.samples.pixels, b.samples.pixels);
}

}  // namespace gsba
