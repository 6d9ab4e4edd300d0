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

#include <gtest/gtest.h>
#include <torch/torch.h>
#include <zlib.h>

#include <filesystem>
#include <fstream>
#include <vector>

#include "gsba/data.h"
#include "gsba/errors.h"

namespace gsba {
namespace {

namespace fs = std::filesystem;

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<uint8_t>(v >> shift));
}

void write_bytes(const fs::path& path, const std::vector<uint8_t>& bytes, bool gz = false) {
  if (gz) {
    gzFile f = gzopen(path.c_str(), "wb");
    gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
    return;
  }
  std::ofstream(path, std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// n images of 28x28 whose every pixel equals the image index; label = index % 10.
void write_idx(const fs::path& dir, const std::string& prefix, uint32_t n, bool gz) {
  std::vector<uint8_t> images;
  put_be32(images, 0x803);
  put_be32(images, n);
  put_be32(images, 28);
  put_be32(images, 28);
  std::vector<uint8_t> labels;
  put_be32(labels, 0x801);
  put_be32(labels, n);
  for (uint32_t i = 0; i < n; ++i) {
    images.insert(images.end(), 28 * 28, static_cast<uint8_t>(i));
    labels.push_back(static_cast<uint8_t>(i % 10));
  }
  const std::string ext = gz ? ".gz" : "";
  write_bytes(dir / (prefix + "-images-idx3-ubyte" + ext), images, gz);
  write_bytes(dir / (prefix + "-labels-idx1-ubyte" + ext), labels, gz);
}

class DataTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("gsba_data_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(root_);
    fs::create_directories(root_ / "mnist");
  }
  void TearDown() override { fs::remove_all(root_); }
  fs::path root_;
};

TEST_F(DataTest, LoadsIdxFiles) {
  write_idx(root_ / "mnist", "train", 20, false);
  auto batch = load_dataset("mnist", Split::kTrain, root_);
  EXPECT_EQ(batch.size(), 20);
  EXPECT_EQ(batch.shape(), (ImageShape{1, 28, 28}));
  EXPECT_EQ(batch.num_classes, 10);
  EXPECT_EQ(batch.pixels.scalar_type(), torch::kFloat32);
  EXPECT_EQ(batch.labels.scalar_type(), torch::kInt64);
  EXPECT_NEAR(batch.pixels[7].max().item<double>(), 7.0 / 255.0, 1e-7);
  EXPECT_EQ(batch.labels[13].item<int64_t>(), 3);
}

TEST_F(DataTest, LoadsGzippedIdxFiles) {
  write_idx(root_ / "mnist", "t10k", 12, true);
  auto batch = load_dataset("mnist", Split::kTest, root_);
  EXPECT_EQ(batch.size(), 12);
  EXPECT_EQ(batch.labels[11].item<int64_t>(), 1);
}

TEST_F(DataTest, MissingFilesRaiseDatasetError) {
  EXPECT_THROW(load_dataset("mnist", Split::kTest, root_), DatasetError);
  EXPECT_THROW(load_dataset("cifar10", Split::kTest, root_), DatasetError);
}

TEST_F(DataTest, TruncatedFileRaisesDatasetError) {
  write_idx(root_ / "mnist", "train", 5, false);
  fs::resize_file(root_ / "mnist" / "train-images-idx3-ubyte", 100);
  EXPECT_THROW(load_dataset("mnist", Split::kTrain, root_), DatasetError);
}

TEST_F(DataTest, LoadsCifarBinary) {
  fs::create_directories(root_ / "cifar10");
  std::vector<uint8_t> bytes;
  for (int i = 0; i < 3; ++i) {
    bytes.push_back(static_cast<uint8_t>(9 - i));
    bytes.insert(bytes.end(), 3 * 32 * 32, static_cast<uint8_t>(255));
  }
  write_bytes(root_ / "cifar10" / "test_batch.bin", bytes);
  auto batch = load_dataset("cifar10", Split::kTest, root_);
  EXPECT_EQ(batch.size(), 3);
  EXPECT_EQ(batch.shape(), (ImageShape{3, 32, 32}));
  EXPECT_EQ(batch.labels[2].item<int64_t>(), 7);
  EXPECT_NEAR(batch.pixels.min().item<double>(), 1.0, 1e-7);
}

TEST(DatasetRegistryTest, KnownDatasets) {
  EXPECT_EQ(dataset_num_classes("cifar100"), 100);
  EXPECT_EQ(dataset_image_shape("cifar10"), (ImageShape{3, 32, 32}));
  EXPECT_EQ(dataset_image_shape("fashion-mnist"), (ImageShape{1, 28, 28}));
  EXPECT_THROW(dataset_num_classes("imagenet"), DatasetError);
  EXPECT_THROW(load_dataset("imagenet", Split::kTrain, "."), DatasetError);
  EXPECT_EQ(parse_split("test"), Split::kTest);
  EXPECT_THROW(parse_split("validation"), InvalidArgument);
}

TEST(ImageBatchTest, ValidateCatchesViolations) {
  ImageBatch b{torch::rand({4, 1, 2, 2}), torch::tensor({0, 1, 2, 3}, torch::kInt64), 4};
  EXPECT_NO_THROW(b.validate());
  auto bad_range = b;
  bad_range.pixels = b.pixels + 2.0;
  EXPECT_THROW(bad_range.validate(), InvalidArgument);
  auto bad_label = b;
  bad_label.labels = torch::tensor({0, 1, 2, 4}, torch::kInt64);
  EXPECT_THROW(bad_label.validate(), InvalidArgument);
  auto bad_count = b;
  bad_count.labels = torch::tensor({0, 1}, torch::kInt64);
  EXPECT_THROW(bad_count.validate(), InvalidArgument);
}

TEST(ImageBatchTest, SliceAndSelect) {
  ImageBatch b{torch::rand({5, 1, 2, 2}), torch::tensor({0, 1, 2, 3, 4}, torch::kInt64), 5};
  EXPECT_EQ(b.slice(1, 3).labels[0].item<int64_t>(), 1);
  EXPECT_EQ(b.slice(1, 3).size(), 2);
  auto s = b.select(torch::tensor({4, 0}, torch::kInt64));
  EXPECT_EQ(s.labels[0].item<int64_t>(), 4);
  EXPECT_TRUE(torch::equal(s.pixels[1], b.pixels[0]));
}

ImageBatch numbered_batch(int64_t n) {
  return {torch::rand({n, 1, 2, 2}), torch::arange(n, torch::kInt64).remainder(3), 3};
}

// A "classifier" that is right on even labels only.
torch::Tensor even_correct(const torch::Tensor& pixels, const torch::Tensor& truth) {
  (void)pixels;
  return torch::where(truth.remainder(2).eq(0), truth, (truth + 1).remainder(3));
}

TEST(EvalSetTest, KeepsOnlyCorrectlyClassifiedAndIsDeterministic) {
  auto data = numbered_batch(60);
  // The label function sees pixels only, so recover the row via a lookup.
  LabelFn fn = [&](const torch::Tensor& pixels) {
    std::vector<int64_t> out;
    for (int64_t i = 0; i < pixels.size(0); ++i) {
      auto eq = (data.pixels - pixels[i]).abs().flatten(1).amax(1).eq(0).nonzero();
      const int64_t row = eq[0].item<int64_t>();
      out.push_back(even_correct(pixels, data.labels[row].unsqueeze(0))[0].item<int64_t>());
    }
    return torch::tensor(out, torch::kInt64);
  };
  auto a = build_eval_set(fn, data, 10, 42, "fake@seed0");
  auto b = build_eval_set(fn, data, 10, 42, "fake@seed0");
  auto c = build_eval_set(fn, data, 10, 43, "fake@seed0");
  EXPECT_EQ(a.samples.size(), 10);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  EXPECT_TRUE(a.samples.labels.remainder(2).eq(0).all().item<bool>());
  for (size_t i = 0; i < a.source_indices.size(); ++i) {
    EXPECT_TRUE(torch::equal(a.samples.pixels[static_cast<int64_t>(i)],
                             data.pixels[a.source_indices[i]]));
  }
  EXPECT_THROW(build_eval_set(fn, data, 50, 42, "fake@seed0"), InvalidArgument);
}

TEST(EvalSetTest, SaveLoadRoundTrip) {
  auto data = numbered_batch(8);
  LabelFn perfect = [&](const torch::Tensor& pixels) {
    std::vector<int64_t> out;
    for (int64_t i = 0; i < pixels.size(0); ++i) {
      auto row = (data.pixels - pixels[i]).abs().flatten(1).amax(1).eq(0).nonzero()[0];
      out.push_back(data.labels[row.item<int64_t>()].item<int64_t>());
    }
    return torch::tensor(out, torch::kInt64);
  };
  auto eval = build_eval_set(perfect, data, 5, 1, "perfect@seed1");
  const auto path = fs::temp_directory_path() / "gsba_eval_roundtrip.bin";
  save_eval_set(eval, path);
  auto loaded = load_eval_set(path);
  fs::remove(path);
  EXPECT_TRUE(eval == loaded);
  EXPECT_EQ(loaded.target_id, "perfect@seed1");
}

}  // namespace
}  // namespace gsba
