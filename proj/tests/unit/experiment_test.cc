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

#include "gsba/errors.h"
#include "gsba/experiment.h"

namespace gsba {
namespace {

using json = nlohmann::json;

TEST(ParseFractionTest, FractionsAndDecimals) {
  EXPECT_DOUBLE_EQ(parse_fraction("8/255"), 8.0 / 255.0);
  EXPECT_DOUBLE_EQ(parse_fraction("0.1"), 0.1);
  EXPECT_DOUBLE_EQ(parse_fraction("1e-2"), 0.01);
  EXPECT_THROW(parse_fraction("8/0"), InvalidArgument);
  EXPECT_THROW(parse_fraction("eight"), InvalidArgument);
  EXPECT_THROW(parse_fraction("8/255x"), InvalidArgument);
}

TEST(ExperimentConfigTest, DefaultsAreValid) {
  ExperimentConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.budget, 1'000'000);
  EXPECT_FALSE(c.targeted);
}

TEST(ExperimentConfigTest, MergeAppliesKeys) {
  auto c = merge_config({}, json{{"delta", "8/255"},
                                 {"setting", "targeted"},
                                 {"mode", "L"},
                                 {"budget", 200000},
                                 {"alpha2", 0.5},
                                 {"variant", "sim"},
                                 {"fractions", {0.1, 1.0}}});
  EXPECT_DOUBLE_EQ(c.delta, 8.0 / 255.0);
  EXPECT_TRUE(c.targeted);
  EXPECT_EQ(c.mode, ResponseMode::kLabel);
  EXPECT_EQ(c.budget, 200000);
  EXPECT_DOUBLE_EQ(c.surrogate.weights.alpha2, 0.5);
  EXPECT_EQ(c.surrogate.variant, SurrogateVariant::kSim);
  EXPECT_EQ(c.fractions, (std::vector<double>{0.1, 1.0}));
}

TEST(ExperimentConfigTest, LaterMergeWins) {
  auto file = merge_config({}, json{{"delta", 0.2}, {"seed", 3}});
  auto flags = merge_config(file, json{{"delta", "1/10"}});
  EXPECT_DOUBLE_EQ(flags.delta, 0.1);
  EXPECT_EQ(flags.seed, 3u);
}

TEST(ExperimentConfigTest, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(merge_config({}, json{{"learning_rate_typo", 1}}), InvalidArgument);
  EXPECT_THROW(merge_config({}, json{{"setting", "sideways"}}), InvalidArgument);
  EXPECT_THROW(merge_config({}, json{{"budget", "lots"}}), InvalidArgument);
  EXPECT_THROW(merge_config({}, json::array()), InvalidArgument);
  auto c = merge_config({}, json{{"alpha1", -1.0}});
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = merge_config({}, json{{"fractions", {0.0, 0.5}}});
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = merge_config({}, json{{"pgd_iterations", 0}});
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = merge_config({}, json{{"dataset", "imagenet"}});
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(ExperimentConfigTest, JsonRoundTrip) {
  ExperimentConfig c;
  c.delta = 0.1;
  c.targeted = true;
  c.surrogate.variant = SurrogateVariant::kAdv;
  c.seeds = {4, 5};
  auto back = merge_config({}, to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(ExperimentConfigTest, SeedAndDeltaPropagate) {
  ExperimentConfig c;
  c.seed = 7;
  c.delta = 0.1;
  EXPECT_EQ(c.surrogate_config(SurrogateVariant::kBase).seed, 7u);
  EXPECT_EQ(c.surrogate_config(SurrogateVariant::kBase).variant, SurrogateVariant::kBase);
  EXPECT_EQ(c.inversion_params().seed, 7u);
  EXPECT_DOUBLE_EQ(c.pgd_params().epsilon, 0.1);
  EXPECT_TRUE(c.pgd_params().random_start);
}

}  // namespace
}  // namespace gsba
