// Copyright 2026 The MARN Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <string>
#include <tuple>

#include "gradient_check.h"
#include "test_util.h"

namespace marn {
namespace {

using testing::GradientRelativeErrors;
using testing::KinkMargin;
using testing::RandomQuery;
using testing::RandomVideo;
using testing::RandomVocabulary;
using testing::RandomizeParams;
using testing::TinyConfig;

struct GradCase {
  TemporalRep rep;
  AttnKernel kernel;
  int conv1d_kernel;
  bool multilevel_train;
};

class GradientTest : public ::testing::TestWithParam<GradCase> {};

TEST_P(GradientTest, AnalyticMatchesCentralDifferences) {
  const GradCase& gc = GetParam();
  ModelConfig config = TinyConfig();
  config.temporal_rep = gc.rep;
  config.attn_kernel = gc.kernel;
  config.conv1d_kernel = gc.conv1d_kernel;
  config.multilevel_train = gc.multilevel_train;
  config.lambda = 0.8;
  const MarnModel model(config);
  Rng rng(61);
  ParamSet params = model.InitParams(9);
  const Vocabulary vocab = RandomVocabulary(rng, 12, 8);
  VideoFeatures video;
  QueryTokens query;
  // Redraw until no ReLU or max decision sits within reach of the probe.
  int draws = 0;
  do {
    ASSERT_LT(++draws, 100);
    RandomizeParams(rng, &params, 0.5);
    video = RandomVideo(rng, 8, 16);
    query = RandomQuery(rng, vocab, 3, 6);
  } while (KinkMargin(model, model.Forward(video, query, params)) < 1e-3);
  for (const auto& [name, err] : GradientRelativeErrors(model, params, video, query, 1e-5)) {
    EXPECT_LE(err, 1e-3) << name;
  }
}

INSTANTIATE_TEST_SUITE_P(
    Variants, GradientTest,
    ::testing::Values(GradCase{TemporalRep::kConv3d, AttnKernel::k3x3, 3, true},
                      GradCase{TemporalRep::kConv3d, AttnKernel::k1x1, 1, true},
                      GradCase{TemporalRep::kConv3d, AttnKernel::k3x3Stacked2, 3, true},
                      GradCase{TemporalRep::kAvgPool, AttnKernel::k3x3, 3, true},
                      GradCase{TemporalRep::kMaxPool, AttnKernel::k3x3, 3, true},
                      GradCase{TemporalRep::kRecurrent, AttnKernel::k3x3, 3, true},
                      GradCase{TemporalRep::kConv3d, AttnKernel::k3x3, 3, false}),
    [](const ::testing::TestParamInfo<GradCase>& info) {
      std::string name = ToString(info.param.rep) + "_" + ToString(info.param.kernel) + "_k" +
                         std::to_string(info.param.conv1d_kernel) +
                         (info.param.multilevel_train ? "_multi" : "_single");
      for (char& ch : name) {
        if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
      }
      return name;
    });

}  // namespace
}  // namespace marn
