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

#include "marn/reconstruction.h"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.h"

namespace marn {
namespace {

using testing::RandomQuery;
using testing::RandomRow;
using testing::RandomVideo;
using testing::RandomVocabulary;
using testing::RandomizeParams;
using testing::TinyConfig;

GlobalFeature Global(const RowVector& v, Branch branch = Branch::kProposal) {
  GlobalFeature g;
  g.branch = branch;
  g.vec = v;
  return g;
}

TEST(CaptionLossTest, ZeroProjectionGivesUniformCrossEntropy) {
  Rng rng(51);
  const MarnModel model(TinyConfig());
  ParamSet params = model.InitParams(1);
  RandomizeParams(rng, &params, 0.5);
  params.at("decoder.out.weight").setZero();
  params.at("decoder.out.bias").setZero();
  const Vocabulary vocab = RandomVocabulary(rng, 12, 8);
  for (int words : {1, 3, 5}) {
    const CaptionLoss loss =
        ComputeCaptionLoss(Global(RandomRow(rng, 8)), RandomQuery(rng, vocab, words, 6), params);
    EXPECT_NEAR(loss.value, std::log(12.0), 1e-6);
  }
}

// Independent teacher-forced unroll: LSTM over [F ; e_prev] with the
// gate equations written out, softmax cross-entropy per target token.
double UnrolledLoss(const RowVector& f, const QueryTokens& q, const ParamSet& p) {
  const Matrix& w_ih = p.at("decoder.lstm.w_ih");
  const Matrix& w_hh = p.at("decoder.lstm.w_hh");
  const Matrix& b = p.at("decoder.lstm.bias");
  const Matrix& w_out = p.at("decoder.out.weight");
  const Matrix& b_out = p.at("decoder.out.bias");
  const int H = static_cast<int>(w_hh.rows());
  const auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  RowVector h = RowVector::Zero(H), c = RowVector::Zero(H);
  double total = 0.0;
  for (int m = 0; m < q.length; ++m) {
    RowVector x(f.size() + q.bos.size());
    x << f, (m == 0 ? q.bos : RowVector(q.embeddings.row(m - 1)));
    const RowVector pre = x * w_ih + h * w_hh + b;
    RowVector c_new(H), h_new(H);
    for (int k = 0; k < H; ++k) {
      c_new(k) = sig(pre(H + k)) * c(k) + sig(pre(k)) * std::tanh(pre(2 * H + k));
      h_new(k) = sig(pre(3 * H + k)) * std::tanh(c_new(k));
    }
    h = h_new;
    c = c_new;
    const RowVector logits = h * w_out + b_out;
    double z = 0.0;
    for (int v = 0; v < logits.size(); ++v) z += std::exp(logits(v));
    total += std::log(z) - logits(q.ids[m]);
  }
  return total / q.length;
}

TEST(CaptionLossTest, MatchesUnrolledTeacherForcing) {
  Rng rng(52);
  const MarnModel model(TinyConfig());
  const Vocabulary vocab = RandomVocabulary(rng, 12, 8);
  for (int trial = 0; trial < 5; ++trial) {
    ParamSet params = model.InitParams(trial);
    RandomizeParams(rng, &params, 0.7);
    QueryTokens q = RandomQuery(rng, vocab, 1 + trial, 6);
    q.bos = RandomRow(rng, 8);  // exercise a nonzero BOS row
    const RowVector f = RandomRow(rng, 8);
    const CaptionLoss loss = ComputeCaptionLoss(Global(f), q, params);
    EXPECT_NEAR(loss.value, UnrolledLoss(f, q, params), 1e-12);
    ASSERT_EQ(static_cast<int>(loss.per_word.size()), q.length);
  }
}

TEST(CaptionLossTest, DecodeStepProbabilitiesSumToOne) {
  Rng rng(53);
  const MarnModel model(TinyConfig());
  ParamSet params = model.InitParams(1);
  RandomizeParams(rng, &params, 1.0);
  const Vocabulary vocab = RandomVocabulary(rng, 12, 8);
  CaptionTrace trace;
  ComputeCaptionLoss(Global(RandomRow(rng, 8)), RandomQuery(rng, vocab, 4, 6), params, &trace);
  for (int m = 0; m < trace.probs.rows(); ++m) {
    EXPECT_NEAR(trace.probs.row(m).sum(), 1.0, 1e-12);
    EXPECT_GE(trace.probs.row(m).minCoeff(), 0.0);
  }
}

TEST(CaptionLossTest, PaddingDoesNotChangeTheLoss) {
  Rng rng(54);
  const MarnModel model(TinyConfig());
  ParamSet params = model.InitParams(1);
  RandomizeParams(rng, &params, 0.5);
  const Vocabulary vocab = RandomVocabulary(rng, 12, 8);
  const RowVector f = RandomRow(rng, 8);
  const double a = ComputeCaptionLoss(Global(f), EncodeQuery("t05 t06", vocab, 4), params).value;
  const double b = ComputeCaptionLoss(Global(f), EncodeQuery("t05 t06", vocab, 20), params).value;
  EXPECT_EQ(a, b);
}

TEST(TotalLossTest, CombinesBranchesWithLambda) {
  CaptionLoss p, c;
  p.value = 2.0;
  c.value = 3.0;
  EXPECT_DOUBLE_EQ(TotalLoss(p, &c, 0.5), 3.5);
  EXPECT_DOUBLE_EQ(TotalLoss(p, nullptr, 0.5), 2.0);
  EXPECT_DOUBLE_EQ(TotalLoss(p, &c, 0.0), 2.0);
}

TEST(ComputeLossTest, BothBranchesShareOneDecoder) {
  Rng rng(55);
  ModelConfig config = TinyConfig();
  config.lambda = 0.7;
  const MarnModel model(config);
  ParamSet params = model.InitParams(1);
  RandomizeParams(rng, &params, 0.5);
  const Vocabulary vocab = RandomVocabulary(rng, 12, 8);
  const VideoFeatures video = RandomVideo(rng, 8, 16);
  const QueryTokens q = RandomQuery(rng, vocab, 3, 6);
  const LossRecord rec = ComputeLoss(model, video, q, params);
  ASSERT_TRUE(rec.clip.has_value());
  EXPECT_NEAR(rec.total, rec.proposal + 0.7 * *rec.clip, 1e-12);

  // The clip loss is the proposal decoder applied to the clip global feature.
  const ForwardResult fwd = model.Forward(video, q, params);
  EXPECT_EQ(ComputeCaptionLoss(fwd.clip->global, q, params).value, *rec.clip);
  EXPECT_EQ(ComputeCaptionLoss(fwd.proposal.global, q, params).value, rec.proposal);
  for (const auto& [name, m] : params.tensors()) {
    EXPECT_FALSE(name.starts_with("clip.decoder")) << name;
  }
}

TEST(ComputeLossTest, SingleLevelTrainingHasNoClipTerm) {
  Rng rng(56);
  ModelConfig config = TinyConfig();
  config.multilevel_train = false;
  const MarnModel model(config);
  const ParamSet params = model.InitParams(1);
  const Vocabulary vocab = RandomVocabulary(rng, 12, 8);
  const LossRecord rec =
      ComputeLoss(model, RandomVideo(rng, 8, 16), RandomQuery(rng, vocab, 3, 6), params);
  EXPECT_FALSE(rec.clip.has_value());
  EXPECT_EQ(rec.total, rec.proposal);
}

}  // namespace
}  // namespace marn
