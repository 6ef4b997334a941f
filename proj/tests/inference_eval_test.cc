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

#include "marn/inference_eval.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "marn/errors.h"
#include "test_util.h"

namespace marn {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ProposalGrid CharadesGrid() {
  return ProposalGrid::Enumerate(32, {6, 7, 8, 10, 11, 12}, StrideRule::kDense, 4);
}

AttentionMap RandomAttention(Rng& rng, const ProposalGrid& grid, Branch branch) {
  AttentionMap a;
  a.branch = branch;
  a.scores = Matrix::Zero(grid.T(), grid.S());
  a.valid.resize(grid.num_cells());
  double sum = 0.0;
  for (int c = 0; c < grid.num_cells(); ++c) {
    a.valid[c] = grid.valid_cell(c);
    if (a.valid[c]) sum += (a.scores.data()[c] = rng.Uniform());
  }
  a.scores /= sum;
  return a;
}

TEST(EnsembleTest, CenterClipExamples) {
  EXPECT_EQ(CenterClip(8, 8, 32), 12);
  EXPECT_EQ(CenterClip(3, 7, 32), 6);
  EXPECT_EQ(CenterClip(30, 5, 32), 31);
}

TEST(EnsembleTest, WorkedExample) {
  const ProposalGrid grid = ProposalGrid::Enumerate(16, {7}, StrideRule::kDense, 4);
  AttentionMap p, c;
  p.scores = Matrix::Zero(16, 1);
  p.valid.assign(16, 0);
  for (int i = 0; i < 16; ++i) p.valid[i] = grid.valid(i, 0);
  p.scores(3, 0) = 0.10;
  c.branch = Branch::kClip;
  c.scores = Matrix::Zero(16, 1);
  c.valid.assign(16, 1);
  c.scores(6, 0) = 0.05;
  const Matrix s = EnsembleScores(p, &c, 0.1, grid);
  EXPECT_NEAR(s(3, 0), 0.105, 1e-15);
  EXPECT_EQ(s(12, 0), -kInf);
}

TEST(EnsembleTest, ZeroEpsilonIsProposalScores) {
  Rng rng(71);
  const ProposalGrid grid = CharadesGrid();
  const AttentionMap p = RandomAttention(rng, grid, Branch::kProposal);
  const ProposalGrid clip_grid = ProposalGrid::Enumerate(32, {1}, StrideRule::kDense, 4);
  const AttentionMap c = RandomAttention(rng, clip_grid, Branch::kClip);
  const Matrix s = EnsembleScores(p, &c, 0.0, grid);
  const Matrix alone = EnsembleScores(p, nullptr, 0.3, grid);
  for (int i = 0; i < 32; ++i) {
    for (int j = 0; j < 6; ++j) {
      EXPECT_EQ(s(i, j), grid.valid(i, j) ? p.scores(i, j) : -kInf);
      EXPECT_EQ(alone(i, j), s(i, j));
    }
  }
}

TEST(RankTest, SingleValidCell) {
  const ProposalGrid grid = ProposalGrid::Enumerate(8, {8}, StrideRule::kDense, 4);
  Matrix scores = Matrix::Constant(8, 1, -kInf);
  scores(0, 0) = 0.3;
  const GroundingResult r = RankProposals(scores, grid, 1.0, 5, "q");
  ASSERT_EQ(r.ranked.size(), 1u);
  EXPECT_EQ(r.ranked[0].interval(), (Interval{0.0, 8.0}));
  EXPECT_EQ(r.query_id, "q");
}

TEST(RankTest, TiesPreferEarlierStartThenSmallerScale) {
  const ProposalGrid grid = ProposalGrid::Enumerate(16, {3, 4}, StrideRule::kDense, 4);
  Matrix scores = Matrix::Zero(16, 2);
  scores(5, 0) = 0.5;
  scores(2, 1) = 0.5;
  scores(2, 0) = 0.5;
  const GroundingResult r = RankProposals(scores, grid, 1.0, 3);
  ASSERT_EQ(r.ranked.size(), 3u);
  EXPECT_EQ(r.ranked[0].interval(), (Interval{2.0, 5.0}));
  EXPECT_EQ(r.ranked[1].interval(), (Interval{2.0, 6.0}));
  EXPECT_EQ(r.ranked[2].interval(), (Interval{5.0, 8.0}));
}

TEST(RankTest, TopNTruncatesSortedDistinctIntervals) {
  Rng rng(72);
  const ProposalGrid grid = CharadesGrid();
  const AttentionMap p = RandomAttention(rng, grid, Branch::kProposal);
  const Matrix scores = EnsembleScores(p, nullptr, 0.0, grid);
  EXPECT_EQ(RankProposals(scores, grid, 1.0, 5).ranked.size(), 5u);
  const GroundingResult all = RankProposals(scores, grid, 1.0, 1000);
  ASSERT_EQ(all.ranked.size(), 144u);
  std::set<std::pair<double, double>> seen;
  for (size_t k = 0; k < all.ranked.size(); ++k) {
    const ScoredInterval& s = all.ranked[k];
    EXPECT_LT(s.start, s.end);
    EXPECT_TRUE(seen.insert({s.start, s.end}).second);
    if (k > 0) {
      EXPECT_LE(s.score, all.ranked[k - 1].score);
    }
  }
}

TEST(RankTest, InvariantUnderPositiveScaling) {
  Rng rng(73);
  const ProposalGrid grid = CharadesGrid();
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix s =
        EnsembleScores(RandomAttention(rng, grid, Branch::kProposal), nullptr, 0.0, grid);
    const double alpha = rng.Uniform(0.1, 10.0);
    const GroundingResult a = RankProposals(s, grid, 1.0, 144);
    const GroundingResult b = RankProposals(alpha * s, grid, 1.0, 144);
    for (size_t k = 0; k < a.ranked.size(); ++k) {
      EXPECT_EQ(a.ranked[k].interval(), b.ranked[k].interval());
    }
  }
}

TEST(RankTest, OptionalNmsDropsOverlaps) {
  const ProposalGrid grid = ProposalGrid::Enumerate(16, {4}, StrideRule::kDense, 4);
  Matrix scores = Matrix::Zero(16, 1);
  scores(0, 0) = 0.9;
  scores(1, 0) = 0.8;  // IoU with [0,4) is 3/5
  scores(8, 0) = 0.1;
  const GroundingResult kept = RankProposals(scores, grid, 1.0, 2, "", 0.5);
  ASSERT_EQ(kept.ranked.size(), 2u);
  EXPECT_EQ(kept.ranked[1].interval(), (Interval{8.0, 12.0}));
  const GroundingResult plain = RankProposals(scores, grid, 1.0, 2);
  EXPECT_EQ(plain.ranked[1].interval(), (Interval{1.0, 5.0}));
}

TEST(IoUTest, Examples) {
  EXPECT_NEAR(TemporalIoU({2, 6}, {4, 8}), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(TemporalIoU({1.5, 7.25}, {1.5, 7.25}), 1.0);
  EXPECT_EQ(TemporalIoU({0, 1}, {5, 9}), 0.0);
  EXPECT_EQ(TemporalIoU({0, 4}, {4, 9}), 0.0);
  EXPECT_THROW(TemporalIoU({3, 3}, {0, 5}), DataError);
}

TEST(IoUTest, SymmetricAndBounded) {
  Rng rng(74);
  for (int trial = 0; trial < 200; ++trial) {
    const double a = rng.Uniform(0, 10), b = rng.Uniform(0, 10);
    const Interval x{a, a + rng.Uniform(0.1, 5)}, y{b, b + rng.Uniform(0.1, 5)};
    const double iou = TemporalIoU(x, y);
    EXPECT_EQ(iou, TemporalIoU(y, x));
    EXPECT_GE(iou, 0.0);
    EXPECT_LE(iou, 1.0);
  }
}

// Integer-endpoint fixture with an independent unit-cell counting IoU.
struct Fixture {
  std::vector<GroundingResult> results;
  GroundTruth gt;
};

Fixture RandomFixture(Rng& rng, int queries) {
  Fixture f;
  for (int q = 0; q < queries; ++q) {
    GroundingResult r;
    r.query_id = "q" + std::to_string(q);
    for (int k = 0; k < 10; ++k) {
      const int s = rng.UniformInt(0, 25);
      r.ranked.push_back({double(s), double(s + rng.UniformInt(1, 6)), 1.0 - 0.05 * k});
    }
    const int g = rng.UniformInt(0, 25);
    f.gt[r.query_id] = {double(g), double(g + rng.UniformInt(2, 6))};
    f.results.push_back(std::move(r));
  }
  return f;
}

double CountingIoU(const Interval& a, const Interval& b) {
  int both = 0, either = 0;
  for (int t = 0; t < 64; ++t) {
    const bool in_a = t >= a.start && t < a.end, in_b = t >= b.start && t < b.end;
    both += in_a && in_b;
    either += in_a || in_b;
  }
  return static_cast<double>(both) / either;
}

double BruteRecall(const Fixture& f, int n, double theta) {
  int hits = 0;
  for (const GroundingResult& r : f.results) {
    bool hit = false;
    for (int k = 0; k < n && k < static_cast<int>(r.ranked.size()); ++k) {
      hit = hit || CountingIoU(r.ranked[k].interval(), f.gt.at(r.query_id)) >= theta;
    }
    hits += hit;
  }
  return static_cast<double>(hits) / f.results.size();
}

double BruteMeanIoU(const Fixture& f) {
  double sum = 0.0;
  for (const GroundingResult& r : f.results) {
    sum += CountingIoU(r.ranked[0].interval(), f.gt.at(r.query_id));
  }
  return sum / f.results.size();
}

TEST(MetricsTest, MatchBruteForceOracleExactly) {
  Rng rng(75);
  for (int trial = 0; trial < 10; ++trial) {
    const Fixture f = RandomFixture(rng, 50);
    for (int n : {1, 5, 10}) {
      for (double theta : {0.0, 0.1, 0.3, 0.5, 0.7, 1.0}) {
        EXPECT_EQ(RecallAtN(f.results, f.gt, n, theta), BruteRecall(f, n, theta));
      }
    }
    EXPECT_EQ(MeanIoU(f.results, f.gt), BruteMeanIoU(f));
  }
}

TEST(MetricsTest, SimpleCases) {
  Fixture f;
  f.results = {{"a", {{0, 2, 1.0}}}, {"b", {{0, 10, 1.0}}}};
  f.gt = {{"a", {0, 10}}, {"b", {4, 10}}};
  EXPECT_NEAR(MeanIoU(f.results, f.gt), (0.2 + 0.6) / 2, 1e-15);
  EXPECT_EQ(RecallAtN(f.results, f.gt, 1, 0.0), 1.0);
  EXPECT_EQ(RecallAtN(f.results, f.gt, 1, 0.6), 0.5);  // inclusive threshold
  f.gt.erase("b");
  try {
    RecallAtN(f.results, f.gt, 1, 0.5);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
  EXPECT_THROW(MeanIoU({}, f.gt), DataError);
}

TEST(MetricsTest, ReportHasRequestedKeysAndMonotoneRecalls) {
  Rng rng(76);
  const Fixture f = RandomFixture(rng, 50);
  const MetricReport report = ComputeMetrics(f.results, f.gt, {1, 5}, {0.3, 0.5, 0.7});
  const nlohmann::ordered_json j = report.ToJson();
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"R@1_IoU=0.3", "R@1_IoU=0.5", "R@1_IoU=0.7",
                                            "R@5_IoU=0.3", "R@5_IoU=0.5", "R@5_IoU=0.7",
                                            "mIoU"}));
  EXPECT_EQ(report.n_queries, 50);
  for (double theta : {0.3, 0.5, 0.7}) {
    EXPECT_LE(report.recalls.at({1, theta}), report.recalls.at({5, theta}));
  }
  EXPECT_GE(report.recalls.at({1, 0.3}), report.recalls.at({1, 0.5}));
  EXPECT_GE(report.recalls.at({1, 0.5}), report.recalls.at({1, 0.7}));
}

TEST(PredictionsTest, JsonLinesRoundTrip) {
  const auto dir = testing::TempDir("predictions");
  std::vector<GroundingResult> results = {{"0:v", {{1, 4, 0.75}, {0, 6, 0.125}}},
                                          {"1:w", {{2, 9, 0.5}}}};
  WritePredictions((dir / "p.jsonl").string(), results);
  const std::vector<GroundingResult> back = LoadPredictions((dir / "p.jsonl").string());
  ASSERT_EQ(back.size(), 2u);
  for (size_t q = 0; q < 2; ++q) {
    EXPECT_EQ(back[q].query_id, results[q].query_id);
    ASSERT_EQ(back[q].ranked.size(), results[q].ranked.size());
    for (size_t k = 0; k < back[q].ranked.size(); ++k) {
      EXPECT_EQ(back[q].ranked[k].interval(), results[q].ranked[k].interval());
      EXPECT_EQ(back[q].ranked[k].score, results[q].ranked[k].score);
    }
  }
}

}  // namespace
}  // namespace marn
