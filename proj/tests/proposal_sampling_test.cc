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

#include "marn/proposal_sampling.h"

#include <gtest/gtest.h>

#include <cmath>

#include "marn/errors.h"
#include "test_util.h"

namespace marn {
namespace {

using testing::RandomMatrix;

// Linear interpolation of features at real position t, computed directly
// from the two neighbouring rows.
RowVector LerpAt(const Matrix& features, double t) {
  const int T = static_cast<int>(features.rows());
  const int lo = static_cast<int>(std::floor(t));
  const double frac = t - lo;
  if (lo + 1 >= T) return features.row(T - 1);
  return (1.0 - frac) * features.row(lo) + frac * features.row(lo + 1);
}

ProposalGrid RandomGrid(Rng& rng) {
  const int T = rng.UniformInt(1, 32);
  std::vector<int> scales;
  for (int s = 1; s <= T; ++s) {
    if (rng.Uniform() < 0.3) scales.push_back(s);
  }
  if (scales.empty()) scales.push_back(rng.UniformInt(1, T));
  const StrideRule rule = rng.Uniform() < 0.5 ? StrideRule::kDense : StrideRule::kSparseQuarter;
  return ProposalGrid::Enumerate(T, scales, rule, rng.UniformInt(2, 6));
}

TEST(ProposalGridTest, CharadesDenseCount) {
  const ProposalGrid grid =
      ProposalGrid::Enumerate(32, {6, 7, 8, 10, 11, 12}, StrideRule::kDense, 4);
  int count = 0;
  for (int i = 0; i < 32; ++i) {
    for (int j = 0; j < 6; ++j) count += grid.valid(i, j) ? 1 : 0;
  }
  EXPECT_EQ(count, 27 + 26 + 25 + 23 + 22 + 21);
  EXPECT_EQ(grid.num_valid(), 144);
}

TEST(ProposalGridTest, FullLengthScaleHasOneStart) {
  const ProposalGrid grid = ProposalGrid::Enumerate(8, {8}, StrideRule::kDense, 4);
  EXPECT_EQ(grid.num_valid(), 1);
  EXPECT_TRUE(grid.valid(0, 0));
}

TEST(ProposalGridTest, SparseQuarterStartsForScale64) {
  std::vector<int> scales;
  for (int s = 1; s <= 64; ++s) scales.push_back(s);
  const ProposalGrid grid = ProposalGrid::Enumerate(128, scales, StrideRule::kSparseQuarter, 4);
  std::vector<int> starts;
  for (int i = 0; i < 128; ++i) {
    if (grid.valid(i, 63)) starts.push_back(i);
  }
  EXPECT_EQ(starts, (std::vector<int>{0, 16, 32, 48, 64}));
  // Scales below 8 keep a dense stride.
  for (int i = 0; i + 3 <= 128; ++i) EXPECT_TRUE(grid.valid(i, 2));
}

TEST(ProposalGridTest, MaskMatchesRuleOnRandomGrids) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const ProposalGrid grid = RandomGrid(rng);
    for (int i = 0; i < grid.T(); ++i) {
      for (int j = 0; j < grid.S(); ++j) {
        const int s = grid.scales()[j];
        bool expected = i + s <= grid.T();
        if (grid.stride_rule() == StrideRule::kSparseQuarter) {
          expected = expected && i % std::max(1, s / 4) == 0;
        }
        EXPECT_EQ(grid.valid(i, j), expected);
      }
    }
  }
}

TEST(ProposalGridTest, RejectsBadConfigurations) {
  EXPECT_THROW(ProposalGrid::Enumerate(8, {}, StrideRule::kDense, 4), ConfigError);
  EXPECT_THROW(ProposalGrid::Enumerate(8, {2, 2}, StrideRule::kDense, 4), ConfigError);
  EXPECT_THROW(ProposalGrid::Enumerate(8, {3, 2}, StrideRule::kDense, 4), ConfigError);
  EXPECT_THROW(ProposalGrid::Enumerate(8, {0, 2}, StrideRule::kDense, 4), ConfigError);
  EXPECT_THROW(ProposalGrid::Enumerate(8, {2}, StrideRule::kDense, 1), ConfigError);
  EXPECT_THROW(ProposalGrid::Enumerate(8, {9}, StrideRule::kDense, 4), ConfigError);
  EXPECT_EQ(ParseStrideRule("sparse_quarter"), StrideRule::kSparseQuarter);
  EXPECT_THROW(ParseStrideRule("quarter"), ConfigError);
}

TEST(SamplingPointsTest, Examples) {
  EXPECT_EQ(SamplingPoints(0, 4, 4), (std::vector<double>{0, 1, 2, 3}));
  EXPECT_EQ(SamplingPoints(2, 7, 4), (std::vector<double>{2, 4, 6, 8}));
  EXPECT_EQ(SamplingPoints(5, 1, 4), (std::vector<double>{5, 5, 5, 5}));
  const std::vector<double> p = SamplingPoints(1, 6, 3);
  EXPECT_DOUBLE_EQ(p[1], 3.5);
}

TEST(SamplingMapTest, DatasetConfigShapes) {
  const SamplingMap charades(ProposalGrid::Enumerate(32, {6, 7, 8, 10, 11, 12},
                                                     StrideRule::kDense, 4));
  EXPECT_EQ(charades.shape(), (std::array<int, 4>{32, 6, 4, 32}));
  std::vector<int> scales;
  for (int s = 1; s <= 64; ++s) scales.push_back(s);
  const SamplingMap anet(ProposalGrid::Enumerate(128, scales, StrideRule::kSparseQuarter, 4));
  EXPECT_EQ(anet.shape(), (std::array<int, 4>{128, 64, 4, 128}));
}

TEST(SamplingMapTest, HalfwayPointSplitsMass) {
  // scale 6 from start 1 with N=3 samples 1, 3.5, 6.
  const SamplingMap map(ProposalGrid::Enumerate(8, {6}, StrideRule::kDense, 3));
  EXPECT_DOUBLE_EQ(map.Weight(1, 0, 1, 3), 0.5);
  EXPECT_DOUBLE_EQ(map.Weight(1, 0, 1, 4), 0.5);
  EXPECT_DOUBLE_EQ(map.Weight(1, 0, 0, 1), 1.0);
  EXPECT_DOUBLE_EQ(map.Weight(1, 0, 2, 6), 1.0);
  for (int t = 0; t < 8; ++t) EXPECT_EQ(map.Weight(5, 0, 1, t), 0.0);  // invalid cell
}

TEST(SamplingMapTest, RowsAreStochasticWithAdjacentSupport) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const SamplingMap map(RandomGrid(rng));
    const ProposalGrid& g = map.grid();
    for (int i = 0; i < g.T(); ++i) {
      for (int j = 0; j < g.S(); ++j) {
        for (int n = 0; n < g.N(); ++n) {
          double sum = 0.0;
          std::vector<int> support;
          for (int t = 0; t < g.T(); ++t) {
            const double w = map.Weight(i, j, n, t);
            ASSERT_GE(w, 0.0);
            sum += w;
            if (w != 0.0) support.push_back(t);
          }
          if (!g.valid(i, j)) {
            EXPECT_TRUE(support.empty());
            continue;
          }
          EXPECT_NEAR(sum, 1.0, 1e-6);
          ASSERT_LE(support.size(), 2u);
          if (support.size() == 2) {
            EXPECT_EQ(support[1], support[0] + 1);
          }
        }
      }
    }
  }
}

TEST(SamplingMapTest, ApplyMatchesGatherAndLerpOracle) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const SamplingMap map(RandomGrid(rng));
    const ProposalGrid& g = map.grid();
    const Matrix x = RandomMatrix(rng, g.T(), 8);
    const Matrix y = map.Apply(x);
    ASSERT_EQ(y.rows(), g.num_cells() * g.N());
    for (int i = 0; i < g.T(); ++i) {
      for (int j = 0; j < g.S(); ++j) {
        const std::vector<double> pts = SamplingPoints(i, g.scales()[j], g.N());
        for (int n = 0; n < g.N(); ++n) {
          const RowVector got = y.row(g.cell(i, j) * g.N() + n);
          if (!g.valid(i, j)) {
            EXPECT_TRUE(got.isZero(0.0));
          } else {
            EXPECT_LE((got - LerpAt(x, pts[n])).cwiseAbs().maxCoeff(), 1e-6);
          }
        }
      }
    }
  }
}

TEST(SamplingMapTest, ApplyIsLinear) {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    const SamplingMap map(RandomGrid(rng));
    const int T = map.grid().T();
    const Matrix a = RandomMatrix(rng, T, 5), b = RandomMatrix(rng, T, 5);
    const double alpha = rng.Uniform(-2, 2), beta = rng.Uniform(-2, 2);
    const Matrix lhs = map.Apply(alpha * a + beta * b);
    const Matrix rhs = alpha * map.Apply(a) + beta * map.Apply(b);
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(SamplingMapTest, ConstantFeaturesGiveConstantRows) {
  const SamplingMap map(ProposalGrid::Enumerate(16, {3, 5, 9}, StrideRule::kDense, 4));
  RowVector c(3);
  c << 0.5, -1.0, 2.0;
  const Matrix y = map.Apply(c.replicate(16, 1));
  const ProposalGrid& g = map.grid();
  for (int cell = 0; cell < g.num_cells(); ++cell) {
    if (!g.valid_cell(cell)) continue;
    for (int n = 0; n < 4; ++n) EXPECT_TRUE(y.row(cell * 4 + n).isApprox(c, 1e-12));
  }
}

TEST(SamplingMapTest, ClipGridReproducesInputRows) {
  Rng rng(15);
  for (int N : {2, 4, 7}) {
    const SamplingMap map(ProposalGrid::Enumerate(12, {1}, StrideRule::kDense, N));
    const Matrix x = RandomMatrix(rng, 12, 6);
    const Matrix y = map.Apply(x);
    for (int i = 0; i < 12; ++i) {
      for (int n = 0; n < N; ++n) EXPECT_EQ(y.row(i * N + n), x.row(i));
    }
  }
}

TEST(SamplingMapTest, TransposeIsAdjoint) {
  Rng rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    const SamplingMap map(RandomGrid(rng));
    const ProposalGrid& g = map.grid();
    const Matrix x = RandomMatrix(rng, g.T(), 3);
    const Matrix u = RandomMatrix(rng, g.num_cells() * g.N(), 3);
    const double lhs = (map.Apply(x).array() * u.array()).sum();
    const double rhs = (x.array() * map.ApplyTranspose(u).array()).sum();
    EXPECT_NEAR(lhs, rhs, 1e-9);
  }
}

TEST(SamplingMapTest, DimensionMismatchIsDataError) {
  const SamplingMap map(ProposalGrid::Enumerate(8, {2}, StrideRule::kDense, 4));
  EXPECT_THROW(map.Apply(Matrix::Zero(7, 3)), DataError);
}

TEST(ProposalIntervalTest, ConvertsUnitsToSeconds) {
  const ProposalGrid charades =
      ProposalGrid::Enumerate(32, {6, 7, 8, 10, 11, 12}, StrideRule::kDense, 4);
  EXPECT_EQ(ProposalInterval(4, 0, charades, 1.0), (Interval{4.0, 10.0}));
  EXPECT_THROW(ProposalInterval(30, 5, charades, 1.0), DataError);
  std::vector<int> scales;
  for (int s = 1; s <= 64; ++s) scales.push_back(s);
  const ProposalGrid anet = ProposalGrid::Enumerate(128, scales, StrideRule::kSparseQuarter, 4);
  EXPECT_EQ(ProposalInterval(0, 63, anet, 2.0), (Interval{0.0, 128.0}));
}

}  // namespace
}  // namespace marn
