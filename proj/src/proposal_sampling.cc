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

#include <algorithm>
#include <cmath>

#include "marn/errors.h"

namespace marn {

std::string ToString(StrideRule rule) {
  return rule == StrideRule::kDense ? "dense" : "sparse_quarter";
}

StrideRule ParseStrideRule(const std::string& text) {
  if (text == "dense") return StrideRule::kDense;
  if (text == "sparse_quarter") return StrideRule::kSparseQuarter;
  throw ConfigError("unknown stride_rule '" + text + "'");
}

ProposalGrid ProposalGrid::Enumerate(int T, std::vector<int> scales,
                                     StrideRule rule, int N) {
  if (scales.empty()) throw ConfigError("proposal scales must not be empty");
  if (N < 2) throw ConfigError("need at least 2 sample points per proposal");
  for (size_t j = 0; j < scales.size(); ++j) {
    if (scales[j] < 1) throw ConfigError("proposal scales must be >= 1");
    if (j > 0 && scales[j] <= scales[j - 1]) {
      throw ConfigError("proposal scales must be strictly increasing");
    }
  }
  if (T < scales.back()) {
    throw ConfigError("T=" + std::to_string(T) + " is shorter than the largest scale " +
                      std::to_string(scales.back()));
  }
  ProposalGrid grid;
  grid.T_ = T;
  grid.N_ = N;
  grid.rule_ = rule;
  grid.scales_ = std::move(scales);
  grid.valid_.assign(grid.num_cells(), 0);
  for (int i = 0; i < T; ++i) {
    for (int j = 0; j < grid.S(); ++j) {
      const int s = grid.scales_[j];
      bool ok = i + s <= T;
      if (rule == StrideRule::kSparseQuarter) ok = ok && i % std::max(1, s / 4) == 0;
      if (ok) {
        grid.valid_[grid.cell(i, j)] = 1;
        ++grid.num_valid_;
      }
    }
  }
  return grid;
}

std::vector<double> SamplingPoints(int start, int scale, int N) {
  std::vector<double> points(N);
  const double step = static_cast<double>(scale - 1) / (N - 1);
  for (int n = 0; n < N; ++n) points[n] = start + n * step;
  return points;
}

SamplingMap::SamplingMap(ProposalGrid grid) : grid_(std::move(grid)) {
  const int T = grid_.T();
  const int N = grid_.N();
  taps_.resize(static_cast<size_t>(grid_.num_cells()) * N);
  for (int i = 0; i < T; ++i) {
    for (int j = 0; j < grid_.S(); ++j) {
      if (!grid_.valid(i, j)) continue;
      const std::vector<double> points = SamplingPoints(i, grid_.scales()[j], N);
      for (int n = 0; n < N; ++n) {
        const double t = points[n];
        const int lo = static_cast<int>(std::floor(t));
        const double dec = t - lo;
        Tap& tap = taps_[static_cast<size_t>(grid_.cell(i, j)) * N + n];
        tap.lo = lo;
        tap.w_lo = 1.0 - dec;
        if (lo + 1 < T) {
          tap.hi = lo + 1;
          tap.w_hi = dec;
        } else {
          // Clamp at the video end.
          tap.hi = lo;
          tap.w_lo = 1.0;
          tap.w_hi = 0.0;
        }
      }
    }
  }
}

double SamplingMap::Weight(int i, int j, int n, int t) const {
  const Tap& tap = taps_[static_cast<size_t>(grid_.cell(i, j)) * grid_.N() + n];
  if (tap.lo < 0) return 0.0;
  double w = 0.0;
  if (t == tap.lo) w += tap.w_lo;
  if (t == tap.hi) w += tap.w_hi;
  return w;
}

Matrix SamplingMap::Apply(const Matrix& features) const {
  if (features.rows() != grid_.T()) {
    throw DataError("sampling map expects " + std::to_string(grid_.T()) +
                    " feature rows, got " + std::to_string(features.rows()));
  }
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(taps_.size()), features.cols());
  for (size_t r = 0; r < taps_.size(); ++r) {
    const Tap& tap = taps_[r];
    if (tap.lo < 0) continue;
    out.row(r) = tap.w_lo * features.row(tap.lo);
    if (tap.w_hi != 0.0) out.row(r) += tap.w_hi * features.row(tap.hi);
  }
  return out;
}

Matrix SamplingMap::ApplyTranspose(const Matrix& grad) const {
  if (grad.rows() != static_cast<Eigen::Index>(taps_.size())) {
    throw DataError("sampling map gradient has the wrong number of rows");
  }
  Matrix out = Matrix::Zero(grid_.T(), grad.cols());
  for (size_t r = 0; r < taps_.size(); ++r) {
    const Tap& tap = taps_[r];
    if (tap.lo < 0) continue;
    out.row(tap.lo) += tap.w_lo * grad.row(r);
    if (tap.w_hi != 0.0) out.row(tap.hi) += tap.w_hi * grad.row(r);
  }
  return out;
}

Interval ProposalInterval(int i, int j, const ProposalGrid& grid,
                          double unit_seconds) {
  if (i < 0 || i >= grid.T() || j < 0 || j >= grid.S() || !grid.valid(i, j)) {
    throw DataError("proposal (" + std::to_string(i) + ", " + std::to_string(j) +
                    ") is not a valid grid cell");
  }
  return Interval{i * unit_seconds, (i + grid.scales()[j]) * unit_seconds};
}

}  // namespace marn
