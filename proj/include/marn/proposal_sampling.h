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

// The 2D proposal grid (start index x scale) and the precomputed linear
// interpolation map that turns T per-unit features into N sample features
// per proposal.

#ifndef MARN_PROPOSAL_SAMPLING_H_
#define MARN_PROPOSAL_SAMPLING_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "marn/data_io.h"
#include "marn/tensor.h"

namespace marn {

enum class StrideRule { kDense, kSparseQuarter };

std::string ToString(StrideRule rule);
StrideRule ParseStrideRule(const std::string& text);

class ProposalGrid {
 public:
  // Throws ConfigError for empty or non-increasing scales, N < 2, or
  // T < max(scales).
  static ProposalGrid Enumerate(int T, std::vector<int> scales, StrideRule rule,
                                int N);

  int T() const { return T_; }
  int S() const { return static_cast<int>(scales_.size()); }
  int N() const { return N_; }
  StrideRule stride_rule() const { return rule_; }
  const std::vector<int>& scales() const { return scales_; }

  // Flat index of cell (i, j), row-major over (T, S).
  int cell(int i, int j) const { return i * S() + j; }
  int num_cells() const { return T_ * S(); }
  bool valid(int i, int j) const { return valid_[cell(i, j)] != 0; }
  bool valid_cell(int c) const { return valid_[c] != 0; }
  int num_valid() const { return num_valid_; }

 private:
  ProposalGrid() = default;

  int T_ = 0;
  int N_ = 0;
  StrideRule rule_ = StrideRule::kDense;
  std::vector<int> scales_;
  std::vector<uint8_t> valid_;
  int num_valid_ = 0;
};

// t_n = start + n * (scale - 1) / (N - 1), n = 0..N-1.
std::vector<double> SamplingPoints(int start, int scale, int N);

// W in R^{T x S x N x T}, stored sparsely: every valid (i, j, n) row has its
// mass on floor(t_n) and floor(t_n) + 1 only.
class SamplingMap {
 public:
  explicit SamplingMap(ProposalGrid grid);

  const ProposalGrid& grid() const { return grid_; }
  std::array<int, 4> shape() const {
    return {grid_.T(), grid_.S(), grid_.N(), grid_.T()};
  }

  // Dense element W[i, j, n, t].
  double Weight(int i, int j, int n, int t) const;

  // features: T x d. Returns (T * S * N) x d with row ((i * S + j) * N + n);
  // rows of invalid cells are zero.
  Matrix Apply(const Matrix& features) const;

  // Adjoint of Apply: maps a (T * S * N) x d gradient back to T x d.
  Matrix ApplyTranspose(const Matrix& grad) const;

 private:
  struct Tap {
    int lo = -1;  // -1 for invalid cells
    int hi = -1;
    double w_lo = 0.0;
    double w_hi = 0.0;
  };

  ProposalGrid grid_;
  std::vector<Tap> taps_;  // one per (i, j, n)
};

// (t_s, t_e) in seconds of a valid cell; throws DataError for invalid cells.
Interval ProposalInterval(int i, int j, const ProposalGrid& grid,
                          double unit_seconds);

}  // namespace marn

#endif  // MARN_PROPOSAL_SAMPLING_H_
