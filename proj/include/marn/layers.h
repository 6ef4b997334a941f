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

// Differentiable building blocks. Every forward has a matching backward that
// accumulates (+=) into caller-owned gradient tensors. Row-vector convention
// throughout: y = x * W + b with W stored (in x out).

#ifndef MARN_LAYERS_H_
#define MARN_LAYERS_H_

#include <vector>

#include "marn/tensor.h"

namespace marn {

// Zero-padded, stride-1 convolution over a height x width grid of cells
// (row index h * width + w). Besides per-cell inputs it can take a vector
// tiled over every cell; that part is computed once per tap rather than once
// per cell. Weight rows are laid out per tap (a * kw + b) as
// [in_channels | broadcast_channels].
struct GridConv {
  int height = 1;
  int width = 1;
  int kh = 1;
  int kw = 1;
  int in_channels = 0;
  int broadcast_channels = 0;
  int out_channels = 0;

  int cells() const { return height * width; }
  int taps() const { return kh * kw; }
  int weight_rows() const { return taps() * (in_channels + broadcast_channels); }

  Matrix Forward(const Matrix& x, const RowVector& broadcast,
                 const Matrix& weight, const Matrix& bias) const;

  // dx and dbroadcast may be null.
  void Backward(const Matrix& x, const RowVector& broadcast,
                const Matrix& weight, const Matrix& dy, Matrix* dx,
                RowVector* dbroadcast, Matrix* dweight, Matrix* dbias) const;
};

Matrix Relu(const Matrix& x);
// Zeroes dy where the forward pre-activation was <= 0.
void ReluBackwardInPlace(const Matrix& pre, Matrix* dy);

struct GruWeights {
  const Matrix& w_ih;  // in x 3H, gate order [r, z, n]
  const Matrix& w_hh;  // H x 3H
  const Matrix& b_ih;  // 1 x 3H
  const Matrix& b_hh;  // 1 x 3H
};

struct GruGrads {
  Matrix* w_ih;
  Matrix* w_hh;
  Matrix* b_ih;
  Matrix* b_hh;
};

// Recurrent cells operate on a batch of rows: x is (batch x in), h and c
// are (batch x H).
// Step caches may be null when no backward pass follows.
struct GruStepCache {
  Matrix x, h_prev, r, z, n, hidden_n;  // hidden_n = h_prev * W_hn + b_hn
};

Matrix GruStep(const Matrix& x, const Matrix& h, const GruWeights& w,
               GruStepCache* cache);
// Returns dL/dh_prev; adds dL/dx to *dx when non-null.
Matrix GruStepBackward(const GruStepCache& cache, const Matrix& dh,
                       const GruWeights& w, const GruGrads& g, Matrix* dx);

struct LstmWeights {
  const Matrix& w_ih;  // in x 4H, gate order [i, f, g, o]
  const Matrix& w_hh;  // H x 4H
  const Matrix& bias;  // 1 x 4H
};

struct LstmGrads {
  Matrix* w_ih;
  Matrix* w_hh;
  Matrix* bias;
};

struct LstmStepCache {
  Matrix x, h_prev, c_prev, i, f, g, o, c, tanh_c;
};

// Updates h and c in place.
void LstmStep(const Matrix& x, Matrix* h, Matrix* c, const LstmWeights& w,
              LstmStepCache* cache);
// dh and dc are gradients w.r.t. the step outputs; on return they hold the
// gradients w.r.t. h_prev and c_prev.
void LstmStepBackward(const LstmStepCache& cache, Matrix* dh, Matrix* dc,
                      const LstmWeights& w, const LstmGrads& g, Matrix* dx);

}  // namespace marn

#endif  // MARN_LAYERS_H_
