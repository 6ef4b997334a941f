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

#include "marn/layers.h"

#include <cmath>

namespace marn {
namespace {

template <typename Derived>
Matrix Sigmoid(const Eigen::MatrixBase<Derived>& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

template <typename Derived>
Matrix Tanh(const Eigen::MatrixBase<Derived>& x) {
  return x.array().tanh().matrix();
}

}  // namespace

Matrix GridConv::Forward(const Matrix& x, const RowVector& broadcast,
                         const Matrix& weight, const Matrix& bias) const {
  const int per_tap = in_channels + broadcast_channels;
  Matrix y(cells(), out_channels);
  y.rowwise() = bias.row(0);
  for (int a = 0; a < kh; ++a) {
    for (int b = 0; b < kw; ++b) {
      const int tap = a * kw + b;
      const int dh = a - kh / 2;
      const int dw = b - kw / 2;
      Matrix z;
      if (in_channels > 0) {
        z.noalias() = x * weight.middleRows(tap * per_tap, in_channels);
      }
      RowVector tiled;
      if (broadcast_channels > 0) {
        tiled.noalias() = broadcast *
            weight.middleRows(tap * per_tap + in_channels, broadcast_channels);
      }
      for (int h = 0; h < height; ++h) {
        const int sh = h + dh;
        if (sh < 0 || sh >= height) continue;
        for (int w = 0; w < width; ++w) {
          const int sw = w + dw;
          if (sw < 0 || sw >= width) continue;
          const int cell = h * width + w;
          if (in_channels > 0) y.row(cell) += z.row(sh * width + sw);
          if (broadcast_channels > 0) y.row(cell) += tiled;
        }
      }
    }
  }
  return y;
}

void GridConv::Backward(const Matrix& x, const RowVector& broadcast,
                        const Matrix& weight, const Matrix& dy, Matrix* dx,
                        RowVector* dbroadcast, Matrix* dweight,
                        Matrix* dbias) const {
  const int per_tap = in_channels + broadcast_channels;
  dbias->row(0) += dy.colwise().sum();
  for (int a = 0; a < kh; ++a) {
    for (int b = 0; b < kw; ++b) {
      const int tap = a * kw + b;
      const int dh = a - kh / 2;
      const int dw = b - kw / 2;
      Matrix dz = Matrix::Zero(cells(), out_channels);
      RowVector tiled_grad = RowVector::Zero(out_channels);
      for (int h = 0; h < height; ++h) {
        const int sh = h + dh;
        if (sh < 0 || sh >= height) continue;
        for (int w = 0; w < width; ++w) {
          const int sw = w + dw;
          if (sw < 0 || sw >= width) continue;
          const int cell = h * width + w;
          dz.row(sh * width + sw) += dy.row(cell);
          tiled_grad += dy.row(cell);
        }
      }
      if (in_channels > 0) {
        const auto w_in = weight.middleRows(tap * per_tap, in_channels);
        dweight->middleRows(tap * per_tap, in_channels).noalias() += x.transpose() * dz;
        if (dx != nullptr) dx->noalias() += dz * w_in.transpose();
      }
      if (broadcast_channels > 0) {
        const auto w_b = weight.middleRows(tap * per_tap + in_channels, broadcast_channels);
        dweight->middleRows(tap * per_tap + in_channels, broadcast_channels).noalias() +=
            broadcast.transpose() * tiled_grad;
        if (dbroadcast != nullptr) dbroadcast->noalias() += tiled_grad * w_b.transpose();
      }
    }
  }
}

Matrix Relu(const Matrix& x) { return x.cwiseMax(0.0); }

void ReluBackwardInPlace(const Matrix& pre, Matrix* dy) {
  *dy = (pre.array() > 0.0).select(dy->array(), 0.0).matrix();
}

Matrix GruStep(const Matrix& x, const Matrix& h, const GruWeights& w,
               GruStepCache* cache) {
  GruStepCache local;
  if (cache == nullptr) cache = &local;
  const int H = static_cast<int>(h.cols());
  Matrix gi = x * w.w_ih;
  gi.rowwise() += w.b_ih.row(0);
  Matrix gh = h * w.w_hh;
  gh.rowwise() += w.b_hh.row(0);
  cache->x = x;
  cache->h_prev = h;
  cache->r = Sigmoid(gi.leftCols(H) + gh.leftCols(H));
  cache->z = Sigmoid(gi.middleCols(H, H) + gh.middleCols(H, H));
  cache->hidden_n = gh.rightCols(H);
  cache->n = Tanh(gi.rightCols(H) + cache->r.cwiseProduct(cache->hidden_n));
  return ((1.0 - cache->z.array()) * cache->n.array() +
          cache->z.array() * h.array()).matrix();
}

Matrix GruStepBackward(const GruStepCache& cache, const Matrix& dh,
                       const GruWeights& w, const GruGrads& g, Matrix* dx) {
  const auto r = cache.r.array();
  const auto z = cache.z.array();
  const auto n = cache.n.array();
  const Matrix da_n = (dh.array() * (1.0 - z) * (1.0 - n * n)).matrix();
  const Matrix da_r = (da_n.array() * cache.hidden_n.array() * r * (1.0 - r)).matrix();
  const Matrix da_z = (dh.array() * (cache.h_prev.array() - n) * z * (1.0 - z)).matrix();

  Matrix dgi(dh.rows(), 3 * dh.cols()), dgh(dh.rows(), 3 * dh.cols());
  dgi << da_r, da_z, da_n;
  dgh << da_r, da_z, (da_n.array() * r).matrix();

  g.w_ih->noalias() += cache.x.transpose() * dgi;
  g.w_hh->noalias() += cache.h_prev.transpose() * dgh;
  g.b_ih->row(0) += dgi.colwise().sum();
  g.b_hh->row(0) += dgh.colwise().sum();
  if (dx != nullptr) dx->noalias() += dgi * w.w_ih.transpose();
  Matrix dh_prev = dh.cwiseProduct(cache.z);
  dh_prev.noalias() += dgh * w.w_hh.transpose();
  return dh_prev;
}

void LstmStep(const Matrix& x, Matrix* h, Matrix* c, const LstmWeights& w,
              LstmStepCache* cache) {
  LstmStepCache local;
  if (cache == nullptr) cache = &local;
  const int H = static_cast<int>(h->cols());
  Matrix a = x * w.w_ih;
  a.noalias() += *h * w.w_hh;
  a.rowwise() += w.bias.row(0);
  cache->x = x;
  cache->h_prev = *h;
  cache->c_prev = *c;
  cache->i = Sigmoid(a.leftCols(H));
  cache->f = Sigmoid(a.middleCols(H, H));
  cache->g = Tanh(a.middleCols(2 * H, H));
  cache->o = Sigmoid(a.rightCols(H));
  cache->c = cache->f.cwiseProduct(*c) + cache->i.cwiseProduct(cache->g);
  cache->tanh_c = Tanh(cache->c);
  *c = cache->c;
  *h = cache->o.cwiseProduct(cache->tanh_c);
}

void LstmStepBackward(const LstmStepCache& cache, Matrix* dh, Matrix* dc,
                      const LstmWeights& w, const LstmGrads& g, Matrix* dx) {
  const int H = static_cast<int>(dh->cols());
  const auto i = cache.i.array();
  const auto f = cache.f.array();
  const auto gg = cache.g.array();
  const auto o = cache.o.array();
  const auto tc = cache.tanh_c.array();
  const Matrix d_c = (dc->array() + dh->array() * o * (1.0 - tc * tc)).matrix();

  Matrix da(dh->rows(), 4 * H);
  da.leftCols(H) = (d_c.array() * gg * i * (1.0 - i)).matrix();
  da.middleCols(H, H) = (d_c.array() * cache.c_prev.array() * f * (1.0 - f)).matrix();
  da.middleCols(2 * H, H) = (d_c.array() * i * (1.0 - gg * gg)).matrix();
  da.rightCols(H) = (dh->array() * tc * o * (1.0 - o)).matrix();

  g.w_ih->noalias() += cache.x.transpose() * da;
  g.w_hh->noalias() += cache.h_prev.transpose() * da;
  g.bias->row(0) += da.colwise().sum();
  if (dx != nullptr) dx->noalias() += da * w.w_ih.transpose();
  *dh = da * w.w_hh.transpose();
  *dc = d_c.cwiseProduct(cache.f);
}

}  // namespace marn
