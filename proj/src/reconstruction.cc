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

#include <cmath>

#include "marn/errors.h"

namespace marn {
namespace {

LstmWeights DecoderWeights(const ParamSet& params) {
  return LstmWeights{params.at("decoder.lstm.w_ih"), params.at("decoder.lstm.w_hh"),
                     params.at("decoder.lstm.bias")};
}

Matrix DecoderInput(const RowVector& global, const RowVector& embedding) {
  Matrix x(1, global.size() + embedding.size());
  x << global, embedding;
  return x;
}

}  // namespace

std::pair<DecoderState, RowVector> DecodeWordStep(const GlobalFeature& global,
                                                  const DecoderState& state,
                                                  const RowVector& prev_embedding,
                                                  const ParamSet& params,
                                                  LstmStepCache* cache) {
  LstmStepCache local;
  Matrix h = state.h;
  Matrix c = state.c;
  LstmStep(DecoderInput(global.vec, prev_embedding), &h, &c, DecoderWeights(params),
           cache != nullptr ? cache : &local);
  RowVector logits = h * params.at("decoder.out.weight");
  logits += params.at("decoder.out.bias").row(0);
  return {DecoderState{h.row(0), c.row(0)}, std::move(logits)};
}

CaptionLoss ComputeCaptionLoss(const GlobalFeature& global,
                               const QueryTokens& query, const ParamSet& params,
                               CaptionTrace* trace) {
  const int M = query.length;
  if (M < 1) throw DataError("caption loss needs at least one token");
  const int d_dec = static_cast<int>(params.at("decoder.lstm.w_hh").rows());
  const int vocab = static_cast<int>(params.at("decoder.out.weight").cols());
  CaptionTrace local;
  CaptionTrace& t = trace != nullptr ? *trace : local;
  t.steps.assign(M, LstmStepCache{});
  t.probs.resize(M, vocab);

  CaptionLoss loss;
  loss.branch = global.branch;
  loss.per_word.resize(M);
  DecoderState state = DecoderState::Zero(d_dec);
  for (int m = 0; m < M; ++m) {
    const RowVector prev = m == 0 ? query.bos : RowVector(query.embeddings.row(m - 1));
    auto [next, logits] = DecodeWordStep(global, state, prev, params, &t.steps[m]);
    state = std::move(next);
    const double max_logit = logits.maxCoeff();
    const RowVector shifted = logits.array() - max_logit;
    const double log_norm = std::log(shifted.array().exp().sum());
    t.probs.row(m) = (shifted.array() - log_norm).exp();
    const int target = query.ids[m];
    loss.per_word[m] = log_norm - shifted(target);
    loss.value += loss.per_word[m];
  }
  loss.value /= M;
  return loss;
}

RowVector CaptionLossBackward(const GlobalFeature& global,
                              const QueryTokens& query, const CaptionTrace& trace,
                              double weight, const ParamSet& params,
                              ParamSet* grads) {
  const int M = query.length;
  const int D = static_cast<int>(global.vec.size());
  const Matrix& w_out = params.at("decoder.out.weight");
  Matrix& g_out = grads->at("decoder.out.weight");
  Matrix& g_out_bias = grads->at("decoder.out.bias");
  const LstmWeights w = DecoderWeights(params);
  const LstmGrads g{&grads->at("decoder.lstm.w_ih"), &grads->at("decoder.lstm.w_hh"),
                    &grads->at("decoder.lstm.bias")};

  RowVector d_global = RowVector::Zero(D);
  const int d_dec = static_cast<int>(w.w_hh.rows());
  Matrix dh = Matrix::Zero(1, d_dec);
  Matrix dc = Matrix::Zero(1, d_dec);
  for (int m = M - 1; m >= 0; --m) {
    RowVector d_logits = trace.probs.row(m);
    d_logits(query.ids[m]) -= 1.0;
    d_logits *= weight / M;
    // h_m is the output of step m, i.e. its cell's o * tanh(c).
    const RowVector h = trace.steps[m].o.cwiseProduct(trace.steps[m].tanh_c);
    g_out.noalias() += h.transpose() * d_logits;
    g_out_bias.row(0) += d_logits;
    dh.noalias() += d_logits * w_out.transpose();
    Matrix dx = Matrix::Zero(1, w.w_ih.rows());
    LstmStepBackward(trace.steps[m], &dh, &dc, w, g, &dx);
    d_global += dx.leftCols(D);
  }
  return d_global;
}

double TotalLoss(const CaptionLoss& proposal, const CaptionLoss* clip,
                 double lambda) {
  return clip == nullptr ? proposal.value : proposal.value + lambda * clip->value;
}

LossRecord ComputeLoss(const MarnModel& model, const VideoFeatures& video,
                       const QueryTokens& query, const ParamSet& params,
                       ParamSet* grads) {
  const ForwardResult forward = model.Forward(video, query, params, ForwardMode::kTrain);
  CaptionTrace trace_p, trace_c;
  const CaptionLoss loss_p = ComputeCaptionLoss(forward.proposal.global, query, params, &trace_p);
  std::optional<CaptionLoss> loss_c;
  if (forward.clip) {
    loss_c = ComputeCaptionLoss(forward.clip->global, query, params, &trace_c);
  }
  const double lambda = model.config().lambda;
  LossRecord record;
  record.proposal = loss_p.value;
  if (loss_c) record.clip = loss_c->value;
  record.total = TotalLoss(loss_p, loss_c ? &*loss_c : nullptr, lambda);
  if (grads == nullptr) return record;

  const RowVector d_global_p =
      CaptionLossBackward(forward.proposal.global, query, trace_p, 1.0, params, grads);
  RowVector d_global_c;
  if (loss_c) {
    d_global_c = CaptionLossBackward(forward.clip->global, query, trace_c, lambda,
                                     params, grads);
  }
  model.Backward(forward, video, d_global_p, loss_c ? &d_global_c : nullptr, params, grads);
  return record;
}

}  // namespace marn
