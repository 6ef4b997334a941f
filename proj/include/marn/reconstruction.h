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

// Word-by-word query reconstruction from an attended global feature, used
// only as a training signal. The decoder parameters are shared by both
// branches.

#ifndef MARN_RECONSTRUCTION_H_
#define MARN_RECONSTRUCTION_H_

#include <optional>
#include <utility>
#include <vector>

#include "marn/data_io.h"
#include "marn/layers.h"
#include "marn/model.h"
#include "marn/params.h"

namespace marn {

struct DecoderState {
  RowVector h;
  RowVector c;

  static DecoderState Zero(int d_dec) {
    return {RowVector::Zero(d_dec), RowVector::Zero(d_dec)};
  }
};

// Cross-entropy in nats per token over the M real tokens (EOS included).
struct CaptionLoss {
  Branch branch = Branch::kProposal;
  double value = 0.0;
  std::vector<double> per_word;
};

struct CaptionTrace {
  std::vector<LstmStepCache> steps;
  Matrix probs;  // M x |V|
};

// One LSTM step over the input [F_global ; e_prev] (the previous hidden
// state enters through the recurrent weights), then the vocabulary
// projection of the new hidden state. Returns the new state and the logits.
std::pair<DecoderState, RowVector> DecodeWordStep(const GlobalFeature& global,
                                                  const DecoderState& state,
                                                  const RowVector& prev_embedding,
                                                  const ParamSet& params,
                                                  LstmStepCache* cache = nullptr);

// Teacher forcing: step m is fed the ground-truth embedding of word m-1
// (BOS for m = 0) and scored on word m.
CaptionLoss ComputeCaptionLoss(const GlobalFeature& global,
                               const QueryTokens& query, const ParamSet& params,
                               CaptionTrace* trace = nullptr);

// Backpropagates weight * loss through the decoder. Returns dL/dF_global.
RowVector CaptionLossBackward(const GlobalFeature& global,
                              const QueryTokens& query, const CaptionTrace& trace,
                              double weight, const ParamSet& params,
                              ParamSet* grads);

// L_p + lambda * L_c, or L_p alone when clip is null.
double TotalLoss(const CaptionLoss& proposal, const CaptionLoss* clip,
                 double lambda);

struct LossRecord {
  double proposal = 0.0;
  std::optional<double> clip;
  double total = 0.0;
};

// Full training objective for one (video, query) pair. When grads is
// non-null the gradient of the total loss is accumulated into it.
LossRecord ComputeLoss(const MarnModel& model, const VideoFeatures& video,
                       const QueryTokens& query, const ParamSet& params,
                       ParamSet* grads = nullptr);

}  // namespace marn

#endif  // MARN_RECONSTRUCTION_H_
