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

// The trainable grounding network: temporal dimension reduction, proposal
// sampling and summarization, query encoding, fused 2D-convolutional
// attention and attention-weighted global features, for a proposal branch
// and an optional clip branch (scale-1 proposals).

#ifndef MARN_MODEL_H_
#define MARN_MODEL_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "marn/data_io.h"
#include "marn/layers.h"
#include "marn/params.h"
#include "marn/proposal_sampling.h"
#include "marn/tensor.h"

namespace marn {

enum class Branch { kProposal, kClip };

// Receptive field of the second attention convolution.
enum class AttnKernel { k1x1, k3x3, k3x3Stacked2 };

// How the N sample features of a proposal are summarized.
enum class TemporalRep { kConv3d, kAvgPool, kMaxPool, kRecurrent };

std::string ToString(AttnKernel kernel);
std::string ToString(TemporalRep rep);
AttnKernel ParseAttnKernel(const std::string& text);
TemporalRep ParseTemporalRep(const std::string& text);

struct ModelConfig {
  int T = 32;
  std::vector<int> scales = {6, 7, 8, 10, 11, 12};
  StrideRule stride_rule = StrideRule::kDense;
  int N = 4;
  int d_v = 4096;
  int r = 8;
  int d_vp = 256;
  int d_vc = 256;
  int d_a = 256;
  int d_q = 256;
  int d_w = 300;
  int d_dec = 256;
  AttnKernel attn_kernel = AttnKernel::k3x3;
  int conv1d_kernel = 3;
  TemporalRep temporal_rep = TemporalRep::kConv3d;
  bool multilevel_train = true;
  bool multilevel_infer = true;
  double lambda = 1.0;
  double epsilon = 0.1;
  int max_query_len = kDefaultMaxQueryLen;
  int vocab_size = 0;

  int reduced_dim() const { return d_v / r; }
  bool has_clip_branch() const { return multilevel_train || multilevel_infer; }
  // Throws ConfigError.
  void Validate() const;

  // T=32, six scales over [6, 12], r=8, epsilon=0.1.
  static ModelConfig Charades();
  // T=128, scales 1..64 with quarter-scale stride, r=32, epsilon=0.3.
  static ModelConfig ActivityNet();
};

// Scores over the (T x S) map; S = 1 for the clip branch.
struct AttentionMap {
  Branch branch = Branch::kProposal;
  Matrix scores;               // T x S, exactly zero at invalid cells
  std::vector<uint8_t> valid;  // T * S, row-major

  int T() const { return static_cast<int>(scores.rows()); }
  int S() const { return static_cast<int>(scores.cols()); }
};

struct GlobalFeature {
  Branch branch = Branch::kProposal;
  RowVector vec;
};

// Intermediate values kept by the forward pass for backpropagation.
struct ReduceTrace {
  Matrix pre;  // T x d_r before ReLU
};

struct TemporalTrace {
  Matrix pooled;                         // cells x (N * d_r) or cells x d_r
  Matrix pre;                            // before ReLU
  std::vector<int> argmax;               // maxpool: sample index per entry
  std::vector<LstmStepCache> recurrent;  // recurrent: one per sample point
};

struct AttentionTrace {
  Matrix hidden_pre;   // conv1 pre-activation (proposal branch)
  Matrix hidden;       // after ReLU
  Matrix hidden2_pre;  // stacked variant
  Matrix hidden2;
  Matrix logits;       // cells x 1
};

struct QueryTrace {
  std::vector<GruStepCache> steps;
};

struct BranchResult {
  Branch branch = Branch::kProposal;
  Matrix features;  // cells x d (F_vp or F_vc), zero at invalid cells
  AttentionMap attention;
  GlobalFeature global;

  ReduceTrace reduce;
  Matrix sampled;
  TemporalTrace temporal;
  AttentionTrace attention_trace;
};

struct ForwardResult {
  RowVector query_feature;
  QueryTrace query_trace;
  BranchResult proposal;
  std::optional<BranchResult> clip;
};

enum class ForwardMode { kTrain, kInfer };

class MarnModel {
 public:
  explicit MarnModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const ProposalGrid& grid(Branch branch) const { return map(branch).grid(); }
  const SamplingMap& map(Branch branch) const {
    return branch == Branch::kProposal ? proposal_map_ : clip_map_;
  }

  // Xavier-uniform weights, zero biases. Requires config().vocab_size > 0.
  ParamSet InitParams(uint64_t seed) const;

  // Temporal Conv1d (same padding) + ReLU: T x d_v -> T x d_r.
  Matrix ReduceDim(const Matrix& video, const ParamSet& params, Branch branch,
                   ReduceTrace* trace = nullptr) const;

  // (cells * N) x d_r samples -> cells x d, zero at invalid cells.
  Matrix SummarizeProposals(const Matrix& sampled, const ParamSet& params,
                            Branch branch, TemporalTrace* trace = nullptr) const;

  // Final GRU state over the M query embeddings.
  RowVector EncodeQueryGlobal(const QueryTokens& query, const ParamSet& params,
                              QueryTrace* trace = nullptr) const;

  // Masked softmax over the logits of the fused feature map.
  AttentionMap ComputeAttention(const Matrix& features, const RowVector& query,
                                const ParamSet& params, Branch branch,
                                AttentionTrace* trace = nullptr) const;

  static GlobalFeature AttendGlobal(const Matrix& features,
                                    const AttentionMap& attention);

  // The clip branch runs when multilevel_train (kTrain) or multilevel_infer
  // (kInfer) is set.
  ForwardResult Forward(const VideoFeatures& video, const QueryTokens& query,
                        const ParamSet& params,
                        ForwardMode mode = ForwardMode::kTrain) const;

  // Accumulates parameter gradients given dL/dF_global of each branch.
  // d_global_clip is ignored when the forward pass had no clip branch.
  void Backward(const ForwardResult& forward, const VideoFeatures& video,
                const RowVector& d_global_proposal,
                const RowVector* d_global_clip, const ParamSet& params,
                ParamSet* grads) const;

 private:
  BranchResult RunBranch(const Matrix& video, const RowVector& query,
                         const ParamSet& params, Branch branch) const;
  // Returns dL/d(query feature) contributed by this branch.
  RowVector BackwardBranch(const BranchResult& branch, const Matrix& video,
                           const RowVector& query, const RowVector& d_global,
                           const ParamSet& params, ParamSet* grads) const;
  Matrix SummarizeBackward(const TemporalTrace& trace, const Matrix& d_features,
                           const ParamSet& params, Branch branch,
                           ParamSet* grads) const;

  int branch_dim(Branch branch) const {
    return branch == Branch::kProposal ? config_.d_vp : config_.d_vc;
  }
  GridConv AttentionConv1() const;
  GridConv AttentionConv2() const;
  GridConv AttentionConv3() const;
  GridConv ClipAttentionConv() const;
  GridConv ReduceConv() const;

  ModelConfig config_;
  SamplingMap proposal_map_;
  SamplingMap clip_map_;
};

std::string BranchPrefix(Branch branch);

}  // namespace marn

#endif  // MARN_MODEL_H_
