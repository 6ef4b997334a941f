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

#include "marn/model.h"

#include <cmath>
#include <limits>

#include "marn/errors.h"
#include "marn/rng.h"

namespace marn {
namespace {

std::vector<uint8_t> ValidMask(const ProposalGrid& grid) {
  std::vector<uint8_t> valid(grid.num_cells());
  for (int c = 0; c < grid.num_cells(); ++c) valid[c] = grid.valid_cell(c) ? 1 : 0;
  return valid;
}

void ZeroInvalidRows(const ProposalGrid& grid, Matrix* m) {
  for (int c = 0; c < grid.num_cells(); ++c) {
    if (!grid.valid_cell(c)) m->row(c).setZero();
  }
}

// Row n of each cell: rows {c * N + n} of a (cells * N) x d matrix.
Matrix GatherSample(const Matrix& sampled, int cells, int N, int n) {
  Matrix out(cells, sampled.cols());
  for (int c = 0; c < cells; ++c) out.row(c) = sampled.row(c * N + n);
  return out;
}

}  // namespace

std::string BranchPrefix(Branch branch) {
  return branch == Branch::kProposal ? "proposal" : "clip";
}

std::string ToString(AttnKernel kernel) {
  switch (kernel) {
    case AttnKernel::k1x1: return "1x1";
    case AttnKernel::k3x3: return "3x3";
    case AttnKernel::k3x3Stacked2: return "3x3_stacked2";
  }
  return "";
}

std::string ToString(TemporalRep rep) {
  switch (rep) {
    case TemporalRep::kConv3d: return "conv3d";
    case TemporalRep::kAvgPool: return "avgpool";
    case TemporalRep::kMaxPool: return "maxpool";
    case TemporalRep::kRecurrent: return "recurrent";
  }
  return "";
}

AttnKernel ParseAttnKernel(const std::string& text) {
  if (text == "1x1") return AttnKernel::k1x1;
  if (text == "3x3") return AttnKernel::k3x3;
  if (text == "3x3_stacked2") return AttnKernel::k3x3Stacked2;
  throw ConfigError("unknown attn_kernel '" + text + "'");
}

TemporalRep ParseTemporalRep(const std::string& text) {
  if (text == "conv3d") return TemporalRep::kConv3d;
  if (text == "avgpool") return TemporalRep::kAvgPool;
  if (text == "maxpool") return TemporalRep::kMaxPool;
  if (text == "recurrent") return TemporalRep::kRecurrent;
  throw ConfigError("unknown temporal_rep '" + text + "'");
}

void ModelConfig::Validate() const {
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("model config: " + what);
  };
  require(T >= 1, "T must be >= 1");
  require(N >= 2, "N must be >= 2");
  require(!scales.empty(), "scales must not be empty");
  require(r >= 1 && d_v >= 1 && d_v % r == 0, "r must divide d_v");
  require(d_vp >= 1 && d_vc >= 1 && d_a >= 1 && d_q >= 1 && d_w >= 1 && d_dec >= 1,
          "all dims must be >= 1");
  require(conv1d_kernel == 1 || conv1d_kernel == 3, "conv1d_kernel must be 1 or 3");
  require(std::isfinite(lambda) && lambda >= 0.0, "lambda must be >= 0");
  require(std::isfinite(epsilon) && epsilon >= 0.0, "epsilon must be >= 0");
  require(max_query_len >= 2, "max_query_len must be >= 2");
  require(vocab_size >= 0, "vocab_size must be >= 0");
  require(!multilevel_train || d_vc == d_vp,
          "the shared decoder needs d_vc == d_vp when multilevel_train is set");
}

ModelConfig ModelConfig::Charades() { return ModelConfig{}; }

ModelConfig ModelConfig::ActivityNet() {
  ModelConfig config;
  config.T = 128;
  config.scales.clear();
  for (int s = 1; s <= 64; ++s) config.scales.push_back(s);
  config.stride_rule = StrideRule::kSparseQuarter;
  config.r = 32;
  config.epsilon = 0.3;
  return config;
}

namespace {

SamplingMap MakeMap(const ModelConfig& config, Branch branch) {
  config.Validate();
  if (branch == Branch::kProposal) {
    return SamplingMap(ProposalGrid::Enumerate(config.T, config.scales,
                                               config.stride_rule, config.N));
  }
  return SamplingMap(ProposalGrid::Enumerate(config.T, {1}, StrideRule::kDense, config.N));
}

}  // namespace

MarnModel::MarnModel(ModelConfig config)
    : config_(std::move(config)),
      proposal_map_(MakeMap(config_, Branch::kProposal)),
      clip_map_(MakeMap(config_, Branch::kClip)) {}

GridConv MarnModel::ReduceConv() const {
  return GridConv{config_.T, 1, config_.conv1d_kernel, 1, config_.d_v, 0,
                  config_.reduced_dim()};
}

GridConv MarnModel::AttentionConv1() const {
  const ProposalGrid& g = proposal_map_.grid();
  return GridConv{g.T(), g.S(), 3, 3, config_.d_vp, config_.d_q, config_.d_a};
}

GridConv MarnModel::AttentionConv2() const {
  const ProposalGrid& g = proposal_map_.grid();
  switch (config_.attn_kernel) {
    case AttnKernel::k1x1: return GridConv{g.T(), g.S(), 1, 1, config_.d_a, 0, 1};
    case AttnKernel::k3x3: return GridConv{g.T(), g.S(), 3, 3, config_.d_a, 0, 1};
    case AttnKernel::k3x3Stacked2:
      return GridConv{g.T(), g.S(), 3, 3, config_.d_a, 0, config_.d_a};
  }
  return {};
}

GridConv MarnModel::AttentionConv3() const {
  const ProposalGrid& g = proposal_map_.grid();
  return GridConv{g.T(), g.S(), 3, 3, config_.d_a, 0, 1};
}

// On the T x 1 clip map a 3x3 kernel only ever sees its centre column (the
// rest is zero padding), so it is stored as 3x1.
GridConv MarnModel::ClipAttentionConv() const {
  const int kh = config_.attn_kernel == AttnKernel::k1x1 ? 1 : 3;
  return GridConv{config_.T, 1, kh, 1, config_.d_vc, config_.d_q, 1};
}

ParamSet MarnModel::InitParams(uint64_t seed) const {
  if (config_.vocab_size <= 0) throw ConfigError("vocab_size must be set before init");
  struct Spec {
    std::string name;
    int rows, cols;
    int fan_in, fan_out;
  };
  std::vector<Spec> specs;
  const auto add_linear = [&](const std::string& name, int in, int out, int taps = 1) {
    specs.push_back({name + ".weight", taps * in, out, taps * in, taps * out});
    specs.push_back({name + ".bias", 1, out, 0, 0});
  };
  const auto add_conv = [&](const std::string& name, const GridConv& conv) {
    const int in = conv.in_channels + conv.broadcast_channels;
    add_linear(name, in, conv.out_channels, conv.taps());
  };
  const auto add_lstm = [&](const std::string& name, int in, int hidden) {
    specs.push_back({name + ".w_ih", in, 4 * hidden, in, 4 * hidden});
    specs.push_back({name + ".w_hh", hidden, 4 * hidden, hidden, 4 * hidden});
    specs.push_back({name + ".bias", 1, 4 * hidden, 0, 0});
  };
  const int d_r = config_.reduced_dim();
  std::vector<Branch> branches = {Branch::kProposal};
  if (config_.has_clip_branch()) branches.push_back(Branch::kClip);
  for (const Branch branch : branches) {
    const std::string p = BranchPrefix(branch);
    const int D = branch_dim(branch);
    add_conv(p + ".conv1d", ReduceConv());
    switch (config_.temporal_rep) {
      case TemporalRep::kConv3d: add_linear(p + ".conv3d", d_r, D, config_.N); break;
      case TemporalRep::kAvgPool:
      case TemporalRep::kMaxPool: add_linear(p + ".pool_proj", d_r, D); break;
      case TemporalRep::kRecurrent: add_lstm(p + ".temporal_lstm", d_r, D); break;
    }
  }
  add_conv("proposal.attn.conv1", AttentionConv1());
  add_conv("proposal.attn.conv2", AttentionConv2());
  if (config_.attn_kernel == AttnKernel::k3x3Stacked2) {
    add_conv("proposal.attn.conv3", AttentionConv3());
  }
  if (config_.has_clip_branch()) add_conv("clip.attn.conv", ClipAttentionConv());
  const int d_q = config_.d_q;
  specs.push_back({"query.gru.w_ih", config_.d_w, 3 * d_q, config_.d_w, 3 * d_q});
  specs.push_back({"query.gru.w_hh", d_q, 3 * d_q, d_q, 3 * d_q});
  specs.push_back({"query.gru.b_ih", 1, 3 * d_q, 0, 0});
  specs.push_back({"query.gru.b_hh", 1, 3 * d_q, 0, 0});
  add_lstm("decoder.lstm", config_.d_vp + config_.d_w, config_.d_dec);
  add_linear("decoder.out", config_.d_dec, config_.vocab_size);

  ParamSet params;
  for (const Spec& spec : specs) params.Add(spec.name, spec.rows, spec.cols);
  std::map<std::string, const Spec*> by_name;
  for (const Spec& spec : specs) by_name[spec.name] = &spec;
  Rng rng(seed);
  for (auto& [name, tensor] : params.tensors()) {
    const Spec& spec = *by_name.at(name);
    if (spec.fan_in == 0) continue;  // biases start at zero
    const double a = std::sqrt(6.0 / (spec.fan_in + spec.fan_out));
    for (Eigen::Index k = 0; k < tensor.size(); ++k) {
      tensor.data()[k] = static_cast<float>(rng.Uniform(-a, a));
    }
  }
  return params;
}

Matrix MarnModel::ReduceDim(const Matrix& video, const ParamSet& params,
                            Branch branch, ReduceTrace* trace) const {
  if (video.rows() != config_.T || video.cols() != config_.d_v) {
    throw DataError("video features are " + std::to_string(video.rows()) + "x" +
                    std::to_string(video.cols()) + ", model expects " +
                    std::to_string(config_.T) + "x" + std::to_string(config_.d_v));
  }
  const std::string p = BranchPrefix(branch) + ".conv1d";
  Matrix pre = ReduceConv().Forward(video, RowVector(), params.at(p + ".weight"),
                                    params.at(p + ".bias"));
  Matrix out = Relu(pre);
  if (trace != nullptr) trace->pre = std::move(pre);
  return out;
}

Matrix MarnModel::SummarizeProposals(const Matrix& sampled, const ParamSet& params,
                                     Branch branch, TemporalTrace* trace) const {
  const ProposalGrid& grid = this->grid(branch);
  const int cells = grid.num_cells();
  const int N = grid.N();
  const int d_r = static_cast<int>(sampled.cols());
  if (sampled.rows() != static_cast<Eigen::Index>(cells) * N) {
    throw DataError("sampled proposal tensor has the wrong number of rows");
  }
  const std::string p = BranchPrefix(branch);
  TemporalTrace local;
  TemporalTrace& t = trace != nullptr ? *trace : local;
  Matrix out;
  switch (config_.temporal_rep) {
    case TemporalRep::kConv3d: {
      // The (N x 1 x 1) kernel is a linear map over the N concatenated samples.
      t.pooled = Eigen::Map<const Matrix>(sampled.data(), cells,
                                          static_cast<Eigen::Index>(N) * d_r);
      t.pre = t.pooled * params.at(p + ".conv3d.weight");
      t.pre.rowwise() += params.at(p + ".conv3d.bias").row(0);
      out = Relu(t.pre);
      break;
    }
    case TemporalRep::kAvgPool:
    case TemporalRep::kMaxPool: {
      const bool is_max = config_.temporal_rep == TemporalRep::kMaxPool;
      t.pooled.resize(cells, d_r);
      if (is_max) t.argmax.assign(static_cast<size_t>(cells) * d_r, 0);
      for (int c = 0; c < cells; ++c) {
        const auto block = sampled.middleRows(static_cast<Eigen::Index>(c) * N, N);
        if (!is_max) {
          t.pooled.row(c) = block.colwise().mean();
          continue;
        }
        for (int k = 0; k < d_r; ++k) {
          Eigen::Index best;
          t.pooled(c, k) = block.col(k).maxCoeff(&best);
          t.argmax[static_cast<size_t>(c) * d_r + k] = static_cast<int>(best);
        }
      }
      t.pre = t.pooled * params.at(p + ".pool_proj.weight");
      t.pre.rowwise() += params.at(p + ".pool_proj.bias").row(0);
      out = Relu(t.pre);
      break;
    }
    case TemporalRep::kRecurrent: {
      const int D = branch_dim(branch);
      const LstmWeights w{params.at(p + ".temporal_lstm.w_ih"),
                          params.at(p + ".temporal_lstm.w_hh"),
                          params.at(p + ".temporal_lstm.bias")};
      Matrix h = Matrix::Zero(cells, D);
      Matrix c = Matrix::Zero(cells, D);
      t.recurrent.assign(N, LstmStepCache{});
      for (int n = 0; n < N; ++n) {
        LstmStep(GatherSample(sampled, cells, N, n), &h, &c, w, &t.recurrent[n]);
      }
      out = std::move(h);
      break;
    }
  }
  ZeroInvalidRows(grid, &out);
  return out;
}

RowVector MarnModel::EncodeQueryGlobal(const QueryTokens& query,
                                       const ParamSet& params,
                                       QueryTrace* trace) const {
  if (query.length < 1 || query.embeddings.rows() < query.length) {
    throw DataError("query must contain at least one token");
  }
  if (query.embeddings.cols() != config_.d_w) {
    throw DataError("query embedding dim " + std::to_string(query.embeddings.cols()) +
                    " does not match d_w=" + std::to_string(config_.d_w));
  }
  const GruWeights w{params.at("query.gru.w_ih"), params.at("query.gru.w_hh"),
                     params.at("query.gru.b_ih"), params.at("query.gru.b_hh")};
  Matrix h = Matrix::Zero(1, config_.d_q);
  QueryTrace local;
  QueryTrace& t = trace != nullptr ? *trace : local;
  t.steps.assign(query.length, GruStepCache{});
  for (int m = 0; m < query.length; ++m) {
    h = GruStep(query.embeddings.row(m), h, w, &t.steps[m]);
  }
  return h.row(0);
}

AttentionMap MarnModel::ComputeAttention(const Matrix& features,
                                         const RowVector& query,
                                         const ParamSet& params, Branch branch,
                                         AttentionTrace* trace) const {
  const ProposalGrid& grid = this->grid(branch);
  AttentionTrace local;
  AttentionTrace& t = trace != nullptr ? *trace : local;
  if (branch == Branch::kProposal) {
    t.hidden_pre = AttentionConv1().Forward(features, query,
                                            params.at("proposal.attn.conv1.weight"),
                                            params.at("proposal.attn.conv1.bias"));
    t.hidden = Relu(t.hidden_pre);
    if (config_.attn_kernel == AttnKernel::k3x3Stacked2) {
      t.hidden2_pre = AttentionConv2().Forward(t.hidden, RowVector(),
                                               params.at("proposal.attn.conv2.weight"),
                                               params.at("proposal.attn.conv2.bias"));
      t.hidden2 = Relu(t.hidden2_pre);
      t.logits = AttentionConv3().Forward(t.hidden2, RowVector(),
                                          params.at("proposal.attn.conv3.weight"),
                                          params.at("proposal.attn.conv3.bias"));
    } else {
      t.logits = AttentionConv2().Forward(t.hidden, RowVector(),
                                          params.at("proposal.attn.conv2.weight"),
                                          params.at("proposal.attn.conv2.bias"));
    }
  } else {
    t.logits = ClipAttentionConv().Forward(features, query,
                                           params.at("clip.attn.conv.weight"),
                                           params.at("clip.attn.conv.bias"));
  }

  if (grid.num_valid() == 0) throw DataError("attention over an all-masked grid");
  AttentionMap attention;
  attention.branch = branch;
  attention.valid = ValidMask(grid);
  attention.scores = Matrix::Zero(grid.T(), grid.S());
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < grid.num_cells(); ++c) {
    if (grid.valid_cell(c)) max_logit = std::max(max_logit, t.logits(c, 0));
  }
  double sum = 0.0;
  double* scores = attention.scores.data();
  for (int c = 0; c < grid.num_cells(); ++c) {
    if (!grid.valid_cell(c)) continue;
    scores[c] = std::exp(t.logits(c, 0) - max_logit);
    sum += scores[c];
  }
  for (int c = 0; c < grid.num_cells(); ++c) scores[c] /= sum;
  return attention;
}

GlobalFeature MarnModel::AttendGlobal(const Matrix& features,
                                      const AttentionMap& attention) {
  const Eigen::Index cells = attention.scores.size();
  if (features.rows() != cells) {
    throw DataError("attention and feature map sizes differ");
  }
  GlobalFeature global;
  global.branch = attention.branch;
  global.vec = RowVector::Zero(features.cols());
  const double* a = attention.scores.data();
  for (Eigen::Index c = 0; c < cells; ++c) {
    if (attention.valid[c] && a[c] != 0.0) global.vec += a[c] * features.row(c);
  }
  return global;
}

BranchResult MarnModel::RunBranch(const Matrix& video, const RowVector& query,
                                  const ParamSet& params, Branch branch) const {
  BranchResult out;
  out.branch = branch;
  const Matrix reduced = ReduceDim(video, params, branch, &out.reduce);
  out.sampled = map(branch).Apply(reduced);
  out.features = SummarizeProposals(out.sampled, params, branch, &out.temporal);
  out.attention = ComputeAttention(out.features, query, params, branch,
                                   &out.attention_trace);
  out.global = AttendGlobal(out.features, out.attention);
  return out;
}

ForwardResult MarnModel::Forward(const VideoFeatures& video,
                                 const QueryTokens& query, const ParamSet& params,
                                 ForwardMode mode) const {
  ForwardResult result;
  result.query_feature = EncodeQueryGlobal(query, params, &result.query_trace);
  result.proposal = RunBranch(video.data, result.query_feature, params, Branch::kProposal);
  const bool with_clip = mode == ForwardMode::kTrain ? config_.multilevel_train
                                                     : config_.multilevel_infer;
  if (with_clip) {
    result.clip = RunBranch(video.data, result.query_feature, params, Branch::kClip);
  }
  return result;
}

Matrix MarnModel::SummarizeBackward(const TemporalTrace& t, const Matrix& d_features,
                                    const ParamSet& params, Branch branch,
                                    ParamSet* grads) const {
  const ProposalGrid& grid = this->grid(branch);
  const int cells = grid.num_cells();
  const int N = grid.N();
  const int d_r = config_.reduced_dim();
  const std::string p = BranchPrefix(branch);
  Matrix d_sampled = Matrix::Zero(static_cast<Eigen::Index>(cells) * N, d_r);
  if (config_.temporal_rep == TemporalRep::kRecurrent) {
    const LstmWeights w{params.at(p + ".temporal_lstm.w_ih"),
                        params.at(p + ".temporal_lstm.w_hh"),
                        params.at(p + ".temporal_lstm.bias")};
    const LstmGrads g{&grads->at(p + ".temporal_lstm.w_ih"),
                      &grads->at(p + ".temporal_lstm.w_hh"),
                      &grads->at(p + ".temporal_lstm.bias")};
    Matrix dh = d_features;
    Matrix dc = Matrix::Zero(dh.rows(), dh.cols());
    for (int n = N - 1; n >= 0; --n) {
      Matrix dx = Matrix::Zero(cells, d_r);
      LstmStepBackward(t.recurrent[n], &dh, &dc, w, g, &dx);
      for (int c = 0; c < cells; ++c) d_sampled.row(static_cast<Eigen::Index>(c) * N + n) = dx.row(c);
    }
    return d_sampled;
  }

  const std::string layer = config_.temporal_rep == TemporalRep::kConv3d
                                ? p + ".conv3d" : p + ".pool_proj";
  Matrix d_pre = d_features;
  ReluBackwardInPlace(t.pre, &d_pre);
  grads->at(layer + ".weight").noalias() += t.pooled.transpose() * d_pre;
  grads->at(layer + ".bias").row(0) += d_pre.colwise().sum();
  const Matrix d_pooled = d_pre * params.at(layer + ".weight").transpose();
  switch (config_.temporal_rep) {
    case TemporalRep::kConv3d:
      d_sampled = Eigen::Map<const Matrix>(d_pooled.data(),
                                           static_cast<Eigen::Index>(cells) * N, d_r);
      break;
    case TemporalRep::kAvgPool:
      for (int c = 0; c < cells; ++c) {
        for (int n = 0; n < N; ++n) {
          d_sampled.row(static_cast<Eigen::Index>(c) * N + n) = d_pooled.row(c) / N;
        }
      }
      break;
    case TemporalRep::kMaxPool:
      for (int c = 0; c < cells; ++c) {
        for (int k = 0; k < d_r; ++k) {
          const int n = t.argmax[static_cast<size_t>(c) * d_r + k];
          d_sampled(static_cast<Eigen::Index>(c) * N + n, k) = d_pooled(c, k);
        }
      }
      break;
    case TemporalRep::kRecurrent:
      break;
  }
  return d_sampled;
}

RowVector MarnModel::BackwardBranch(const BranchResult& b, const Matrix& video,
                                    const RowVector& query, const RowVector& d_global,
                                    const ParamSet& params, ParamSet* grads) const {
  const ProposalGrid& grid = this->grid(b.branch);
  const int cells = grid.num_cells();
  const std::string p = BranchPrefix(b.branch);
  const Eigen::Map<const RowVector> a(b.attention.scores.data(), cells);

  // Global feature: g = sum_c a_c F_c.
  Matrix d_features = a.transpose() * d_global;
  const Eigen::VectorXd d_attention = b.features * d_global.transpose();

  // Masked softmax.
  double weighted = 0.0;
  for (int c = 0; c < cells; ++c) weighted += a(c) * d_attention(c);
  Matrix d_logits = Matrix::Zero(cells, 1);
  for (int c = 0; c < cells; ++c) {
    if (grid.valid_cell(c)) d_logits(c, 0) = a(c) * (d_attention(c) - weighted);
  }

  RowVector d_query = RowVector::Zero(config_.d_q);
  const AttentionTrace& t = b.attention_trace;
  if (b.branch == Branch::kProposal) {
    Matrix d_hidden = Matrix::Zero(cells, config_.d_a);
    if (config_.attn_kernel == AttnKernel::k3x3Stacked2) {
      Matrix d_hidden2 = Matrix::Zero(cells, config_.d_a);
      AttentionConv3().Backward(t.hidden2, RowVector(),
                                params.at("proposal.attn.conv3.weight"), d_logits,
                                &d_hidden2, nullptr,
                                &grads->at("proposal.attn.conv3.weight"),
                                &grads->at("proposal.attn.conv3.bias"));
      ReluBackwardInPlace(t.hidden2_pre, &d_hidden2);
      AttentionConv2().Backward(t.hidden, RowVector(),
                                params.at("proposal.attn.conv2.weight"), d_hidden2,
                                &d_hidden, nullptr,
                                &grads->at("proposal.attn.conv2.weight"),
                                &grads->at("proposal.attn.conv2.bias"));
    } else {
      AttentionConv2().Backward(t.hidden, RowVector(),
                                params.at("proposal.attn.conv2.weight"), d_logits,
                                &d_hidden, nullptr,
                                &grads->at("proposal.attn.conv2.weight"),
                                &grads->at("proposal.attn.conv2.bias"));
    }
    ReluBackwardInPlace(t.hidden_pre, &d_hidden);
    AttentionConv1().Backward(b.features, query, params.at("proposal.attn.conv1.weight"),
                              d_hidden, &d_features, &d_query,
                              &grads->at("proposal.attn.conv1.weight"),
                              &grads->at("proposal.attn.conv1.bias"));
  } else {
    ClipAttentionConv().Backward(b.features, query, params.at("clip.attn.conv.weight"),
                                 d_logits, &d_features, &d_query,
                                 &grads->at("clip.attn.conv.weight"),
                                 &grads->at("clip.attn.conv.bias"));
  }
  ZeroInvalidRows(grid, &d_features);

  const Matrix d_sampled = SummarizeBackward(b.temporal, d_features, params, b.branch, grads);
  Matrix d_reduced = map(b.branch).ApplyTranspose(d_sampled);
  ReluBackwardInPlace(b.reduce.pre, &d_reduced);
  ReduceConv().Backward(video, RowVector(), params.at(p + ".conv1d.weight"), d_reduced,
                        nullptr, nullptr, &grads->at(p + ".conv1d.weight"),
                        &grads->at(p + ".conv1d.bias"));
  return d_query;
}

void MarnModel::Backward(const ForwardResult& forward, const VideoFeatures& video,
                         const RowVector& d_global_proposal,
                         const RowVector* d_global_clip, const ParamSet& params,
                         ParamSet* grads) const {
  RowVector d_query = BackwardBranch(forward.proposal, video.data, forward.query_feature,
                                     d_global_proposal, params, grads);
  if (forward.clip && d_global_clip != nullptr) {
    d_query += BackwardBranch(*forward.clip, video.data, forward.query_feature,
                              *d_global_clip, params, grads);
  }
  const GruWeights w{params.at("query.gru.w_ih"), params.at("query.gru.w_hh"),
                     params.at("query.gru.b_ih"), params.at("query.gru.b_hh")};
  const GruGrads g{&grads->at("query.gru.w_ih"), &grads->at("query.gru.w_hh"),
                   &grads->at("query.gru.b_ih"), &grads->at("query.gru.b_hh")};
  Matrix dh = d_query;
  for (int m = static_cast<int>(forward.query_trace.steps.size()) - 1; m >= 0; --m) {
    dh = GruStepBackward(forward.query_trace.steps[m], dh, w, g, nullptr);
  }
}

}  // namespace marn
