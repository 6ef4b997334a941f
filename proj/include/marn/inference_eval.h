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

// Score ensembling, proposal ranking and the grounding metrics
// (R@n at IoU >= theta, mean IoU of the top-1 result).

#ifndef MARN_INFERENCE_EVAL_H_
#define MARN_INFERENCE_EVAL_H_

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "marn/data_io.h"
#include "marn/model.h"
#include "marn/proposal_sampling.h"
#include "marn/tensor.h"

namespace marn {

struct ScoredInterval {
  double start = 0.0;
  double end = 0.0;
  double score = 0.0;

  Interval interval() const { return {start, end}; }
};

struct GroundingResult {
  std::string query_id;
  std::vector<ScoredInterval> ranked;  // descending by score
};

// Att_p(i, j) + epsilon * Att_c(floor(i + s_j / 2)) at valid cells, -inf
// elsewhere. clip may be null (proposal scores only).
Matrix EnsembleScores(const AttentionMap& proposal, const AttentionMap* clip,
                      double epsilon, const ProposalGrid& grid);

// Index of the clip at the centre of proposal (start, scale), clamped.
int CenterClip(int start, int scale, int T);

// Valid cells by descending score; ties go to the earlier start, then the
// smaller scale. When nms_threshold is set, a proposal is dropped if it
// overlaps an already ranked one with IoU >= the threshold.
GroundingResult RankProposals(const Matrix& scores, const ProposalGrid& grid,
                              double unit_seconds, int top_n,
                              std::string query_id = "",
                              std::optional<double> nms_threshold = std::nullopt);

// Throws DataError for zero-length or reversed intervals.
double TemporalIoU(const Interval& a, const Interval& b);

using GroundTruth = std::map<std::string, Interval>;

double RecallAtN(const std::vector<GroundingResult>& results,
                 const GroundTruth& gt, int n, double theta);
double MeanIoU(const std::vector<GroundingResult>& results, const GroundTruth& gt);

struct MetricReport {
  std::map<std::pair<int, double>, double> recalls;  // (n, theta) -> fraction
  double miou = 0.0;
  int n_queries = 0;

  // Keys "R@{n}_IoU={theta}" and "mIoU", values rounded to 4 decimals.
  nlohmann::ordered_json ToJson() const;
};

std::string RecallKey(int n, double theta);

// Computes every (n, theta) recall plus mIoU and checks the monotonicity of
// recall in n and theta (throws std::logic_error on violation).
MetricReport ComputeMetrics(const std::vector<GroundingResult>& results,
                            const GroundTruth& gt, const std::vector<int>& n_list,
                            const std::vector<double>& theta_list);

nlohmann::ordered_json ToJson(const GroundingResult& result);
GroundingResult GroundingResultFromJson(const nlohmann::json& obj);

// Predictions file: one {"query_id", "ranked": [[t_s, t_e, score], ...]} per line.
void WritePredictions(const std::string& path, const std::vector<GroundingResult>& results);
std::vector<GroundingResult> LoadPredictions(const std::string& path);

}  // namespace marn

#endif  // MARN_INFERENCE_EVAL_H_
