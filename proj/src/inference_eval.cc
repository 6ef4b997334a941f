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

#include "marn/inference_eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "marn/errors.h"

namespace marn {

int CenterClip(int start, int scale, int T) {
  // floor(start + scale / 2) for non-negative integers.
  const int c = start + scale / 2;
  return std::clamp(c, 0, T - 1);
}

Matrix EnsembleScores(const AttentionMap& proposal, const AttentionMap* clip,
                      double epsilon, const ProposalGrid& grid) {
  if (proposal.T() != grid.T() || proposal.S() != grid.S()) {
    throw DataError("proposal attention does not match the grid");
  }
  if (clip != nullptr && clip->T() != grid.T()) {
    throw DataError("clip attention length differs from the proposal map");
  }
  Matrix scores(grid.T(), grid.S());
  for (int i = 0; i < grid.T(); ++i) {
    for (int j = 0; j < grid.S(); ++j) {
      if (!grid.valid(i, j)) {
        scores(i, j) = -std::numeric_limits<double>::infinity();
        continue;
      }
      scores(i, j) = proposal.scores(i, j);
      if (clip != nullptr && epsilon != 0.0) {
        scores(i, j) += epsilon * clip->scores(CenterClip(i, grid.scales()[j], grid.T()), 0);
      }
    }
  }
  return scores;
}

GroundingResult RankProposals(const Matrix& scores, const ProposalGrid& grid,
                              double unit_seconds, int top_n, std::string query_id,
                              std::optional<double> nms_threshold) {
  struct Candidate {
    double score;
    int i, j;
  };
  std::vector<Candidate> candidates;
  for (int i = 0; i < grid.T(); ++i) {
    for (int j = 0; j < grid.S(); ++j) {
      if (grid.valid(i, j)) candidates.push_back({scores(i, j), i, j});
    }
  }
  if (candidates.empty()) throw DataError("no valid proposals to rank");
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  GroundingResult result;
  result.query_id = std::move(query_id);
  for (const Candidate& c : candidates) {
    if (static_cast<int>(result.ranked.size()) >= top_n) break;
    const Interval interval = ProposalInterval(c.i, c.j, grid, unit_seconds);
    if (nms_threshold) {
      const bool suppressed = std::any_of(
          result.ranked.begin(), result.ranked.end(), [&](const ScoredInterval& kept) {
            return TemporalIoU(kept.interval(), interval) >= *nms_threshold;
          });
      if (suppressed) continue;
    }
    result.ranked.push_back({interval.start, interval.end, c.score});
  }
  return result;
}

double TemporalIoU(const Interval& a, const Interval& b) {
  if (!(a.end > a.start) || !(b.end > b.start)) {
    throw DataError("IoU of a zero-length or reversed interval");
  }
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = std::max(a.end, b.end) - std::min(a.start, b.start);
  return inter / uni;
}

namespace {

const Interval& LookupGt(const GroundTruth& gt, const GroundingResult& result) {
  const auto it = gt.find(result.query_id);
  if (it == gt.end()) {
    throw DataError("no ground truth for query '" + result.query_id + "'");
  }
  return it->second;
}

}  // namespace

double RecallAtN(const std::vector<GroundingResult>& results, const GroundTruth& gt,
                 int n, double theta) {
  if (results.empty()) throw DataError("recall over an empty result set");
  int hits = 0;
  for (const GroundingResult& result : results) {
    const Interval& truth = LookupGt(gt, result);
    const int limit = std::min<int>(n, static_cast<int>(result.ranked.size()));
    for (int k = 0; k < limit; ++k) {
      if (TemporalIoU(result.ranked[k].interval(), truth) >= theta) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / results.size();
}

double MeanIoU(const std::vector<GroundingResult>& results, const GroundTruth& gt) {
  if (results.empty()) throw DataError("mean IoU over an empty result set");
  double sum = 0.0;
  for (const GroundingResult& result : results) {
    const Interval& truth = LookupGt(gt, result);
    if (!result.ranked.empty()) sum += TemporalIoU(result.ranked.front().interval(), truth);
  }
  return sum / results.size();
}

std::string RecallKey(int n, double theta) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "R@%d_IoU=%g", n, theta);
  return buf;
}

MetricReport ComputeMetrics(const std::vector<GroundingResult>& results,
                            const GroundTruth& gt, const std::vector<int>& n_list,
                            const std::vector<double>& theta_list) {
  MetricReport report;
  report.n_queries = static_cast<int>(results.size());
  for (const int n : n_list) {
    for (const double theta : theta_list) {
      report.recalls[{n, theta}] = RecallAtN(results, gt, n, theta);
    }
  }
  report.miou = MeanIoU(results, gt);
  for (const auto& [key_a, value_a] : report.recalls) {
    for (const auto& [key_b, value_b] : report.recalls) {
      const bool dominated = key_a.first <= key_b.first && key_a.second >= key_b.second;
      if (dominated && value_a > value_b) {
        throw std::logic_error("recall is not monotone: " + RecallKey(key_a.first, key_a.second) +
                               " > " + RecallKey(key_b.first, key_b.second));
      }
    }
  }
  return report;
}

nlohmann::ordered_json MetricReport::ToJson() const {
  const auto round4 = [](double v) { return std::round(v * 1e4) / 1e4; };
  nlohmann::ordered_json obj;
  for (const auto& [key, value] : recalls) obj[RecallKey(key.first, key.second)] = round4(value);
  obj["mIoU"] = round4(miou);
  return obj;
}

nlohmann::ordered_json ToJson(const GroundingResult& result) {
  nlohmann::ordered_json obj;
  obj["query_id"] = result.query_id;
  obj["ranked"] = nlohmann::ordered_json::array();
  for (const ScoredInterval& s : result.ranked) obj["ranked"].push_back({s.start, s.end, s.score});
  return obj;
}

GroundingResult GroundingResultFromJson(const nlohmann::json& obj) {
  GroundingResult result;
  result.query_id = obj.at("query_id").get<std::string>();
  for (const auto& row : obj.at("ranked")) {
    if (row.size() != 3) throw FormatError("ranked entries must be [t_s, t_e, score]");
    result.ranked.push_back({row[0].get<double>(), row[1].get<double>(), row[2].get<double>()});
  }
  return result;
}

void WritePredictions(const std::string& path, const std::vector<GroundingResult>& results) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const GroundingResult& result : results) out << ToJson(result).dump() << '\n';
}

std::vector<GroundingResult> LoadPredictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<GroundingResult> results;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      results.push_back(GroundingResultFromJson(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return results;
}

}  // namespace marn
