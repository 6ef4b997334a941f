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

#ifndef MARN_TRAINER_H_
#define MARN_TRAINER_H_

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "marn/checkpoint.h"
#include "marn/data_io.h"
#include "marn/inference_eval.h"
#include "marn/model.h"
#include "marn/params.h"
#include "marn/train_config.h"

namespace marn {

class AdamOptimizer {
 public:
  AdamOptimizer(const OptimizerConfig& config, const ParamSet& like);

  // weight_decay is added to the gradient (L2), not decoupled.
  void Step(const ParamSet& grads, ParamSet* params);
  int64_t steps() const { return steps_; }

 private:
  OptimizerConfig config_;
  ParamSet m_;
  ParamSet v_;
  int64_t steps_ = 0;
};

// Rescales grads in place when their global L2 norm exceeds max_norm.
// Returns the norm before clipping. max_norm <= 0 disables clipping.
double ClipGradientNorm(ParamSet* grads, double max_norm);

// One manifest entry ready for the model.
struct Sample {
  std::string query_id;
  VideoFeatures video;
  QueryTokens query;
  std::optional<Interval> gt;
};

// Loads and resamples features (cached per path). Throws DataError when a
// feature file does not have config.d_v columns.
std::vector<Sample> PrepareSamples(const DatasetManifest& manifest,
                                   const Vocabulary& vocab, const ModelConfig& config);

// Query ids are "<entry index>:<video_id>".
std::string QueryId(size_t index, const std::string& video_id);

struct StepRecord {
  int64_t step = 0;
  int epoch = 0;
  double proposal_loss = 0.0;
  std::optional<double> clip_loss;
  double total = 0.0;
  double grad_norm = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double mean_train_loss = 0.0;
  MetricReport val;
};

struct RunLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;

  nlohmann::ordered_json ToJson() const;
};

struct TrainResult {
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  Checkpoint last;
  int best_epoch = 0;
  RunLog log;
};

// Vocabulary comes from the train split only; gt intervals of the train
// split are never read. Writes best.ckpt, last.ckpt and run_log.json into
// config.checkpoint_dir. Throws NumericError on a non-finite loss.
TrainResult Train(const TrainConfig& config, const DatasetManifest& train,
                  const DatasetManifest& val, const EmbeddingTable& embeddings,
                  std::ostream* log = nullptr);

struct InferenceOptions {
  int top_n = 5;
  std::optional<double> nms_threshold;
};

// Forward (inference mode), ensemble, rank.
GroundingResult GroundSample(const MarnModel& model, const ParamSet& params,
                             const Sample& sample, const InferenceOptions& options);

std::vector<GroundingResult> Predict(const Checkpoint& checkpoint,
                                     const std::vector<Sample>& samples,
                                     const InferenceOptions& options);

MetricReport Evaluate(const Checkpoint& checkpoint, const DatasetManifest& manifest,
                      const std::vector<int>& n_list, const std::vector<double>& theta_list,
                      std::vector<GroundingResult>* predictions = nullptr,
                      std::optional<double> nms_threshold = std::nullopt);

// Single query. Writes a warning to warn when every word maps to UNK.
GroundingResult Ground(const Checkpoint& checkpoint,
                       const std::filesystem::path& feature_file,
                       const std::string& sentence, int top_n, std::ostream* warn = nullptr);

struct ExportedAttention {
  std::filesystem::path proposal_csv;
  std::optional<std::filesystem::path> clip_csv;
};

// Writes <out>.proposal.csv (T rows, one column per scale) and, when the
// clip branch runs at inference, <out>.clip.csv. Masked cells are 0.
ExportedAttention ExportAttention(const Checkpoint& checkpoint,
                                  const std::filesystem::path& feature_file,
                                  const std::string& sentence,
                                  const std::filesystem::path& out);

}  // namespace marn

#endif  // MARN_TRAINER_H_
