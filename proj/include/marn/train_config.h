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

// Structured training configuration. A single JSON file holds the model
// config under "model" and the optimizer and loop settings at top level:
//
//   {"model": {"T": 32, "scales": [6, 7, 8, 10, 11, 12], "attn_kernel": "3x3", ...},
//    "optimizer": {"kind": "adam", "lr": 0.001, "beta1": 0.9, "beta2": 0.999,
//                  "weight_decay": 0.0},
//    "batch_size": 32, "epochs": 15, "seed": 7, "grad_clip_norm": 5.0, ...}
//
// Absent keys take their defaults; unknown keys are rejected.

#ifndef MARN_TRAIN_CONFIG_H_
#define MARN_TRAIN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "marn/model.h"

namespace marn {

struct OptimizerConfig {
  std::string kind = "adam";
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
};

struct TrainConfig {
  ModelConfig model;
  OptimizerConfig optimizer;
  int batch_size = 32;
  int epochs = 15;
  uint64_t seed = 7;
  double grad_clip_norm = 5.0;
  std::string checkpoint_dir = "checkpoints";
  int log_every = 10;
  bool deterministic = true;
  int min_count = 1;
  std::vector<int> eval_n = {1, 5};
  std::vector<double> eval_iou = {0.3, 0.5, 0.7};

  void Validate() const;
};

nlohmann::ordered_json ToJson(const ModelConfig& config);
// Starts from the preset named by an optional "preset" key
// ("charades" | "activitynet"), then applies the remaining keys.
ModelConfig ModelConfigFromJson(const nlohmann::json& obj);

nlohmann::ordered_json ToJson(const TrainConfig& config);
TrainConfig TrainConfigFromJson(const nlohmann::json& obj);

// Throws ConfigError for unreadable files or bad values.
TrainConfig LoadTrainConfig(const std::filesystem::path& path);

// MARN_SEED, when set, replaces config->seed.
void ApplyEnvironmentOverrides(TrainConfig* config);

}  // namespace marn

#endif  // MARN_TRAIN_CONFIG_H_
