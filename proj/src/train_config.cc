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

#include "marn/train_config.h"

#include <cstdlib>
#include <fstream>
#include <set>

#include "marn/errors.h"

namespace marn {
namespace {

using nlohmann::json;

void RejectUnknownKeys(const json& obj, const std::set<std::string>& known,
                       const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (known.count(key) == 0) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void Read(const json& obj, const char* key, T* out) {
  if (!obj.contains(key)) return;
  try {
    *out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

nlohmann::ordered_json ToJson(const ModelConfig& c) {
  nlohmann::ordered_json obj;
  obj["T"] = c.T;
  obj["scales"] = c.scales;
  obj["stride_rule"] = ToString(c.stride_rule);
  obj["N"] = c.N;
  obj["d_v"] = c.d_v;
  obj["r"] = c.r;
  obj["d_vp"] = c.d_vp;
  obj["d_vc"] = c.d_vc;
  obj["d_a"] = c.d_a;
  obj["d_q"] = c.d_q;
  obj["d_w"] = c.d_w;
  obj["d_dec"] = c.d_dec;
  obj["attn_kernel"] = ToString(c.attn_kernel);
  obj["conv1d_kernel"] = c.conv1d_kernel;
  obj["temporal_rep"] = ToString(c.temporal_rep);
  obj["multilevel_train"] = c.multilevel_train;
  obj["multilevel_infer"] = c.multilevel_infer;
  obj["lambda"] = c.lambda;
  obj["epsilon"] = c.epsilon;
  obj["max_query_len"] = c.max_query_len;
  obj["vocab_size"] = c.vocab_size;
  return obj;
}

ModelConfig ModelConfigFromJson(const json& obj) {
  if (!obj.is_object()) throw ConfigError("model config must be an object");
  RejectUnknownKeys(obj,
                    {"preset", "T", "scales", "stride_rule", "N", "d_v", "r", "d_vp",
                     "d_vc", "d_a", "d_q", "d_w", "d_dec", "attn_kernel",
                     "conv1d_kernel", "temporal_rep", "multilevel_train",
                     "multilevel_infer", "lambda", "epsilon", "max_query_len",
                     "vocab_size"},
                    "model");
  ModelConfig c;
  std::string preset = "charades";
  Read(obj, "preset", &preset);
  if (preset == "activitynet") {
    c = ModelConfig::ActivityNet();
  } else if (preset != "charades") {
    throw ConfigError("unknown model preset '" + preset + "'");
  }
  Read(obj, "T", &c.T);
  Read(obj, "scales", &c.scales);
  std::string text = ToString(c.stride_rule);
  Read(obj, "stride_rule", &text);
  c.stride_rule = ParseStrideRule(text);
  Read(obj, "N", &c.N);
  Read(obj, "d_v", &c.d_v);
  Read(obj, "r", &c.r);
  Read(obj, "d_vp", &c.d_vp);
  Read(obj, "d_vc", &c.d_vc);
  Read(obj, "d_a", &c.d_a);
  Read(obj, "d_q", &c.d_q);
  Read(obj, "d_w", &c.d_w);
  Read(obj, "d_dec", &c.d_dec);
  text = ToString(c.attn_kernel);
  Read(obj, "attn_kernel", &text);
  c.attn_kernel = ParseAttnKernel(text);
  Read(obj, "conv1d_kernel", &c.conv1d_kernel);
  text = ToString(c.temporal_rep);
  Read(obj, "temporal_rep", &text);
  c.temporal_rep = ParseTemporalRep(text);
  Read(obj, "multilevel_train", &c.multilevel_train);
  Read(obj, "multilevel_infer", &c.multilevel_infer);
  Read(obj, "lambda", &c.lambda);
  Read(obj, "epsilon", &c.epsilon);
  Read(obj, "max_query_len", &c.max_query_len);
  Read(obj, "vocab_size", &c.vocab_size);
  c.Validate();
  return c;
}

void TrainConfig::Validate() const {
  model.Validate();
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("train config: " + what);
  };
  require(optimizer.kind == "adam" || optimizer.kind == "adaptive-moment",
          "optimizer.kind must be 'adam'");
  require(optimizer.lr > 0.0, "optimizer.lr must be > 0");
  require(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0, "beta1 must be in [0, 1)");
  require(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0, "beta2 must be in [0, 1)");
  require(optimizer.weight_decay >= 0.0, "weight_decay must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(epochs >= 1, "epochs must be >= 1");
  require(grad_clip_norm >= 0.0, "grad_clip_norm must be >= 0 (0 disables)");
  require(log_every >= 1, "log_every must be >= 1");
  require(min_count >= 1, "min_count must be >= 1");
  require(!eval_n.empty() && !eval_iou.empty(), "eval_n and eval_iou must be non-empty");
}

nlohmann::ordered_json ToJson(const TrainConfig& c) {
  nlohmann::ordered_json obj;
  obj["model"] = ToJson(c.model);
  obj["optimizer"] = {{"kind", c.optimizer.kind},
                      {"lr", c.optimizer.lr},
                      {"beta1", c.optimizer.beta1},
                      {"beta2", c.optimizer.beta2},
                      {"weight_decay", c.optimizer.weight_decay}};
  obj["batch_size"] = c.batch_size;
  obj["epochs"] = c.epochs;
  obj["seed"] = c.seed;
  obj["grad_clip_norm"] = c.grad_clip_norm;
  obj["checkpoint_dir"] = c.checkpoint_dir;
  obj["log_every"] = c.log_every;
  obj["deterministic"] = c.deterministic;
  obj["min_count"] = c.min_count;
  obj["eval_n"] = c.eval_n;
  obj["eval_iou"] = c.eval_iou;
  return obj;
}

TrainConfig TrainConfigFromJson(const json& obj) {
  if (!obj.is_object()) throw ConfigError("train config must be a JSON object");
  RejectUnknownKeys(obj,
                    {"model", "optimizer", "batch_size", "epochs", "seed",
                     "grad_clip_norm", "checkpoint_dir", "log_every", "deterministic",
                     "min_count", "eval_n", "eval_iou"},
                    "train config");
  TrainConfig c;
  if (obj.contains("model")) c.model = ModelConfigFromJson(obj["model"]);
  if (obj.contains("optimizer")) {
    const json& opt = obj["optimizer"];
    RejectUnknownKeys(opt, {"kind", "lr", "beta1", "beta2", "weight_decay"}, "optimizer");
    Read(opt, "kind", &c.optimizer.kind);
    Read(opt, "lr", &c.optimizer.lr);
    Read(opt, "beta1", &c.optimizer.beta1);
    Read(opt, "beta2", &c.optimizer.beta2);
    Read(opt, "weight_decay", &c.optimizer.weight_decay);
  }
  Read(obj, "batch_size", &c.batch_size);
  Read(obj, "epochs", &c.epochs);
  Read(obj, "seed", &c.seed);
  Read(obj, "grad_clip_norm", &c.grad_clip_norm);
  Read(obj, "checkpoint_dir", &c.checkpoint_dir);
  Read(obj, "log_every", &c.log_every);
  Read(obj, "deterministic", &c.deterministic);
  Read(obj, "min_count", &c.min_count);
  Read(obj, "eval_n", &c.eval_n);
  Read(obj, "eval_iou", &c.eval_iou);
  c.Validate();
  return c;
}

TrainConfig LoadTrainConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json obj;
  try {
    obj = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return TrainConfigFromJson(obj);
}

void ApplyEnvironmentOverrides(TrainConfig* config) {
  const char* seed = std::getenv("MARN_SEED");
  if (seed == nullptr || *seed == '\0') return;
  char* end = nullptr;
  const unsigned long long value = std::strtoull(seed, &end, 10);
  if (*end != '\0') throw ConfigError(std::string("MARN_SEED is not an integer: ") + seed);
  config->seed = value;
}

}  // namespace marn
