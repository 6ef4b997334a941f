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

// marn: train, evaluate, ground, export-attention, synth.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "marn/checkpoint.h"
#include "marn/data_io.h"
#include "marn/errors.h"
#include "marn/inference_eval.h"
#include "marn/train_config.h"
#include "marn/trainer.h"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct TrainArgs {
  std::string config;
  std::string train;
  std::string val;
  std::string embeddings;
  std::string checkpoint_dir;
  bool quiet = false;
};

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::vector<int> n_list = {1, 5};
  std::vector<double> iou_list = {0.3, 0.5, 0.7};
  std::string predictions;
  std::optional<double> nms;
};

struct QueryArgs {
  std::string checkpoint;
  std::string features;
  std::string sentence;
  int top_n = 5;
  std::string out;
};

struct SynthArgs {
  std::string out;
  marn::SyntheticSpec spec;
  std::vector<size_t> split = {200, 50};
};

int RunTrain(const TrainArgs& args) {
  marn::TrainConfig config = marn::LoadTrainConfig(args.config);
  marn::ApplyEnvironmentOverrides(&config);
  if (!args.checkpoint_dir.empty()) config.checkpoint_dir = args.checkpoint_dir;
  const marn::DatasetManifest train = marn::LoadManifest(args.train);
  const marn::DatasetManifest val =
      args.val.empty() ? marn::DatasetManifest{} : marn::LoadManifest(args.val);
  const marn::EmbeddingTable table = marn::LoadEmbeddingTable(args.embeddings);
  const marn::TrainResult result =
      marn::Train(config, train, val, table, args.quiet ? nullptr : &std::cerr);
  nlohmann::ordered_json summary;
  summary["best_checkpoint"] = result.best_checkpoint.string();
  summary["last_checkpoint"] = result.last_checkpoint.string();
  summary["best_epoch"] = result.best_epoch;
  if (!result.log.epochs.empty()) summary["final_val"] = result.log.epochs.back().val.ToJson();
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int RunEvaluate(const EvalArgs& args) {
  const marn::Checkpoint checkpoint = marn::LoadCheckpoint(args.checkpoint);
  const marn::DatasetManifest manifest = marn::LoadManifest(args.manifest);
  std::vector<marn::GroundingResult> predictions;
  const marn::MetricReport report =
      marn::Evaluate(checkpoint, manifest, args.n_list, args.iou_list, &predictions, args.nms);
  if (!args.predictions.empty()) marn::WritePredictions(args.predictions, predictions);
  std::cout << report.ToJson().dump(2) << "\n";
  return 0;
}

int RunGround(const QueryArgs& args) {
  const marn::Checkpoint checkpoint = marn::LoadCheckpoint(args.checkpoint);
  const marn::GroundingResult result =
      marn::Ground(checkpoint, args.features, args.sentence, args.top_n, &std::cerr);
  std::cout << marn::ToJson(result).dump(2) << "\n";
  return 0;
}

int RunExport(const QueryArgs& args) {
  const marn::Checkpoint checkpoint = marn::LoadCheckpoint(args.checkpoint);
  const marn::ExportedAttention files =
      marn::ExportAttention(checkpoint, args.features, args.sentence, args.out);
  std::cout << files.proposal_csv.string() << "\n";
  if (files.clip_csv) std::cout << files.clip_csv->string() << "\n";
  return 0;
}

int RunSynth(const SynthArgs& args) {
  const marn::SyntheticDataset dataset = marn::GenerateSyntheticDataset(args.spec);
  const std::filesystem::path dir = args.out;
  marn::WriteSyntheticDataset(dataset, dir);
  // Split manifests keep feature paths relative to dir.
  marn::DatasetManifest rest = dataset.manifest;
  const char* names[] = {"train.jsonl", "val.jsonl", "test.jsonl"};
  for (size_t k = 0; k < 3; ++k) {
    if (k < args.split.size()) {
      auto [head, tail] = marn::SplitManifest(rest, args.split[k]);
      marn::WriteManifest(dir / names[k], head);
      rest = std::move(tail);
    } else {
      marn::WriteManifest(dir / names[k], rest);
      rest.entries.clear();
    }
  }
  std::cout << "wrote " << dataset.manifest.entries.size() << " videos to " << dir.string()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised temporal grounding: training and inference"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train from a config file");
  train->add_option("--config", train_args.config, "Training config (JSON)")->required();
  train->add_option("--train", train_args.train, "Training manifest (JSONL)")->required();
  train->add_option("--val", train_args.val, "Validation manifest (JSONL)");
  train->add_option("--embeddings", train_args.embeddings, "Word embedding table")->required();
  train->add_option("--checkpoint-dir", train_args.checkpoint_dir,
                    "Overrides checkpoint_dir from the config");
  train->add_flag("--quiet", train_args.quiet, "Suppress progress logging");

  EvalArgs eval_args;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Compute R@n, IoU=theta and mIoU");
  evaluate->add_option("--checkpoint", eval_args.checkpoint)->required();
  evaluate->add_option("--manifest", eval_args.manifest, "Manifest with gt intervals")
      ->required();
  evaluate->add_option("--n", eval_args.n_list, "Recall cutoffs")->delimiter(',');
  evaluate->add_option("--iou", eval_args.iou_list, "IoU thresholds")->delimiter(',');
  evaluate->add_option("--predictions", eval_args.predictions, "Write ranked predictions");
  evaluate->add_option("--nms", eval_args.nms, "Optional NMS IoU threshold");

  QueryArgs ground_args;
  CLI::App* ground = app.add_subcommand("ground", "Localize one sentence in one video");
  ground->add_option("--checkpoint", ground_args.checkpoint)->required();
  ground->add_option("--features", ground_args.features)->required();
  ground->add_option("--sentence", ground_args.sentence)->required();
  ground->add_option("--top-n", ground_args.top_n)->check(CLI::PositiveNumber);

  QueryArgs export_args;
  CLI::App* export_cmd =
      app.add_subcommand("export-attention", "Write attention maps as CSV");
  export_cmd->add_option("--checkpoint", export_args.checkpoint)->required();
  export_cmd->add_option("--features", export_args.features)->required();
  export_cmd->add_option("--sentence", export_args.sentence)->required();
  export_cmd->add_option("--out", export_args.out, "Output prefix")->required();

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "Generate the synthetic dataset");
  synth->add_option("--out", synth_args.out, "Output directory")->required();
  synth->add_option("--n-videos", synth_args.spec.n_videos);
  synth->add_option("--T", synth_args.spec.T);
  synth->add_option("--d-v", synth_args.spec.d_v);
  synth->add_option("--vocab-size", synth_args.spec.vocab_size);
  synth->add_option("--embedding-dim", synth_args.spec.embedding_dim);
  synth->add_option("--seed", synth_args.spec.seed);
  synth->add_option("--unit-seconds", synth_args.spec.unit_seconds);
  synth->add_option("--noise", synth_args.spec.noise_stddev);
  synth->add_option("--split", synth_args.split,
                    "Sizes of train[,val]; the rest goes to test")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) return RunTrain(train_args);
    if (*evaluate) return RunEvaluate(eval_args);
    if (*ground) return RunGround(ground_args);
    if (*export_cmd) return RunExport(export_args);
    if (*synth) return RunSynth(synth_args);
  } catch (const marn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const marn::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const marn::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
