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

#include "marn/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <thread>

#include "marn/errors.h"
#include "marn/reconstruction.h"
#include "marn/rng.h"

namespace marn {

AdamOptimizer::AdamOptimizer(const OptimizerConfig& config, const ParamSet& like)
    : config_(config), m_(like.ZerosLike()), v_(like.ZerosLike()) {}

void AdamOptimizer::Step(const ParamSet& grads, ParamSet* params) {
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  constexpr double kEps = 1e-8;
  for (auto& [name, p] : params->tensors()) {
    Matrix g = grads.at(name);
    if (config_.weight_decay > 0.0) g += config_.weight_decay * p;
    Matrix& m = m_.at(name);
    Matrix& v = v_.at(name);
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    p.array() -= config_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + kEps);
  }
}

double ClipGradientNorm(ParamSet* grads, double max_norm) {
  const double norm = std::sqrt(grads->SquaredNorm());
  if (max_norm > 0.0 && norm > max_norm) grads->Scale(max_norm / norm);
  return norm;
}

std::string QueryId(size_t index, const std::string& video_id) {
  return std::to_string(index) + ":" + video_id;
}

std::vector<Sample> PrepareSamples(const DatasetManifest& manifest,
                                   const Vocabulary& vocab, const ModelConfig& config) {
  std::map<std::string, VideoFeatures> cache;
  std::vector<Sample> samples;
  samples.reserve(manifest.entries.size());
  for (size_t k = 0; k < manifest.entries.size(); ++k) {
    const ManifestEntry& entry = manifest.entries[k];
    auto it = cache.find(entry.feature_path);
    if (it == cache.end()) {
      RawVideoFeatures raw = LoadFeatureFile(entry.feature_path);
      if (raw.dim() != config.d_v) {
        throw DataError(entry.feature_path + ": feature dim " + std::to_string(raw.dim()) +
                        " does not match config d_v " + std::to_string(config.d_v));
      }
      it = cache.emplace(entry.feature_path, ResampleFeatures(raw, config.T)).first;
    }
    Sample sample;
    sample.query_id = QueryId(k, entry.video_id);
    sample.video = it->second;
    sample.video.video_id = entry.video_id;
    sample.query = EncodeQuery(entry.sentence, vocab, config.max_query_len);
    sample.gt = entry.gt;
    samples.push_back(std::move(sample));
  }
  return samples;
}

nlohmann::ordered_json RunLog::ToJson() const {
  nlohmann::ordered_json obj;
  obj["steps"] = nlohmann::ordered_json::array();
  for (const StepRecord& s : steps) {
    nlohmann::ordered_json rec;
    rec["step"] = s.step;
    rec["epoch"] = s.epoch;
    rec["L_p"] = s.proposal_loss;
    rec["L_c"] = s.clip_loss ? nlohmann::ordered_json(*s.clip_loss) : nlohmann::ordered_json();
    rec["total"] = s.total;
    rec["grad_norm"] = s.grad_norm;
    obj["steps"].push_back(rec);
  }
  obj["epochs"] = nlohmann::ordered_json::array();
  for (const EpochRecord& e : epochs) {
    nlohmann::ordered_json rec;
    rec["epoch"] = e.epoch;
    rec["mean_train_loss"] = e.mean_train_loss;
    rec["val"] = e.val.ToJson();
    obj["epochs"].push_back(rec);
  }
  return obj;
}

namespace {

struct BatchLoss {
  double proposal = 0.0;
  double clip = 0.0;
  double total = 0.0;
};

std::string DescribeBatch(const std::vector<Sample>& samples,
                          const std::vector<size_t>& order, size_t begin, size_t end) {
  std::string ids;
  for (size_t k = begin; k < end; ++k) {
    if (!ids.empty()) ids += ", ";
    ids += samples[order[k]].query_id;
  }
  return ids;
}

// Sums per-sample gradients of samples[order[begin..end)] into grads.
BatchLoss AccumulateBatch(const MarnModel& model, const ParamSet& params,
                          const std::vector<Sample>& samples,
                          const std::vector<size_t>& order, size_t begin, size_t end,
                          bool deterministic, ParamSet* grads) {
  const size_t count = end - begin;
  unsigned workers = deterministic ? 1u : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<size_t>(workers, count));

  std::vector<LossRecord> losses(count);
  if (workers <= 1) {
    for (size_t k = 0; k < count; ++k) {
      const Sample& s = samples[order[begin + k]];
      losses[k] = ComputeLoss(model, s.video, s.query, params, grads);
    }
  } else {
    std::vector<ParamSet> partial(workers, grads->ZerosLike());
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        for (size_t k = w; k < count; k += workers) {
          const Sample& s = samples[order[begin + k]];
          losses[k] = ComputeLoss(model, s.video, s.query, params, &partial[w]);
        }
      });
    }
    for (std::thread& t : threads) t.join();
    for (const ParamSet& p : partial) grads->AddScaled(p, 1.0);
  }

  BatchLoss batch;
  for (const LossRecord& l : losses) {
    batch.proposal += l.proposal;
    batch.clip += l.clip.value_or(0.0);
    batch.total += l.total;
  }
  const double inv = 1.0 / static_cast<double>(count);
  batch.proposal *= inv;
  batch.clip *= inv;
  batch.total *= inv;
  return batch;
}

GroundTruth CollectGroundTruth(const std::vector<Sample>& samples) {
  GroundTruth gt;
  for (const Sample& s : samples) {
    if (!s.gt) throw DataError("evaluation entry " + s.query_id + " has no gt interval");
    gt[s.query_id] = *s.gt;
  }
  return gt;
}

int MaxN(const std::vector<int>& n_list) {
  return *std::max_element(n_list.begin(), n_list.end());
}

void WriteRunLog(const std::filesystem::path& path, const RunLog& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << log.ToJson().dump(1) << "\n";
}

}  // namespace

TrainResult Train(const TrainConfig& config, const DatasetManifest& train,
                  const DatasetManifest& val, const EmbeddingTable& embeddings,
                  std::ostream* log) {
  config.Validate();
  if (train.entries.empty()) throw DataError("training manifest is empty");
  if (embeddings.dim != config.model.d_w) {
    throw ConfigError("embedding dim " + std::to_string(embeddings.dim) +
                      " does not match config d_w " + std::to_string(config.model.d_w));
  }

  // The train split never contributes its intervals.
  DatasetManifest weak = train;
  for (ManifestEntry& e : weak.entries) e.gt.reset();

  Checkpoint state;
  state.vocab = BuildVocabulary(weak, embeddings, config.min_count);
  state.config = config.model;
  state.config.vocab_size = state.vocab.size();
  state.config.Validate();
  const MarnModel model(state.config);

  const std::vector<Sample> train_samples = PrepareSamples(weak, state.vocab, state.config);
  const std::vector<Sample> val_samples = PrepareSamples(val, state.vocab, state.config);
  const GroundTruth val_gt = CollectGroundTruth(val_samples);

  ParamSet params = model.InitParams(config.seed);
  ParamSet grads = params.ZerosLike();
  AdamOptimizer optimizer(config.optimizer, params);
  Rng shuffle_rng(config.seed ^ 0x5eedf00dULL);

  const std::filesystem::path dir = config.checkpoint_dir;
  std::filesystem::create_directories(dir);
  TrainResult result;
  result.best_checkpoint = dir / "best.ckpt";
  result.last_checkpoint = dir / "last.ckpt";
  double best_miou = -1.0;

  std::vector<size_t> order(train_samples.size());
  const size_t batch_size = static_cast<size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), size_t{0});
    shuffle_rng.Shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (size_t begin = 0; begin < order.size(); begin += batch_size) {
      const size_t end = std::min(order.size(), begin + batch_size);
      grads.SetZero();
      const BatchLoss loss = AccumulateBatch(model, params, train_samples, order, begin, end,
                                             config.deterministic, &grads);
      if (!std::isfinite(loss.total) || !grads.AllFinite()) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(optimizer.steps() + 1) + ", batch [" +
                           DescribeBatch(train_samples, order, begin, end) + "]");
      }
      grads.Scale(1.0 / static_cast<double>(end - begin));
      StepRecord rec;
      rec.grad_norm = ClipGradientNorm(&grads, config.grad_clip_norm);
      optimizer.Step(grads, &params);
      rec.step = optimizer.steps();
      rec.epoch = epoch;
      rec.proposal_loss = loss.proposal;
      if (state.config.multilevel_train) rec.clip_loss = loss.clip;
      rec.total = loss.total;
      result.log.steps.push_back(rec);
      epoch_loss += loss.total * static_cast<double>(end - begin);
      if (log != nullptr && rec.step % config.log_every == 0) {
        char line[160];
        std::snprintf(line, sizeof(line), "step %lld epoch %d L_p %.6f L_c %.6f total %.6f\n",
                      static_cast<long long>(rec.step), epoch, rec.proposal_loss,
                      rec.clip_loss.value_or(0.0), rec.total);
        *log << line;
      }
    }
    if (!params.AllFinite()) {
      throw NumericError("parameters became non-finite in epoch " + std::to_string(epoch));
    }

    // Evaluate and save exactly what a reload would see.
    state.params = params;
    state.params.RoundToFloat();
    EpochRecord record;
    record.epoch = epoch;
    record.mean_train_loss = epoch_loss / static_cast<double>(order.size());
    if (!val_samples.empty()) {
      InferenceOptions options;
      options.top_n = MaxN(config.eval_n);
      record.val = ComputeMetrics(Predict(state, val_samples, options), val_gt,
                                  config.eval_n, config.eval_iou);
    }
    result.log.epochs.push_back(record);
    if (log != nullptr) {
      *log << "epoch " << epoch << " mean_loss " << record.mean_train_loss << " val "
           << record.val.ToJson().dump() << "\n";
    }
    SaveCheckpoint(result.last_checkpoint, state);
    if (record.val.miou > best_miou) {
      best_miou = record.val.miou;
      result.best_epoch = epoch;
      SaveCheckpoint(result.best_checkpoint, state);
    }
    WriteRunLog(dir / "run_log.json", result.log);
  }
  result.last = std::move(state);
  return result;
}

GroundingResult GroundSample(const MarnModel& model, const ParamSet& params,
                             const Sample& sample, const InferenceOptions& options) {
  const ForwardResult fwd = model.Forward(sample.video, sample.query, params, ForwardMode::kInfer);
  const AttentionMap* clip = fwd.clip ? &fwd.clip->attention : nullptr;
  const ProposalGrid& grid = model.grid(Branch::kProposal);
  const Matrix scores =
      EnsembleScores(fwd.proposal.attention, clip, model.config().epsilon, grid);
  return RankProposals(scores, grid, sample.video.unit_seconds, options.top_n,
                       sample.query_id, options.nms_threshold);
}

std::vector<GroundingResult> Predict(const Checkpoint& checkpoint,
                                     const std::vector<Sample>& samples,
                                     const InferenceOptions& options) {
  const MarnModel model(checkpoint.config);
  std::vector<GroundingResult> results;
  results.reserve(samples.size());
  for (const Sample& s : samples) results.push_back(GroundSample(model, checkpoint.params, s, options));
  return results;
}

MetricReport Evaluate(const Checkpoint& checkpoint, const DatasetManifest& manifest,
                      const std::vector<int>& n_list, const std::vector<double>& theta_list,
                      std::vector<GroundingResult>* predictions,
                      std::optional<double> nms_threshold) {
  if (n_list.empty() || theta_list.empty()) throw ConfigError("empty n or IoU list");
  if (manifest.entries.empty()) throw DataError("evaluation manifest is empty");
  const std::vector<Sample> samples = PrepareSamples(manifest, checkpoint.vocab, checkpoint.config);
  const GroundTruth gt = CollectGroundTruth(samples);
  InferenceOptions options;
  options.top_n = MaxN(n_list);
  options.nms_threshold = nms_threshold;
  std::vector<GroundingResult> results = Predict(checkpoint, samples, options);
  MetricReport report = ComputeMetrics(results, gt, n_list, theta_list);
  if (predictions != nullptr) *predictions = std::move(results);
  return report;
}

namespace {

Sample SingleSample(const Checkpoint& checkpoint, const std::filesystem::path& feature_file,
                    const std::string& sentence, std::ostream* warn) {
  const RawVideoFeatures raw = LoadFeatureFile(feature_file);
  if (raw.dim() != checkpoint.config.d_v) {
    throw DataError(feature_file.string() + ": feature dim " + std::to_string(raw.dim()) +
                    " does not match checkpoint d_v " + std::to_string(checkpoint.config.d_v));
  }
  Sample sample;
  sample.video = ResampleFeatures(raw, checkpoint.config.T);
  sample.query = EncodeQuery(sentence, checkpoint.vocab, checkpoint.config.max_query_len);
  sample.query_id = raw.video_id;
  bool all_unk = true;
  for (int k = 0; k + 1 < sample.query.length; ++k) {
    if (sample.query.ids[k] != Vocabulary::kUnk) all_unk = false;
  }
  if (all_unk && warn != nullptr) {
    *warn << "warning: no word of the sentence is in the checkpoint vocabulary\n";
  }
  return sample;
}

}  // namespace

GroundingResult Ground(const Checkpoint& checkpoint, const std::filesystem::path& feature_file,
                       const std::string& sentence, int top_n, std::ostream* warn) {
  if (top_n < 1) throw ConfigError("top_n must be >= 1");
  const Sample sample = SingleSample(checkpoint, feature_file, sentence, warn);
  const MarnModel model(checkpoint.config);
  InferenceOptions options;
  options.top_n = top_n;
  return GroundSample(model, checkpoint.params, sample, options);
}

ExportedAttention ExportAttention(const Checkpoint& checkpoint,
                                  const std::filesystem::path& feature_file,
                                  const std::string& sentence,
                                  const std::filesystem::path& out) {
  const Sample sample = SingleSample(checkpoint, feature_file, sentence, nullptr);
  const MarnModel model(checkpoint.config);
  const ForwardResult fwd =
      model.Forward(sample.video, sample.query, checkpoint.params, ForwardMode::kInfer);

  const auto write = [](const std::filesystem::path& path, const AttentionMap& attn,
                        const std::vector<int>& scales) {
    std::ofstream csv(path);
    if (!csv) throw DataError("cannot write " + path.string());
    csv << "start";
    for (int s : scales) csv << "," << s;
    csv << "\n";
    char buf[32];
    for (int i = 0; i < attn.T(); ++i) {
      csv << i;
      for (int j = 0; j < attn.S(); ++j) {
        const bool valid = attn.valid[static_cast<size_t>(i) * attn.S() + j] != 0;
        std::snprintf(buf, sizeof(buf), "%.9g", valid ? attn.scores(i, j) : 0.0);
        csv << "," << buf;
      }
      csv << "\n";
    }
    if (!csv) throw DataError("write failed for " + path.string());
  };

  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  ExportedAttention exported;
  exported.proposal_csv = out.string() + ".proposal.csv";
  write(exported.proposal_csv, fwd.proposal.attention, checkpoint.config.scales);
  if (fwd.clip) {
    exported.clip_csv = out.string() + ".clip.csv";
    write(*exported.clip_csv, fwd.clip->attention, {1});
  }
  return exported;
}

}  // namespace marn
