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

// Ingestion of precomputed video features, sentence manifests and word
// embeddings, plus a deterministic synthetic dataset generator.
//
// Feature file layout (little-endian):
//   magic        "MARNFEAT" (8 bytes)
//   version      u32 = 1
//   n_units      u32
//   dim          u32
//   unit_seconds f32
//   data         n_units * dim f32, row-major

#ifndef MARN_DATA_IO_H_
#define MARN_DATA_IO_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "marn/tensor.h"

namespace marn {

struct RawVideoFeatures {
  std::string video_id;
  Matrix data;  // n_units x dim
  double unit_seconds = 1.0;

  int n_units() const { return static_cast<int>(data.rows()); }
  int dim() const { return static_cast<int>(data.cols()); }
};

// Features resampled to the model's temporal length T.
struct VideoFeatures {
  std::string video_id;
  Matrix data;  // T x dim
  double unit_seconds = 1.0;

  int T() const { return static_cast<int>(data.rows()); }
  int dim() const { return static_cast<int>(data.cols()); }
};

RawVideoFeatures LoadFeatureFile(const std::filesystem::path& path);
void WriteFeatureFile(const std::filesystem::path& path,
                      const RawVideoFeatures& features);

// Contiguous bin means when T <= n_units, linear interpolation otherwise.
VideoFeatures ResampleFeatures(const RawVideoFeatures& raw, int T);

struct Interval {
  double start = 0.0;
  double end = 0.0;
  double length() const { return end - start; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct ManifestEntry {
  std::string video_id;
  std::string feature_path;  // resolved against the manifest directory
  std::string sentence;
  std::optional<Interval> gt;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
};

DatasetManifest LoadManifest(const std::filesystem::path& path);
void WriteManifest(const std::filesystem::path& path,
                   const DatasetManifest& manifest);

// Lowercased, whitespace-split tokens with punctuation removed.
std::vector<std::string> Tokenize(std::string_view sentence);

struct EmbeddingTable {
  int dim = 0;
  std::unordered_map<std::string, std::vector<float>> vectors;
};

EmbeddingTable LoadEmbeddingTable(const std::filesystem::path& path);
void WriteEmbeddingTable(const std::filesystem::path& path,
                         const EmbeddingTable& table,
                         const std::vector<std::string>& order);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumReserved = 4;
  static const char* const kReservedTokens[kNumReserved];

  Vocabulary() = default;
  // tokens must start with the reserved tokens in id order.
  Vocabulary(std::vector<std::string> tokens, Matrix embeddings);

  int size() const { return static_cast<int>(tokens_.size()); }
  int embedding_dim() const { return static_cast<int>(embeddings_.cols()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const Matrix& embeddings() const { return embeddings_; }
  const std::string& token(int id) const { return tokens_.at(id); }

  // UNK when the word is not in the vocabulary.
  int Id(const std::string& word) const;
  bool Contains(const std::string& word) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  Matrix embeddings_;
};

Vocabulary BuildVocabulary(const DatasetManifest& manifest,
                           const EmbeddingTable& table, int min_count);

struct QueryTokens {
  std::vector<int> ids;  // padded to max_len
  int length = 0;        // M, real tokens plus EOS
  Matrix embeddings;     // M x d_w
  RowVector bos;         // decoder input before the first word

  int max_len() const { return static_cast<int>(ids.size()); }
};

inline constexpr int kDefaultMaxQueryLen = 20;

QueryTokens EncodeQuery(std::string_view sentence, const Vocabulary& vocab,
                        int max_len = kDefaultMaxQueryLen);

// Space-joined tokens of an encoded query, without EOS and PAD.
std::string DetokenizeQuery(const QueryTokens& query, const Vocabulary& vocab);

struct SyntheticSpec {
  int n_videos = 200;
  int T = 32;
  int d_v = 256;
  int vocab_size = 30;  // including the reserved tokens
  int embedding_dim = 300;
  uint64_t seed = 7;
  double unit_seconds = 1.0;
  double noise_stddev = 0.1;
};

struct SyntheticDataset {
  DatasetManifest manifest;  // feature_path values are relative file names
  std::vector<RawVideoFeatures> features;
  Vocabulary vocab;
  EmbeddingTable table;
  std::vector<std::vector<int>> planted_tokens;  // vocabulary ids per video
};

// Each video has background noise rows and one planted segment carrying a
// bag-of-words signature of its 3-token sentence: the vocabulary id k of
// each planted token adds 1.0 to feature coordinate k.
SyntheticDataset GenerateSyntheticDataset(const SyntheticSpec& spec);

// Writes features/<video_id>.feat, manifest.jsonl and embeddings.txt under
// dir and returns the manifest with resolved feature paths.
DatasetManifest WriteSyntheticDataset(const SyntheticDataset& dataset,
                                      const std::filesystem::path& dir);

// Splits entries [0, first) and [first, size).
std::pair<DatasetManifest, DatasetManifest> SplitManifest(
    const DatasetManifest& manifest, size_t first);

}  // namespace marn

#endif  // MARN_DATA_IO_H_
