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

#include "marn/data_io.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "json.hpp"
#include "marn/errors.h"
#include "marn/rng.h"

namespace marn {
namespace {

constexpr char kFeatureMagic[8] = {'M', 'A', 'R', 'N', 'F', 'E', 'A', 'T'};
constexpr uint32_t kFeatureVersion = 1;
constexpr size_t kFeatureHeaderBytes = 8 + 4 + 4 + 4 + 4;

uint32_t ReadU32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

float ReadF32(const unsigned char* p) {
  const uint32_t bits = ReadU32(p);
  float value;
  std::memcpy(&value, &bits, sizeof(value));
  return value;
}

void AppendU32(std::string* out, uint32_t v) {
  for (int k = 0; k < 4; ++k) out->push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void AppendF32(std::string* out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, sizeof(bits));
  AppendU32(out, bits);
}

std::string ReadWholeFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

void WriteWholeFile(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace

RawVideoFeatures LoadFeatureFile(const std::filesystem::path& path) {
  const std::string bytes = ReadWholeFile(path);
  const auto fail = [&](const std::string& why) {
    return FormatError(path.string() + ": " + why);
  };
  if (bytes.size() < kFeatureHeaderBytes) throw fail("truncated header");
  if (std::memcmp(bytes.data(), kFeatureMagic, 8) != 0) throw fail("bad magic");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const uint32_t version = ReadU32(p + 8);
  if (version != kFeatureVersion) {
    throw fail("unsupported version " + std::to_string(version));
  }
  const uint32_t n_units = ReadU32(p + 12);
  const uint32_t dim = ReadU32(p + 16);
  const float unit_seconds = ReadF32(p + 20);
  if (n_units == 0 || dim == 0) throw fail("empty shape");
  if (!std::isfinite(unit_seconds) || unit_seconds <= 0.0f) {
    throw fail("unit_seconds must be positive");
  }
  const uint64_t count = static_cast<uint64_t>(n_units) * dim;
  const uint64_t expected = kFeatureHeaderBytes + 4 * count;
  if (bytes.size() != expected) {
    throw fail("shape " + std::to_string(n_units) + "x" + std::to_string(dim) +
               " needs " + std::to_string(count) + " values, file holds " +
               std::to_string((bytes.size() - kFeatureHeaderBytes) / 4.0));
  }
  RawVideoFeatures raw;
  raw.video_id = path.stem().string();
  raw.unit_seconds = unit_seconds;
  raw.data.resize(n_units, dim);
  const unsigned char* values = p + kFeatureHeaderBytes;
  for (uint32_t r = 0; r < n_units; ++r) {
    for (uint32_t c = 0; c < dim; ++c) {
      const float v = ReadF32(values + 4 * (static_cast<uint64_t>(r) * dim + c));
      if (!std::isfinite(v)) {
        throw fail("non-finite value at row " + std::to_string(r));
      }
      raw.data(r, c) = v;
    }
  }
  return raw;
}

void WriteFeatureFile(const std::filesystem::path& path,
                      const RawVideoFeatures& features) {
  std::string bytes(kFeatureMagic, kFeatureMagic + 8);
  AppendU32(&bytes, kFeatureVersion);
  AppendU32(&bytes, static_cast<uint32_t>(features.n_units()));
  AppendU32(&bytes, static_cast<uint32_t>(features.dim()));
  AppendF32(&bytes, static_cast<float>(features.unit_seconds));
  bytes.reserve(bytes.size() + 4 * features.data.size());
  for (Eigen::Index r = 0; r < features.data.rows(); ++r) {
    for (Eigen::Index c = 0; c < features.data.cols(); ++c) {
      AppendF32(&bytes, static_cast<float>(features.data(r, c)));
    }
  }
  WriteWholeFile(path, bytes);
}

VideoFeatures ResampleFeatures(const RawVideoFeatures& raw, int T) {
  const int n = raw.n_units();
  if (n < 1 || T < 1) throw DataError("resample needs n_units >= 1 and T >= 1");
  VideoFeatures out;
  out.video_id = raw.video_id;
  out.unit_seconds = n * raw.unit_seconds / T;
  out.data.resize(T, raw.dim());
  if (T == n) {
    out.data = raw.data;
  } else if (T < n) {
    for (int j = 0; j < T; ++j) {
      const int lo = static_cast<int>(static_cast<int64_t>(j) * n / T);
      const int hi = static_cast<int>(static_cast<int64_t>(j + 1) * n / T);
      out.data.row(j) = raw.data.middleRows(lo, hi - lo).colwise().mean();
    }
  } else {
    // Align first and last rows; interior rows interpolate linearly.
    for (int j = 0; j < T; ++j) {
      const double pos = static_cast<double>(j) * (n - 1) / (T - 1);
      const int lo = std::min(static_cast<int>(std::floor(pos)), n - 1);
      const int hi = std::min(lo + 1, n - 1);
      const double frac = pos - lo;
      out.data.row(j) = (1.0 - frac) * raw.data.row(lo) + frac * raw.data.row(hi);
    }
  }
  return out;
}

DatasetManifest LoadManifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  const std::filesystem::path base = path.parent_path();
  DatasetManifest manifest;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fail = [&](const std::string& why) {
      return FormatError(path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw fail(std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw fail("expected a JSON object");
    ManifestEntry entry;
    for (const char* key : {"video_id", "feature_path", "sentence"}) {
      if (!obj.contains(key) || !obj[key].is_string()) {
        throw fail(std::string("missing string field '") + key + "'");
      }
    }
    entry.video_id = obj["video_id"].get<std::string>();
    std::filesystem::path feature_path = obj["feature_path"].get<std::string>();
    if (feature_path.is_relative()) feature_path = base / feature_path;
    entry.feature_path = feature_path.string();
    entry.sentence = obj["sentence"].get<std::string>();
    if (obj.contains("gt") && !obj["gt"].is_null()) {
      const auto& gt = obj["gt"];
      Interval interval;
      if (gt.is_string()) {
        // "t_s t_e"
        std::istringstream fields(gt.get<std::string>());
        std::string rest;
        if (!(fields >> interval.start >> interval.end) || (fields >> rest)) {
          throw fail("gt string must hold two numbers");
        }
      } else if (gt.is_array() && gt.size() == 2 && gt[0].is_number() &&
                 gt[1].is_number()) {
        interval = {gt[0].get<double>(), gt[1].get<double>()};
      } else {
        throw fail("gt must be [t_s, t_e]");
      }
      if (!(interval.start >= 0.0 && interval.start < interval.end)) {
        throw fail("gt requires 0 <= t_s < t_e");
      }
      entry.gt = interval;
    }
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

void WriteManifest(const std::filesystem::path& path,
                   const DatasetManifest& manifest) {
  std::string text;
  for (const ManifestEntry& entry : manifest.entries) {
    nlohmann::ordered_json obj;
    obj["video_id"] = entry.video_id;
    obj["feature_path"] = entry.feature_path;
    obj["sentence"] = entry.sentence;
    if (entry.gt) obj["gt"] = {entry.gt->start, entry.gt->end};
    text += obj.dump();
    text += '\n';
  }
  WriteWholeFile(path, text);
}

std::vector<std::string> Tokenize(std::string_view sentence) {
  std::vector<std::string> tokens;
  std::string current;
  for (const char ch : sentence) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else if (!std::ispunct(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

EmbeddingTable LoadEmbeddingTable(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding table " + path.string());
  EmbeddingTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    std::vector<float> values;
    std::string token;
    while (fields >> token) {
      char* end = nullptr;
      const float v = std::strtof(token.c_str(), &end);
      if (end == token.c_str() || *end != '\0' || !std::isfinite(v)) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) +
                          ": bad value '" + token + "'");
      }
      values.push_back(v);
    }
    if (values.empty()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": word without vector");
    }
    if (table.dim == 0) table.dim = static_cast<int>(values.size());
    if (static_cast<int>(values.size()) != table.dim) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected " + std::to_string(table.dim) + " values");
    }
    table.vectors[word] = std::move(values);
  }
  return table;
}

void WriteEmbeddingTable(const std::filesystem::path& path,
                         const EmbeddingTable& table,
                         const std::vector<std::string>& order) {
  std::string text;
  char buf[32];
  for (const std::string& word : order) {
    const auto it = table.vectors.find(word);
    if (it == table.vectors.end()) continue;
    text += word;
    for (const float v : it->second) {
      std::snprintf(buf, sizeof(buf), " %.9g", static_cast<double>(v));
      text += buf;
    }
    text += '\n';
  }
  WriteWholeFile(path, text);
}

const char* const Vocabulary::kReservedTokens[kNumReserved] = {
    "<pad>", "<bos>", "<eos>", "<unk>"};

Vocabulary::Vocabulary(std::vector<std::string> tokens, Matrix embeddings)
    : tokens_(std::move(tokens)), embeddings_(std::move(embeddings)) {
  if (static_cast<int>(tokens_.size()) < kNumReserved) {
    throw DataError("vocabulary is missing reserved tokens");
  }
  for (int k = 0; k < kNumReserved; ++k) {
    if (tokens_[k] != kReservedTokens[k]) {
      throw DataError("vocabulary reserved token " + std::to_string(k) +
                      " must be " + kReservedTokens[k]);
    }
  }
  if (embeddings_.rows() != static_cast<Eigen::Index>(tokens_.size())) {
    throw DataError("vocabulary embedding rows do not match token count");
  }
  for (int id = 0; id < size(); ++id) {
    if (!index_.emplace(tokens_[id], id).second) {
      throw DataError("duplicate vocabulary token '" + tokens_[id] + "'");
    }
  }
}

int Vocabulary::Id(const std::string& word) const {
  const auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::Contains(const std::string& word) const {
  return index_.count(word) != 0;
}

Vocabulary BuildVocabulary(const DatasetManifest& manifest,
                           const EmbeddingTable& table, int min_count) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  if (manifest.entries.empty()) throw DataError("cannot build vocabulary from an empty manifest");
  if (table.dim < 1) throw DataError("embedding table is empty");
  std::map<std::string, int> counts;
  for (const ManifestEntry& entry : manifest.entries) {
    for (std::string& token : Tokenize(entry.sentence)) ++counts[token];
  }
  std::vector<std::pair<std::string, int>> kept;
  RowVector unk_sum = RowVector::Zero(table.dim);
  int dropped = 0;
  for (const auto& [word, count] : counts) {
    const auto it = table.vectors.find(word);
    if (it == table.vectors.end()) continue;
    if (count >= min_count) {
      kept.emplace_back(word, count);
    } else {
      for (int c = 0; c < table.dim; ++c) unk_sum(c) += it->second[c];
      ++dropped;
    }
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens(Vocabulary::kReservedTokens,
                                  Vocabulary::kReservedTokens + Vocabulary::kNumReserved);
  Matrix embeddings = Matrix::Zero(Vocabulary::kNumReserved + kept.size(), table.dim);
  if (dropped > 0) embeddings.row(Vocabulary::kUnk) = unk_sum / dropped;
  for (size_t k = 0; k < kept.size(); ++k) {
    tokens.push_back(kept[k].first);
    const std::vector<float>& v = table.vectors.at(kept[k].first);
    for (int c = 0; c < table.dim; ++c) {
      embeddings(Vocabulary::kNumReserved + k, c) = v[c];
    }
  }
  return Vocabulary(std::move(tokens), std::move(embeddings));
}

QueryTokens EncodeQuery(std::string_view sentence, const Vocabulary& vocab,
                        int max_len) {
  if (max_len < 2) throw ConfigError("max_query_len must be >= 2");
  const std::vector<std::string> words = Tokenize(sentence);
  if (words.empty()) {
    throw DataError("sentence is empty after tokenization: '" +
                    std::string(sentence) + "'");
  }
  QueryTokens query;
  query.ids.assign(max_len, Vocabulary::kPad);
  const int n_words = std::min<int>(static_cast<int>(words.size()), max_len - 1);
  for (int m = 0; m < n_words; ++m) query.ids[m] = vocab.Id(words[m]);
  query.ids[n_words] = Vocabulary::kEos;
  query.length = n_words + 1;
  query.embeddings.resize(query.length, vocab.embedding_dim());
  for (int m = 0; m < query.length; ++m) {
    query.embeddings.row(m) = vocab.embeddings().row(query.ids[m]);
  }
  query.bos = vocab.embeddings().row(Vocabulary::kBos);
  return query;
}

std::string DetokenizeQuery(const QueryTokens& query, const Vocabulary& vocab) {
  std::string text;
  for (int m = 0; m + 1 < query.length; ++m) {
    if (m > 0) text += ' ';
    text += vocab.token(query.ids[m]);
  }
  return text;
}

SyntheticDataset GenerateSyntheticDataset(const SyntheticSpec& spec) {
  constexpr int kPlanted = 3;
  if (spec.vocab_size < Vocabulary::kNumReserved + kPlanted) {
    throw ConfigError("synthetic vocab_size must leave room for 3 content tokens");
  }
  if (spec.d_v < spec.vocab_size) throw ConfigError("synthetic d_v must be >= vocab_size");
  if (spec.n_videos < 1 || spec.T < 1 || spec.embedding_dim < 1) {
    throw ConfigError("synthetic n_videos, T and embedding_dim must be >= 1");
  }
  Rng rng(spec.seed);
  SyntheticDataset out;

  std::vector<std::string> tokens(Vocabulary::kReservedTokens,
                                  Vocabulary::kReservedTokens + Vocabulary::kNumReserved);
  Matrix embeddings = Matrix::Zero(spec.vocab_size, spec.embedding_dim);
  out.table.dim = spec.embedding_dim;
  for (int id = Vocabulary::kNumReserved; id < spec.vocab_size; ++id) {
    char word[16];
    std::snprintf(word, sizeof(word), "w%02d", id);
    tokens.emplace_back(word);
    std::vector<float> vec(spec.embedding_dim);
    for (int c = 0; c < spec.embedding_dim; ++c) {
      vec[c] = static_cast<float>(rng.Normal(0.0, 0.3));
      embeddings(id, c) = vec[c];
    }
    out.table.vectors.emplace(word, std::move(vec));
  }
  out.vocab = Vocabulary(tokens, std::move(embeddings));

  const int min_len = std::max(1, spec.T / 8);
  const int max_len = std::max(min_len, spec.T / 4);
  std::vector<int> content(spec.vocab_size - Vocabulary::kNumReserved);
  for (size_t k = 0; k < content.size(); ++k) {
    content[k] = Vocabulary::kNumReserved + static_cast<int>(k);
  }
  for (int v = 0; v < spec.n_videos; ++v) {
    char video_id[32];
    std::snprintf(video_id, sizeof(video_id), "synth_%04d", v);
    const int length = rng.UniformInt(min_len, max_len);
    const int start = rng.UniformInt(0, spec.T - length);
    // Partial Fisher-Yates for 3 distinct tokens.
    for (int k = 0; k < kPlanted; ++k) {
      const int j = rng.UniformInt(k, static_cast<int>(content.size()) - 1);
      std::swap(content[k], content[j]);
    }
    std::vector<int> planted(content.begin(), content.begin() + kPlanted);
    std::sort(planted.begin(), planted.end());

    RawVideoFeatures features;
    features.video_id = video_id;
    features.unit_seconds = spec.unit_seconds;
    features.data.resize(spec.T, spec.d_v);
    for (int t = 0; t < spec.T; ++t) {
      const bool in_segment = t >= start && t < start + length;
      for (int c = 0; c < spec.d_v; ++c) {
        double value = rng.Normal(0.0, spec.noise_stddev);
        if (in_segment && std::find(planted.begin(), planted.end(), c) != planted.end()) {
          value += 1.0;
        }
        features.data(t, c) = static_cast<float>(value);
      }
    }

    ManifestEntry entry;
    entry.video_id = video_id;
    entry.feature_path = std::string("features/") + video_id + ".feat";
    for (size_t k = 0; k < planted.size(); ++k) {
      if (k > 0) entry.sentence += ' ';
      entry.sentence += out.vocab.token(planted[k]);
    }
    entry.gt = Interval{start * spec.unit_seconds, (start + length) * spec.unit_seconds};
    out.manifest.entries.push_back(std::move(entry));
    out.features.push_back(std::move(features));
    out.planted_tokens.push_back(std::move(planted));
  }
  return out;
}

DatasetManifest WriteSyntheticDataset(const SyntheticDataset& dataset,
                                      const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "features");
  for (size_t v = 0; v < dataset.features.size(); ++v) {
    WriteFeatureFile(dir / dataset.manifest.entries[v].feature_path, dataset.features[v]);
  }
  WriteManifest(dir / "manifest.jsonl", dataset.manifest);
  WriteEmbeddingTable(dir / "embeddings.txt", dataset.table, dataset.vocab.tokens());
  DatasetManifest resolved = dataset.manifest;
  for (ManifestEntry& entry : resolved.entries) {
    entry.feature_path = (dir / entry.feature_path).string();
  }
  return resolved;
}

std::pair<DatasetManifest, DatasetManifest> SplitManifest(
    const DatasetManifest& manifest, size_t first) {
  first = std::min(first, manifest.entries.size());
  DatasetManifest a, b;
  a.entries.assign(manifest.entries.begin(), manifest.entries.begin() + first);
  b.entries.assign(manifest.entries.begin() + first, manifest.entries.end());
  return {std::move(a), std::move(b)};
}

}  // namespace marn
