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

#include "marn/checkpoint.h"

#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "marn/errors.h"
#include "marn/train_config.h"

namespace marn {
namespace {

constexpr char kMagic[8] = {'M', 'A', 'R', 'N', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;
constexpr const char* kVocabTensor = "vocab.embeddings";

void PutU32(std::string* out, uint32_t v) {
  for (int k = 0; k < 4; ++k) out->push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void PutTensor(std::string* out, const std::string& name, const Matrix& m) {
  PutU32(out, static_cast<uint32_t>(name.size()));
  out->append(name);
  PutU32(out, static_cast<uint32_t>(m.rows()));
  PutU32(out, static_cast<uint32_t>(m.cols()));
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    const float f = static_cast<float>(m.data()[k]);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    PutU32(out, bits);
  }
}

class Reader {
 public:
  Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  uint32_t U32() {
    Need(4);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
    pos_ += 4;
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
  }

  std::string Bytes(size_t n) {
    Need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  float F32() {
    const uint32_t bits = U32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }

  bool done() const { return pos_ == bytes_.size(); }

  FormatError Fail(const std::string& why) const {
    return FormatError(path_ + ": " + why);
  }

 private:
  void Need(size_t n) const {
    if (pos_ + n > bytes_.size()) throw Fail("truncated checkpoint");
  }

  std::string bytes_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  nlohmann::ordered_json header;
  header["model"] = ToJson(checkpoint.config);
  header["vocab"] = checkpoint.vocab.tokens();
  const std::string header_text = header.dump();

  std::string bytes(kMagic, kMagic + 8);
  PutU32(&bytes, kVersion);
  PutU32(&bytes, static_cast<uint32_t>(header_text.size()));
  bytes += header_text;
  PutU32(&bytes, static_cast<uint32_t>(checkpoint.params.size() + 1));
  PutTensor(&bytes, kVocabTensor, checkpoint.vocab.embeddings());
  for (const auto& [name, tensor] : checkpoint.params.tensors()) PutTensor(&bytes, name, tensor);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  Reader reader(std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()),
                path.string());
  if (reader.Bytes(8) != std::string(kMagic, 8)) throw reader.Fail("bad magic");
  if (reader.U32() != kVersion) throw reader.Fail("unsupported checkpoint version");
  const std::string header_text = reader.Bytes(reader.U32());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw reader.Fail(std::string("bad header: ") + e.what());
  }
  Checkpoint checkpoint;
  checkpoint.config = ModelConfigFromJson(header.at("model"));
  const auto tokens = header.at("vocab").get<std::vector<std::string>>();

  const uint32_t count = reader.U32();
  Matrix vocab_embeddings;
  bool have_vocab = false;
  for (uint32_t k = 0; k < count; ++k) {
    const std::string name = reader.Bytes(reader.U32());
    const uint32_t rows = reader.U32();
    const uint32_t cols = reader.U32();
    Matrix m(rows, cols);
    for (Eigen::Index e = 0; e < m.size(); ++e) m.data()[e] = reader.F32();
    if (!m.allFinite()) throw reader.Fail("non-finite values in tensor " + name);
    if (name == kVocabTensor) {
      vocab_embeddings = std::move(m);
      have_vocab = true;
    } else {
      checkpoint.params.Add(name, rows, cols) = std::move(m);
    }
  }
  if (!reader.done()) throw reader.Fail("trailing bytes");
  if (!have_vocab) throw reader.Fail("missing vocabulary embeddings");
  checkpoint.vocab = Vocabulary(tokens, std::move(vocab_embeddings));

  // Shapes must match the enumeration implied by the config.
  const ParamSet expected = MarnModel(checkpoint.config).InitParams(0);
  for (const auto& [name, tensor] : expected.tensors()) {
    if (!checkpoint.params.contains(name)) throw reader.Fail("missing tensor " + name);
    const Matrix& got = checkpoint.params.at(name);
    if (got.rows() != tensor.rows() || got.cols() != tensor.cols()) {
      throw reader.Fail("tensor " + name + " has the wrong shape");
    }
  }
  if (expected.size() != checkpoint.params.size()) throw reader.Fail("unexpected extra tensors");
  return checkpoint;
}

}  // namespace marn
