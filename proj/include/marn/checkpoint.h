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

// Checkpoint container (little-endian):
//   magic "MARNCKPT", u32 version = 1
//   u32 n, n bytes of JSON: {"model": <ModelConfig>, "vocab": [tokens...]}
//   u32 tensor count, then per tensor:
//     u32 name length, name, u32 rows, u32 cols, rows * cols f32 row-major
// The vocabulary embeddings travel as the tensor "vocab.embeddings"; every
// other tensor is a model parameter.

#ifndef MARN_CHECKPOINT_H_
#define MARN_CHECKPOINT_H_

#include <filesystem>

#include "marn/data_io.h"
#include "marn/model.h"
#include "marn/params.h"

namespace marn {

struct Checkpoint {
  ModelConfig config;
  Vocabulary vocab;
  ParamSet params;
};

// Parameters are stored as float32.
void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace marn

#endif  // MARN_CHECKPOINT_H_
