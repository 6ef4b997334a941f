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

#ifndef MARN_PARAMS_H_
#define MARN_PARAMS_H_

#include <cstdint>
#include <map>
#include <string>

#include "marn/tensor.h"

namespace marn {

// Named trainable tensors, iterated in name order. Gradients and optimizer
// moments use the same container with identical names and shapes.
class ParamSet {
 public:
  // Adds a zero tensor; throws if the name exists.
  Matrix& Add(const std::string& name, int rows, int cols);

  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  std::map<std::string, Matrix>& tensors() { return tensors_; }
  const std::map<std::string, Matrix>& tensors() const { return tensors_; }
  size_t size() const { return tensors_.size(); }
  int64_t NumScalars() const;

  ParamSet ZerosLike() const;
  void SetZero();
  void AddScaled(const ParamSet& other, double alpha);
  void Scale(double alpha);
  double SquaredNorm() const;
  bool AllFinite() const;
  // Rounds every value to the nearest float32.
  void RoundToFloat();

 private:
  std::map<std::string, Matrix> tensors_;
};

}  // namespace marn

#endif  // MARN_PARAMS_H_
