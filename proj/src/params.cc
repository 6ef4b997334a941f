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

#include "marn/params.h"

#include <stdexcept>

namespace marn {

Matrix& ParamSet::Add(const std::string& name, int rows, int cols) {
  auto [it, inserted] = tensors_.emplace(name, Matrix::Zero(rows, cols));
  if (!inserted) throw std::logic_error("duplicate parameter " + name);
  return it->second;
}

Matrix& ParamSet::at(const std::string& name) {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("no parameter " + name);
  return it->second;
}

const Matrix& ParamSet::at(const std::string& name) const {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("no parameter " + name);
  return it->second;
}

int64_t ParamSet::NumScalars() const {
  int64_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

ParamSet ParamSet::ZerosLike() const {
  ParamSet out;
  for (const auto& [name, t] : tensors_) {
    out.tensors_.emplace(name, Matrix::Zero(t.rows(), t.cols()));
  }
  return out;
}

void ParamSet::SetZero() {
  for (auto& [name, t] : tensors_) t.setZero();
}

void ParamSet::AddScaled(const ParamSet& other, double alpha) {
  for (auto& [name, t] : tensors_) t += alpha * other.at(name);
}

void ParamSet::Scale(double alpha) {
  for (auto& [name, t] : tensors_) t *= alpha;
}

double ParamSet::SquaredNorm() const {
  double sum = 0.0;
  for (const auto& [name, t] : tensors_) sum += t.squaredNorm();
  return sum;
}

bool ParamSet::AllFinite() const {
  for (const auto& [name, t] : tensors_) {
    if (!t.allFinite()) return false;
  }
  return true;
}

void ParamSet::RoundToFloat() {
  for (auto& [name, t] : tensors_) {
    t = t.cast<float>().cast<double>();
  }
}

}  // namespace marn
