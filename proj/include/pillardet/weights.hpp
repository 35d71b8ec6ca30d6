// Copyright 2026 The pillardet Authors
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

#ifndef PILLARDET__WEIGHTS_HPP_
#define PILLARDET__WEIGHTS_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pillardet
{

struct Tensor
{
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  std::int64_t numel() const;
};

/// Named float32 tensors.
///
/// On disk: an 8-byte little-endian manifest length, a JSON manifest
/// `{"format": "pillardet-weights", "version": 1, "tensors": {name: {"shape": [...],
/// "dtype": "float32", "offset": bytes}}}`, then the raw little-endian tensor data. Offsets
/// are relative to the first byte after the manifest.
class WeightStore
{
public:
  void put(const std::string & name, Tensor tensor);
  bool contains(const std::string & name) const;
  // Throws when the tensor is missing or its shape differs from `shape`.
  const Tensor & get(const std::string & name, const std::vector<std::int64_t> & shape) const;
  const std::map<std::string, Tensor> & tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }

  void save(const std::string & path) const;
  static WeightStore load(const std::string & path);

private:
  std::map<std::string, Tensor> tensors_;
};

}  // namespace pillardet

#endif  // PILLARDET__WEIGHTS_HPP_
