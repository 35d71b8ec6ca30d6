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

#include "pillardet/weights.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <iterator>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace pillardet
{

namespace
{
constexpr const char * kFormat = "pillardet-weights";

std::string shape_str(const std::vector<std::int64_t> & shape)
{
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "," : "") << shape[i];
  }
  os << ']';
  return os.str();
}
}  // namespace

std::int64_t Tensor::numel() const
{
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

void WeightStore::put(const std::string & name, Tensor tensor)
{
  if (tensor.numel() != static_cast<std::int64_t>(tensor.data.size())) {
    throw std::invalid_argument("tensor '" + name + "' data does not match its shape");
  }
  tensors_[name] = std::move(tensor);
}

bool WeightStore::contains(const std::string & name) const { return tensors_.count(name) > 0; }

const Tensor & WeightStore::get(
  const std::string & name, const std::vector<std::int64_t> & shape) const
{
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) {
    throw std::runtime_error("weight '" + name + "' missing from container");
  }
  if (it->second.shape != shape) {
    throw std::runtime_error(
      "weight '" + name + "' has shape " + shape_str(it->second.shape) + ", expected " +
      shape_str(shape));
  }
  return it->second;
}

void WeightStore::save(const std::string & path) const
{
  static_assert(std::endian::native == std::endian::little, "weight files are little-endian");
  nlohmann::json manifest;
  manifest["format"] = kFormat;
  manifest["version"] = 1;
  manifest["tensors"] = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto & [name, t] : tensors_) {
    manifest["tensors"][name] = {{"shape", t.shape}, {"dtype", "float32"}, {"offset", offset}};
    offset += t.data.size() * sizeof(float);
  }
  const std::string text = manifest.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write weights: " + path);
  }
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char *>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto & [name, t] : tensors_) {
    out.write(
      reinterpret_cast<const char *>(t.data.data()),
      static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
}

WeightStore WeightStore::load(const std::string & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open weights: " + path);
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char *>(&len), sizeof(len));
  if (!in || len > (std::uint64_t{1} << 32)) {
    throw std::runtime_error("corrupt weight header: " + path);
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  std::vector<char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto manifest = nlohmann::json::parse(text);
  if (manifest.value("format", "") != kFormat) {
    throw std::runtime_error("not a pillardet weight container: " + path);
  }
  WeightStore store;
  for (const auto & [name, entry] : manifest.at("tensors").items()) {
    if (entry.at("dtype") != "float32") {
      throw std::runtime_error("weight '" + name + "' has unsupported dtype");
    }
    Tensor t;
    t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const auto n = static_cast<std::uint64_t>(t.numel());
    if (offset + n * sizeof(float) > blob.size()) {
      throw std::runtime_error("weight '" + name + "' extends past end of file");
    }
    t.data.resize(n);
    std::memcpy(t.data.data(), blob.data() + offset, n * sizeof(float));
    store.put(name, std::move(t));
  }
  return store;
}

}  // namespace pillardet
