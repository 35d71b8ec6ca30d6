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

#include "pillardet/pillars.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace pillardet
{

namespace
{

int cells_along(double extent, double size)
{
  // Absorbs representation error such as 108 / 0.075 = 1440.0000000000002.
  const double n = extent / size;
  return static_cast<int>(std::ceil(n - 1e-6));
}

int div_ceil(int a, int b) { return (a + b - 1) / b; }

}  // namespace

PointCloud read_point_cloud(const std::string & path, int channels)
{
  static_assert(std::endian::native == std::endian::little, "point files are little-endian");
  if (channels != 4 && channels != 5) {
    throw std::invalid_argument("point cloud channel count must be 4 or 5");
  }
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) {
    throw std::runtime_error("cannot open point cloud: " + path);
  }
  const auto bytes = static_cast<std::size_t>(in.tellg());
  const std::size_t row = sizeof(float) * static_cast<std::size_t>(channels);
  if (bytes % row != 0) {
    throw std::runtime_error(
      "point cloud size " + std::to_string(bytes) + " is not a multiple of " +
      std::to_string(channels) + " float32 channels: " + path);
  }
  std::vector<float> raw(bytes / sizeof(float));
  in.seekg(0);
  in.read(reinterpret_cast<char *>(raw.data()), static_cast<std::streamsize>(bytes));
  if (!in) {
    throw std::runtime_error("short read on point cloud: " + path);
  }
  PointCloud cloud;
  const std::size_t n = bytes / row;
  cloud.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float * r = raw.data() + i * static_cast<std::size_t>(channels);
    cloud.points[i] = {r[0], r[1], r[2], r[3], channels == 5 ? r[4] : 0.0f};
  }
  return cloud;
}

void write_point_cloud(const std::string & path, const PointCloud & cloud, int channels)
{
  if (channels != 4 && channels != 5) {
    throw std::invalid_argument("point cloud channel count must be 4 or 5");
  }
  std::vector<float> raw;
  raw.reserve(cloud.size() * static_cast<std::size_t>(channels));
  for (const auto & p : cloud.points) {
    raw.insert(raw.end(), {p.x, p.y, p.z, p.intensity});
    if (channels == 5) {
      raw.push_back(p.dt);
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write point cloud: " + path);
  }
  out.write(
    reinterpret_cast<const char *>(raw.data()),
    static_cast<std::streamsize>(raw.size() * sizeof(float)));
}

int GridSpec::cols() const { return cells_along(x.extent(), sx); }
int GridSpec::rows() const { return cells_along(y.extent(), sy); }
int GridSpec::cols(int stride) const { return div_ceil(cols(), stride); }
int GridSpec::rows(int stride) const { return div_ceil(rows(), stride); }

void GridSpec::validate() const
{
  const auto finite = [](double v) { return std::isfinite(v); };
  if (!(finite(x.min) && finite(x.max) && finite(y.min) && finite(y.max) && finite(z.min) &&
        finite(z.max) && finite(sx) && finite(sy))) {
    throw std::invalid_argument("grid spec has non-finite values");
  }
  if (!(x.max > x.min && y.max > y.min && z.max > z.min)) {
    throw std::invalid_argument("grid spec ranges must satisfy max > min");
  }
  if (!(sx > 0.0 && sy > 0.0)) {
    throw std::invalid_argument("grid spec pillar size must be positive");
  }
  if (cols() < 1 || rows() < 1) {
    throw std::invalid_argument("grid spec yields an empty grid");
  }
}

GridSpec GridSpec::with_pillar(double size) const
{
  GridSpec g = *this;
  g.sx = size;
  g.sy = size;
  return g;
}

GridSpec nuscenes_grid() { return GridSpec{}; }

SparseGrid2D::SparseGrid2D(GridSpec spec, int stride, int channels)
: spec_(spec), stride_(stride), channels_(channels)
{
  if (stride < 1 || channels < 0) {
    throw std::invalid_argument("sparse grid needs stride >= 1 and channels >= 0");
  }
}

SparseGrid2D::SparseGrid2D(
  GridSpec spec, int stride, int channels, std::vector<Coord> coords, std::vector<float> features)
: SparseGrid2D(spec, stride, channels)
{
  const auto width = static_cast<std::size_t>(channels);
  if (features.size() != coords.size() * width) {
    throw std::invalid_argument("sparse grid feature buffer does not match sites * channels");
  }
  std::vector<std::size_t> order(coords.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return coords[a] < coords[b];
  });
  coords_.reserve(coords.size());
  features_.reserve(features.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Coord c = coords[order[k]];
    if (!in_bounds(c)) {
      throw std::invalid_argument("sparse grid coordinate out of bounds");
    }
    if (!coords_.empty() && coords_.back() == c) {
      throw std::invalid_argument("sparse grid has duplicate coordinates");
    }
    coords_.push_back(c);
    const auto src = features.begin() + static_cast<std::ptrdiff_t>(order[k] * width);
    features_.insert(features_.end(), src, src + static_cast<std::ptrdiff_t>(width));
  }
  rebuild_index();
}

std::span<const float> SparseGrid2D::features(std::size_t i) const
{
  return std::span<const float>(features_).subspan(
    i * static_cast<std::size_t>(channels_), static_cast<std::size_t>(channels_));
}

std::span<float> SparseGrid2D::features(std::size_t i)
{
  return std::span<float>(features_).subspan(
    i * static_cast<std::size_t>(channels_), static_cast<std::size_t>(channels_));
}

std::int64_t SparseGrid2D::find(Coord c) const
{
  const auto it = index_.find(pack(c));
  return it == index_.end() ? -1 : it->second;
}

bool SparseGrid2D::in_bounds(Coord c) const
{
  return c.row >= 0 && c.col >= 0 && c.row < rows() && c.col < cols();
}

SparseGrid2D SparseGrid2D::with_features(int channels, std::vector<float> features) const
{
  if (features.size() != coords_.size() * static_cast<std::size_t>(channels)) {
    throw std::invalid_argument("feature buffer does not match sites * channels");
  }
  SparseGrid2D out(spec_, stride_, channels);
  out.coords_ = coords_;
  out.features_ = std::move(features);
  out.index_ = index_;
  return out;
}

bool operator==(const SparseGrid2D & a, const SparseGrid2D & b)
{
  if (a.stride_ != b.stride_ || a.channels_ != b.channels_ || a.coords_ != b.coords_ ||
      a.features_.size() != b.features_.size()) {
    return false;
  }
  // bitwise comparison, so that -0.0 != 0.0 and NaN payloads are compared exactly
  return std::memcmp(
           a.features_.data(), b.features_.data(), a.features_.size() * sizeof(float)) == 0;
}

void SparseGrid2D::rebuild_index()
{
  index_.clear();
  index_.reserve(coords_.size());
  for (std::size_t i = 0; i < coords_.size(); ++i) {
    index_.emplace(pack(coords_[i]), static_cast<std::int64_t>(i));
  }
}

void PillarEncoderParams::validate() const
{
  if (out_channels < 1) {
    throw std::invalid_argument("pillar encoder needs at least one output channel");
  }
  if (weight.size() != static_cast<std::size_t>(out_channels * kPointFeatureWidth) ||
      bias.size() != static_cast<std::size_t>(out_channels)) {
    throw std::invalid_argument("pillar encoder weight/bias shape mismatch");
  }
  const auto finite = [](float v) { return std::isfinite(v); };
  if (!std::all_of(weight.begin(), weight.end(), finite) ||
      !std::all_of(bias.begin(), bias.end(), finite)) {
    throw std::invalid_argument("pillar encoder parameters must be finite");
  }
}

std::optional<Coord> pillar_of(const Point & p, const GridSpec & spec)
{
  const double x = p.x;
  const double y = p.y;
  const double z = p.z;
  if (!(x >= spec.x.min && x < spec.x.max && y >= spec.y.min && y < spec.y.max &&
        z >= spec.z.min && z < spec.z.max)) {
    return std::nullopt;
  }
  const auto col = static_cast<std::int64_t>(std::floor((x - spec.x.min) / spec.sx));
  const auto row = static_cast<std::int64_t>(std::floor((y - spec.y.min) / spec.sy));
  if (col < 0 || row < 0 || col >= spec.cols() || row >= spec.rows()) {
    return std::nullopt;
  }
  return Coord{static_cast<std::int32_t>(row), static_cast<std::int32_t>(col)};
}

PillarAssignment assign_pillars(const PointCloud & cloud, const GridSpec & spec)
{
  spec.validate();
  PillarAssignment out;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (const auto cell = pillar_of(cloud.points[i], spec)) {
      out[*cell].push_back(i);
    }
  }
  return out;
}

namespace
{

auto point_key(const Point & p) { return std::tie(p.x, p.y, p.z, p.intensity, p.dt); }

std::vector<PointFeature> augment_pillar(
  const PointCloud & cloud, Coord cell, const std::vector<std::size_t> & members,
  const GridSpec & spec)
{
  // The mean is summed in a canonical point order so it does not depend on input order.
  std::vector<std::size_t> sorted = members;
  std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
    return point_key(cloud.points[a]) < point_key(cloud.points[b]);
  });
  double mx = 0.0, my = 0.0, mz = 0.0;
  for (const auto i : sorted) {
    mx += cloud.points[i].x;
    my += cloud.points[i].y;
    mz += cloud.points[i].z;
  }
  const auto n = static_cast<double>(sorted.size());
  mx /= n;
  my /= n;
  mz /= n;
  const double xc = spec.x.min + (cell.col + 0.5) * spec.sx;
  const double yc = spec.y.min + (cell.row + 0.5) * spec.sy;

  std::vector<PointFeature> out;
  out.reserve(members.size());
  for (const auto i : members) {
    const auto & p = cloud.points[i];
    out.push_back({p.x, p.y, p.z, p.intensity, p.dt, p.x - mx, p.y - my, p.z - mz, p.x - xc,
                   p.y - yc});
  }
  return out;
}

}  // namespace

std::map<Coord, std::vector<PointFeature>> augment_points(
  const PointCloud & cloud, const PillarAssignment & assignment, const GridSpec & spec)
{
  std::map<Coord, std::vector<PointFeature>> out;
  for (const auto & [cell, members] : assignment) {
    out.emplace(cell, augment_pillar(cloud, cell, members, spec));
  }
  return out;
}

SparseGrid2D pillarize(
  const PointCloud & cloud, const GridSpec & spec, const PillarEncoderParams & params,
  const PillarizeOptions & options)
{
  params.validate();
  PillarAssignment assignment = assign_pillars(cloud, spec);
  if (options.max_points_per_pillar > 0) {
    for (auto & [cell, members] : assignment) {
      if (members.size() > options.max_points_per_pillar) {
        members.resize(options.max_points_per_pillar);
      }
    }
  }
  if (options.max_pillars > 0 && assignment.size() > options.max_pillars) {
    auto it = assignment.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(options.max_pillars));
    assignment.erase(it, assignment.end());
  }

  const auto width = static_cast<std::size_t>(params.out_channels);
  std::vector<Coord> coords;
  std::vector<float> features;
  coords.reserve(assignment.size());
  features.reserve(assignment.size() * width);
  for (const auto & [cell, members] : assignment) {
    const auto aug = augment_pillar(cloud, cell, members, spec);
    // relu output is >= 0, so 0 is the identity of the max
    std::vector<float> pooled(width, 0.0f);
    for (const auto & f : aug) {
      for (std::size_t o = 0; o < width; ++o) {
        double acc = params.bias[o];
        const float * w = params.weight.data() + o * kPointFeatureWidth;
        for (int k = 0; k < kPointFeatureWidth; ++k) {
          acc += static_cast<double>(w[k]) * f[static_cast<std::size_t>(k)];
        }
        pooled[o] = std::max(pooled[o], static_cast<float>(std::max(acc, 0.0)));
      }
    }
    coords.push_back(cell);
    features.insert(features.end(), pooled.begin(), pooled.end());
  }
  return SparseGrid2D(spec, 1, params.out_channels, std::move(coords), std::move(features));
}

}  // namespace pillardet
