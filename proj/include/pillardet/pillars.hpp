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

#ifndef PILLARDET__PILLARS_HPP_
#define PILLARDET__PILLARS_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace pillardet
{

struct Point
{
  float x{};
  float y{};
  float z{};
  float intensity{};
  float dt{};  // seconds relative to the newest sweep
};

struct PointCloud
{
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

// Little-endian float32 rows of 4 (x, y, z, intensity) or 5 (.., dt) channels. The channel
// count is always supplied by the caller; a size that is not a multiple of the row width
// is an error.
PointCloud read_point_cloud(const std::string & path, int channels);
void write_point_cloud(const std::string & path, const PointCloud & cloud, int channels);

struct Range
{
  double min{};
  double max{};

  double extent() const { return max - min; }
};

struct GridSpec
{
  Range x{-54.0, 54.0};
  Range y{-54.0, 54.0};
  Range z{-5.0, 3.0};
  double sx{0.075};
  double sy{0.075};

  // Number of pillars along x (columns) and y (rows) at stride 1.
  int cols() const;
  int rows() const;
  // Dimensions after downsampling by `stride`.
  int cols(int stride) const;
  int rows(int stride) const;

  void validate() const;
  GridSpec with_pillar(double size) const;
};

GridSpec nuscenes_grid();

struct Coord
{
  std::int32_t row{};
  std::int32_t col{};

  friend bool operator==(const Coord &, const Coord &) = default;
  friend auto operator<=>(const Coord &, const Coord &) = default;
};

inline std::uint64_t pack(Coord c)
{
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.row)) << 32) |
         static_cast<std::uint32_t>(c.col);
}

/// Sparse set of active pillar sites with a fixed-width float feature vector per site.
///
/// Sites are kept in row-major order and indexed by a hash of the packed coordinate.
/// `stride` is the downsampling factor relative to the grid spec's pillar size.
class SparseGrid2D
{
public:
  SparseGrid2D() = default;
  SparseGrid2D(GridSpec spec, int stride, int channels);

  // Sorts the sites row-major. Throws on duplicates, out-of-range coordinates or a
  // feature buffer whose size is not sites * channels.
  SparseGrid2D(
    GridSpec spec, int stride, int channels, std::vector<Coord> coords,
    std::vector<float> features);

  const GridSpec & spec() const { return spec_; }
  int stride() const { return stride_; }
  int channels() const { return channels_; }
  int rows() const { return spec_.rows(stride_); }
  int cols() const { return spec_.cols(stride_); }
  std::size_t size() const { return coords_.size(); }
  bool empty() const { return coords_.empty(); }

  std::span<const Coord> coords() const { return coords_; }
  const Coord & coord(std::size_t i) const { return coords_[i]; }
  std::span<const float> features(std::size_t i) const;
  std::span<float> features(std::size_t i);
  std::span<const float> feature_data() const { return features_; }
  std::span<float> feature_data() { return features_; }

  // Index of the site at `c`, or -1.
  std::int64_t find(Coord c) const;
  bool in_bounds(Coord c) const;

  // Same sites, new feature buffer (sites * channels floats).
  SparseGrid2D with_features(int channels, std::vector<float> features) const;

  friend bool operator==(const SparseGrid2D & a, const SparseGrid2D & b);

private:
  void rebuild_index();

  GridSpec spec_{};
  int stride_{1};
  int channels_{0};
  std::vector<Coord> coords_;
  std::vector<float> features_;
  std::unordered_map<std::uint64_t, std::int64_t> index_;
};

// Per-point transform of the pillar encoder: out = relu(weight * aug + bias).
inline constexpr int kPointFeatureWidth = 10;

struct PillarEncoderParams
{
  int out_channels{0};
  std::vector<float> weight;  // out_channels x 10, row-major
  std::vector<float> bias;    // out_channels

  void validate() const;
};

using PointFeature = std::array<double, kPointFeatureWidth>;
using PillarAssignment = std::map<Coord, std::vector<std::size_t>>;

// Pillar cell of a point, or nothing when it falls outside the (right-open) range.
std::optional<Coord> pillar_of(const Point & p, const GridSpec & spec);

PillarAssignment assign_pillars(const PointCloud & cloud, const GridSpec & spec);

/// Per-point (x, y, z, intensity, dt, offsets to the pillar mean, offsets to the pillar
/// center), grouped by pillar in the assignment's member order.
std::map<Coord, std::vector<PointFeature>> augment_points(
  const PointCloud & cloud, const PillarAssignment & assignment, const GridSpec & spec);

struct PillarizeOptions
{
  // 0 disables the cap. Capping keeps the first points in input order, which makes the
  // output depend on point order.
  std::size_t max_points_per_pillar{0};
  std::size_t max_pillars{0};
};

SparseGrid2D pillarize(
  const PointCloud & cloud, const GridSpec & spec, const PillarEncoderParams & params,
  const PillarizeOptions & options = {});

}  // namespace pillardet

#endif  // PILLARDET__PILLARS_HPP_
