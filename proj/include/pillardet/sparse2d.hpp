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

#ifndef PILLARDET__SPARSE2D_HPP_
#define PILLARDET__SPARSE2D_HPP_

#include "pillardet/pillars.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace pillardet
{

enum class ConvMode { Submanifold, Regular };

/// K x K convolution, weights laid out [ky][kx][c_in][c_out]. Tap (ky, kx) reads the input
/// at (row * stride + ky - K/2, col * stride + kx - K/2).
struct ConvKernel2D
{
  int k{3};
  int stride{1};
  ConvMode mode{ConvMode::Submanifold};
  int c_in{0};
  int c_out{0};
  std::vector<float> weights;
  std::vector<float> bias;

  static ConvKernel2D zeros(int k, int c_in, int c_out, int stride = 1,
                            ConvMode mode = ConvMode::Submanifold);

  int taps() const { return k * k; }
  float & at(int ky, int kx, int ci, int co);
  float at(int ky, int kx, int ci, int co) const;
  std::size_t parameter_count() const { return weights.size() + bias.size(); }
  void validate() const;
};

struct RulePair
{
  std::int64_t in{};
  std::int64_t out{};
};

/// Gather/scatter pairs per kernel tap, each list ordered by output site.
struct Rulebook
{
  int stride{1};
  std::vector<Coord> out_coords;            // row-major
  std::vector<std::vector<RulePair>> taps;  // taps[ky * K + kx]

  std::size_t pair_count() const;
};

Rulebook build_rulebook(const SparseGrid2D & grid, const ConvKernel2D & kernel);

// Submanifold: same active set. Regular: active set is the floor-divided input set and
// the output stride is multiplied by the kernel stride.
SparseGrid2D sparse_conv(const SparseGrid2D & grid, const ConvKernel2D & kernel);
SparseGrid2D sparse_conv(
  const SparseGrid2D & grid, const ConvKernel2D & kernel, const Rulebook & rules);

// y = max(scale * x + shift, 0) per channel.
SparseGrid2D affine_act(
  const SparseGrid2D & grid, std::span<const float> scale, std::span<const float> shift);

// Dense H x W x C feature map, channel-last.
class DenseMap2D
{
public:
  DenseMap2D() = default;
  DenseMap2D(GridSpec spec, int stride, int channels);
  DenseMap2D(GridSpec spec, int stride, int rows, int cols, int channels);

  const GridSpec & spec() const { return spec_; }
  int stride() const { return stride_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int channels() const { return channels_; }

  float & at(int r, int c, int ch) { return data_[offset(r, c) + static_cast<std::size_t>(ch)]; }
  float at(int r, int c, int ch) const
  {
    return data_[offset(r, c) + static_cast<std::size_t>(ch)];
  }
  std::span<float> pixel(int r, int c);
  std::span<const float> pixel(int r, int c) const;
  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  friend bool operator==(const DenseMap2D & a, const DenseMap2D & b);

private:
  std::size_t offset(int r, int c) const
  {
    return (static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) +
            static_cast<std::size_t>(c)) *
           static_cast<std::size_t>(channels_);
  }

  GridSpec spec_{};
  int stride_{1};
  int rows_{0};
  int cols_{0};
  int channels_{0};
  std::vector<float> data_;
};

DenseMap2D densify(const SparseGrid2D & grid);
// Sites whose feature vector has at least one nonzero entry.
SparseGrid2D sparsify(const DenseMap2D & map);

// Zero-padded convolution (padding K/2) with stride 1 or 2; output is ceil(H / stride).
DenseMap2D dense_conv(const DenseMap2D & map, const ConvKernel2D & kernel);
DenseMap2D affine_act(
  const DenseMap2D & map, std::span<const float> scale, std::span<const float> shift);

// Nearest-neighbour upsampling, cropped to (rows, cols).
DenseMap2D upsample_nearest(const DenseMap2D & map, int factor, int rows, int cols);
DenseMap2D concat_channels(const DenseMap2D & a, const DenseMap2D & b);

}  // namespace pillardet

#endif  // PILLARDET__SPARSE2D_HPP_
