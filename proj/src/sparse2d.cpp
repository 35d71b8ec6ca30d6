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

#include "pillardet/sparse2d.hpp"

#include "pillardet/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace pillardet
{

namespace
{

std::int32_t floor_div(std::int32_t a, std::int32_t b)
{
  std::int32_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) {
    --q;
  }
  return q;
}

void check_affine(int channels, std::span<const float> scale, std::span<const float> shift)
{
  if (scale.size() != static_cast<std::size_t>(channels) ||
      shift.size() != static_cast<std::size_t>(channels)) {
    throw std::invalid_argument("affine scale/shift width does not match channels");
  }
}

}  // namespace

ConvKernel2D ConvKernel2D::zeros(int k, int c_in, int c_out, int stride, ConvMode mode)
{
  ConvKernel2D kernel;
  kernel.k = k;
  kernel.stride = stride;
  kernel.mode = mode;
  kernel.c_in = c_in;
  kernel.c_out = c_out;
  kernel.weights.assign(static_cast<std::size_t>(k * k * c_in * c_out), 0.0f);
  kernel.bias.assign(static_cast<std::size_t>(c_out), 0.0f);
  kernel.validate();
  return kernel;
}

float & ConvKernel2D::at(int ky, int kx, int ci, int co)
{
  return weights[static_cast<std::size_t>(((ky * k + kx) * c_in + ci) * c_out + co)];
}

float ConvKernel2D::at(int ky, int kx, int ci, int co) const
{
  return weights[static_cast<std::size_t>(((ky * k + kx) * c_in + ci) * c_out + co)];
}

void ConvKernel2D::validate() const
{
  if (k < 1 || k % 2 == 0) {
    throw std::invalid_argument("conv kernel size must be odd and positive");
  }
  if (stride != 1 && stride != 2) {
    throw std::invalid_argument("conv stride must be 1 or 2");
  }
  if (mode == ConvMode::Submanifold && stride != 1) {
    throw std::invalid_argument("submanifold convolution requires stride 1");
  }
  if (c_in < 1 || c_out < 1) {
    throw std::invalid_argument("conv channels must be positive");
  }
  if (weights.size() != static_cast<std::size_t>(k * k * c_in * c_out) ||
      bias.size() != static_cast<std::size_t>(c_out)) {
    throw std::invalid_argument("conv weight/bias shape mismatch");
  }
  const auto finite = [](float v) { return std::isfinite(v); };
  if (!std::all_of(weights.begin(), weights.end(), finite) ||
      !std::all_of(bias.begin(), bias.end(), finite)) {
    throw std::invalid_argument("conv weights must be finite");
  }
}

std::size_t Rulebook::pair_count() const
{
  std::size_t n = 0;
  for (const auto & t : taps) {
    n += t.size();
  }
  return n;
}

Rulebook build_rulebook(const SparseGrid2D & grid, const ConvKernel2D & kernel)
{
  kernel.validate();
  Rulebook rules;
  rules.stride = kernel.stride;
  if (kernel.mode == ConvMode::Submanifold) {
    rules.out_coords.assign(grid.coords().begin(), grid.coords().end());
  } else {
    rules.out_coords.reserve(grid.size());
    for (const auto & c : grid.coords()) {
      rules.out_coords.push_back({floor_div(c.row, kernel.stride), floor_div(c.col, kernel.stride)});
    }
    std::sort(rules.out_coords.begin(), rules.out_coords.end());
    rules.out_coords.erase(
      std::unique(rules.out_coords.begin(), rules.out_coords.end()), rules.out_coords.end());
  }

  const int half = kernel.k / 2;
  rules.taps.resize(static_cast<std::size_t>(kernel.taps()));
  for (int ky = 0; ky < kernel.k; ++ky) {
    for (int kx = 0; kx < kernel.k; ++kx) {
      auto & pairs = rules.taps[static_cast<std::size_t>(ky * kernel.k + kx)];
      for (std::size_t o = 0; o < rules.out_coords.size(); ++o) {
        const Coord oc = rules.out_coords[o];
        const Coord ic{oc.row * kernel.stride + ky - half, oc.col * kernel.stride + kx - half};
        const std::int64_t i = grid.find(ic);
        if (i >= 0) {
          pairs.push_back({i, static_cast<std::int64_t>(o)});
        }
      }
    }
  }
  return rules;
}

SparseGrid2D sparse_conv(const SparseGrid2D & grid, const ConvKernel2D & kernel)
{
  return sparse_conv(grid, kernel, build_rulebook(grid, kernel));
}

SparseGrid2D sparse_conv(
  const SparseGrid2D & grid, const ConvKernel2D & kernel, const Rulebook & rules)
{
  kernel.validate();
  if (grid.channels() != kernel.c_in) {
    throw std::invalid_argument(
      "sparse_conv: grid has " + std::to_string(grid.channels()) + " channels, kernel expects " +
      std::to_string(kernel.c_in));
  }
  const auto c_in = static_cast<std::size_t>(kernel.c_in);
  const auto c_out = static_cast<std::size_t>(kernel.c_out);
  const std::size_t n_out = rules.out_coords.size();
  std::vector<double> acc(n_out * c_out, 0.0);
  const auto in_data = grid.feature_data();

  // Tap-major accumulation keeps the per-site summation order fixed. Within one tap every
  // pair writes a distinct output site.
  for (std::size_t t = 0; t < rules.taps.size(); ++t) {
    const auto & pairs = rules.taps[t];
    const float * w_tap = kernel.weights.data() + t * c_in * c_out;
    parallel_for(pairs.size(), [&](std::size_t begin, std::size_t end) {
      for (std::size_t p = begin; p < end; ++p) {
        const float * x = in_data.data() + static_cast<std::size_t>(pairs[p].in) * c_in;
        double * y = acc.data() + static_cast<std::size_t>(pairs[p].out) * c_out;
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          const double xv = x[ci];
          if (xv == 0.0) {
            continue;
          }
          const float * w = w_tap + ci * c_out;
          for (std::size_t co = 0; co < c_out; ++co) {
            y[co] += xv * static_cast<double>(w[co]);
          }
        }
      }
    });
  }

  std::vector<float> out(n_out * c_out);
  for (std::size_t o = 0; o < n_out; ++o) {
    for (std::size_t co = 0; co < c_out; ++co) {
      out[o * c_out + co] = static_cast<float>(acc[o * c_out + co] + kernel.bias[co]);
    }
  }
  return SparseGrid2D(
    grid.spec(), grid.stride() * kernel.stride, kernel.c_out, rules.out_coords, std::move(out));
}

SparseGrid2D affine_act(
  const SparseGrid2D & grid, std::span<const float> scale, std::span<const float> shift)
{
  check_affine(grid.channels(), scale, shift);
  const auto width = static_cast<std::size_t>(grid.channels());
  std::vector<float> out(grid.feature_data().begin(), grid.feature_data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t c = i % width;
    out[i] = std::max(scale[c] * out[i] + shift[c], 0.0f);
  }
  return grid.with_features(grid.channels(), std::move(out));
}

DenseMap2D::DenseMap2D(GridSpec spec, int stride, int channels)
: DenseMap2D(spec, stride, spec.rows(stride), spec.cols(stride), channels)
{
}

DenseMap2D::DenseMap2D(GridSpec spec, int stride, int rows, int cols, int channels)
: spec_(spec), stride_(stride), rows_(rows), cols_(cols), channels_(channels)
{
  if (stride < 1 || rows < 0 || cols < 0 || channels < 0) {
    throw std::invalid_argument("dense map dimensions must be non-negative");
  }
  data_.assign(
    static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) *
      static_cast<std::size_t>(channels),
    0.0f);
}

std::span<float> DenseMap2D::pixel(int r, int c)
{
  return std::span<float>(data_).subspan(offset(r, c), static_cast<std::size_t>(channels_));
}

std::span<const float> DenseMap2D::pixel(int r, int c) const
{
  return std::span<const float>(data_).subspan(offset(r, c), static_cast<std::size_t>(channels_));
}

bool operator==(const DenseMap2D & a, const DenseMap2D & b)
{
  return a.stride_ == b.stride_ && a.rows_ == b.rows_ && a.cols_ == b.cols_ &&
         a.channels_ == b.channels_ &&
         std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0;
}

DenseMap2D densify(const SparseGrid2D & grid)
{
  DenseMap2D map(grid.spec(), grid.stride(), grid.rows(), grid.cols(), grid.channels());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto f = grid.features(i);
    std::copy(f.begin(), f.end(), map.pixel(grid.coord(i).row, grid.coord(i).col).begin());
  }
  return map;
}

SparseGrid2D sparsify(const DenseMap2D & map)
{
  std::vector<Coord> coords;
  std::vector<float> features;
  for (int r = 0; r < map.rows(); ++r) {
    for (int c = 0; c < map.cols(); ++c) {
      const auto px = map.pixel(r, c);
      if (std::any_of(px.begin(), px.end(), [](float v) { return v != 0.0f; })) {
        coords.push_back({r, c});
        features.insert(features.end(), px.begin(), px.end());
      }
    }
  }
  return SparseGrid2D(
    map.spec(), map.stride(), map.channels(), std::move(coords), std::move(features));
}

DenseMap2D dense_conv(const DenseMap2D & map, const ConvKernel2D & kernel)
{
  kernel.validate();
  if (map.channels() != kernel.c_in) {
    throw std::invalid_argument(
      "dense_conv: map has " + std::to_string(map.channels()) + " channels, kernel expects " +
      std::to_string(kernel.c_in));
  }
  const int s = kernel.stride;
  const int half = kernel.k / 2;
  const int out_rows = (map.rows() + s - 1) / s;
  const int out_cols = (map.cols() + s - 1) / s;
  DenseMap2D out(map.spec(), map.stride() * s, out_rows, out_cols, kernel.c_out);
  const auto c_in = static_cast<std::size_t>(kernel.c_in);
  const auto c_out = static_cast<std::size_t>(kernel.c_out);

  parallel_for(static_cast<std::size_t>(out_rows), [&](std::size_t begin, std::size_t end) {
    std::vector<double> acc(c_out);
    for (auto r = static_cast<int>(begin); r < static_cast<int>(end); ++r) {
      for (int c = 0; c < out_cols; ++c) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int ky = 0; ky < kernel.k; ++ky) {
          const int ir = r * s + ky - half;
          if (ir < 0 || ir >= map.rows()) {
            continue;
          }
          for (int kx = 0; kx < kernel.k; ++kx) {
            const int ic = c * s + kx - half;
            if (ic < 0 || ic >= map.cols()) {
              continue;
            }
            const float * x = map.pixel(ir, ic).data();
            const float * w_tap =
              kernel.weights.data() + static_cast<std::size_t>(ky * kernel.k + kx) * c_in * c_out;
            for (std::size_t ci = 0; ci < c_in; ++ci) {
              const double xv = x[ci];
              if (xv == 0.0) {
                continue;
              }
              const float * w = w_tap + ci * c_out;
              for (std::size_t co = 0; co < c_out; ++co) {
                acc[co] += xv * static_cast<double>(w[co]);
              }
            }
          }
        }
        auto px = out.pixel(r, c);
        for (std::size_t co = 0; co < c_out; ++co) {
          px[co] = static_cast<float>(acc[co] + kernel.bias[co]);
        }
      }
    }
  });
  return out;
}

DenseMap2D affine_act(
  const DenseMap2D & map, std::span<const float> scale, std::span<const float> shift)
{
  check_affine(map.channels(), scale, shift);
  DenseMap2D out = map;
  auto data = out.data();
  const auto width = static_cast<std::size_t>(map.channels());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t c = i % width;
    data[i] = std::max(scale[c] * data[i] + shift[c], 0.0f);
  }
  return out;
}

DenseMap2D upsample_nearest(const DenseMap2D & map, int factor, int rows, int cols)
{
  if (factor < 1 || map.stride() % factor != 0) {
    throw std::invalid_argument("upsample factor must divide the map stride");
  }
  DenseMap2D out(map.spec(), map.stride() / factor, rows, cols, map.channels());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int sr = std::min(r / factor, map.rows() - 1);
      const int sc = std::min(c / factor, map.cols() - 1);
      const auto src = map.pixel(sr, sc);
      std::copy(src.begin(), src.end(), out.pixel(r, c).begin());
    }
  }
  return out;
}

DenseMap2D concat_channels(const DenseMap2D & a, const DenseMap2D & b)
{
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.stride() != b.stride()) {
    throw std::invalid_argument("concat_channels: spatial shape mismatch");
  }
  DenseMap2D out(a.spec(), a.stride(), a.rows(), a.cols(), a.channels() + b.channels());
  for (int r = 0; r < a.rows(); ++r) {
    for (int c = 0; c < a.cols(); ++c) {
      auto dst = out.pixel(r, c);
      const auto pa = a.pixel(r, c);
      const auto pb = b.pixel(r, c);
      std::copy(pa.begin(), pa.end(), dst.begin());
      std::copy(pb.begin(), pb.end(), dst.begin() + static_cast<std::ptrdiff_t>(pa.size()));
    }
  }
  return out;
}

}  // namespace pillardet
