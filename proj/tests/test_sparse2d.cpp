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

#include "oracles.hpp"
#include "pillardet/parallel.hpp"
#include "pillardet/sparse2d.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

using namespace pillardet;

namespace
{

GridSpec unit_spec(int rows, int cols)
{
  GridSpec s;
  s.x = {0.0, static_cast<double>(cols)};
  s.y = {0.0, static_cast<double>(rows)};
  s.sx = s.sy = 1.0;
  return s;
}

SparseGrid2D sites(int rows, int cols, std::vector<Coord> coords, int channels = 1)
{
  std::vector<float> f(coords.size() * static_cast<std::size_t>(channels), 1.0f);
  return SparseGrid2D(unit_spec(rows, cols), 1, channels, std::move(coords), std::move(f));
}

// Max abs difference between a sparse result and the dense oracle on its active sites.
double oracle_gap(const SparseGrid2D & out, const oracle::DenseGrid & ref)
{
  double worst = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto f = out.features(i);
    for (int ch = 0; ch < out.channels(); ++ch) {
      worst = std::max(worst, std::abs(f[static_cast<std::size_t>(ch)] - ref.at(out.coord(i).row, out.coord(i).col, ch)));
    }
  }
  return worst;
}

}  // namespace

TEST(Kernel, Validation)
{
  EXPECT_THROW(ConvKernel2D::zeros(2, 1, 1).validate(), std::invalid_argument);
  EXPECT_THROW(ConvKernel2D::zeros(3, 1, 1, 2, ConvMode::Submanifold).validate(), std::invalid_argument);
  EXPECT_THROW(ConvKernel2D::zeros(3, 1, 1, 3, ConvMode::Regular).validate(), std::invalid_argument);
  auto k = ConvKernel2D::zeros(3, 1, 1);
  k.weights[0] = NAN;
  EXPECT_THROW(k.validate(), std::invalid_argument);
  k = ConvKernel2D::zeros(3, 2, 2);
  k.bias.pop_back();
  EXPECT_THROW(k.validate(), std::invalid_argument);
}

TEST(Rulebook, SingleSiteSubmanifold)
{
  const auto g = sites(8, 8, {{3, 3}});
  const auto rb = build_rulebook(g, ConvKernel2D::zeros(3, 1, 1));
  ASSERT_EQ(rb.out_coords.size(), 1u);
  EXPECT_EQ(rb.pair_count(), 1u);
  ASSERT_EQ(rb.taps[4].size(), 1u);
  EXPECT_EQ(rb.taps[4][0].in, 0);
  EXPECT_EQ(rb.taps[4][0].out, 0);
}

TEST(Rulebook, TwoAdjacentSitesSubmanifold)
{
  const auto g = sites(8, 8, {{3, 3}, {3, 4}});
  const auto rb = build_rulebook(g, ConvKernel2D::zeros(3, 1, 1));
  EXPECT_EQ(rb.out_coords.size(), 2u);
  EXPECT_EQ(rb.pair_count(), 4u);
  EXPECT_EQ(rb.taps[4].size(), 2u);
  // output (3,3) reads (3,4) through tap (1,2); output (3,4) reads (3,3) through tap (1,0)
  ASSERT_EQ(rb.taps[5].size(), 1u);
  EXPECT_EQ(rb.taps[5][0].out, 0);
  EXPECT_EQ(rb.taps[5][0].in, 1);
  ASSERT_EQ(rb.taps[3].size(), 1u);
  EXPECT_EQ(rb.taps[3][0].out, 1);
  EXPECT_EQ(rb.taps[3][0].in, 0);
}

TEST(Rulebook, RegularStrideTwoFloorsCoordinates)
{
  const auto g = sites(16, 16, {{5, 7}});
  const auto rb = build_rulebook(g, ConvKernel2D::zeros(3, 1, 1, 2, ConvMode::Regular));
  ASSERT_EQ(rb.out_coords.size(), 1u);
  EXPECT_EQ(rb.out_coords[0], (Coord{2, 3}));
  EXPECT_EQ(rb.stride, 2);
}

TEST(Rulebook, PairsAreExhaustiveAndUnique)
{
  std::mt19937_64 gen(1);
  for (const auto mode : {ConvMode::Submanifold, ConvMode::Regular}) {
    const auto g = oracle::random_grid(gen, 20, 17, 1, 0.3);
    const int stride = mode == ConvMode::Regular ? 2 : 1;
    const auto k = ConvKernel2D::zeros(3, 1, 1, stride, mode);
    const auto rb = build_rulebook(g, k);
    std::set<std::tuple<int, std::int64_t, std::int64_t>> seen;
    std::size_t expected = 0;
    for (std::size_t o = 0; o < rb.out_coords.size(); ++o) {
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const Coord in{rb.out_coords[o].row * stride + ky - 1, rb.out_coords[o].col * stride + kx - 1};
          expected += g.find(in) >= 0;
        }
      }
    }
    for (int t = 0; t < 9; ++t) {
      std::int64_t prev = -1;
      for (const auto & p : rb.taps[static_cast<std::size_t>(t)]) {
        EXPECT_GT(p.out, prev);
        prev = p.out;
        EXPECT_TRUE(seen.insert({t, p.in, p.out}).second);
      }
    }
    EXPECT_EQ(rb.pair_count(), expected);
  }
}

TEST(SparseConv, IdentityKernel)
{
  std::mt19937_64 gen(2);
  const auto g = oracle::random_grid(gen, 12, 12, 3, 0.4);
  auto k = ConvKernel2D::zeros(3, 3, 3);
  for (int c = 0; c < 3; ++c) k.at(1, 1, c, c) = 1.0f;
  EXPECT_TRUE(sparse_conv(g, k) == g);
}

TEST(SparseConv, EmptyGrid)
{
  const auto g = sites(8, 8, {});
  std::mt19937_64 gen(3);
  const auto out = sparse_conv(g, oracle::random_kernel(gen, 3, 1, 4, 2, ConvMode::Regular));
  EXPECT_EQ(out.size(), 0u);
  EXPECT_EQ(out.stride(), 2);
  EXPECT_EQ(out.channels(), 4);
}

TEST(SparseConv, ChannelMismatchThrows)
{
  const auto g = sites(8, 8, {{1, 1}}, 2);
  EXPECT_THROW(sparse_conv(g, ConvKernel2D::zeros(3, 3, 1)), std::invalid_argument);
}

TEST(SparseConv, MatchesDenseOracle32x32)
{
  std::mt19937_64 gen(4);
  const auto g = oracle::random_grid(gen, 32, 32, 4, 0.3);
  for (const auto mode : {ConvMode::Submanifold, ConvMode::Regular}) {
    const auto k = oracle::random_kernel(gen, 3, 4, 5, mode == ConvMode::Regular ? 2 : 1, mode);
    const auto out = sparse_conv(g, k);
    EXPECT_LT(oracle_gap(out, oracle::naive_conv(oracle::to_dense(g), k)), 1e-5);
  }
}

TEST(SparseConv, SubmanifoldKeepsActiveSet)
{
  std::mt19937_64 gen(5);
  const auto g = oracle::random_grid(gen, 30, 25, 2, 0.2);
  const auto out = sparse_conv(g, oracle::random_kernel(gen, 5, 2, 3, 1, ConvMode::Submanifold));
  ASSERT_EQ(out.size(), g.size());
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(out.coord(i), g.coord(i));
}

TEST(SparseConv, Linearity)
{
  std::mt19937_64 gen(6);
  const auto g = oracle::random_grid(gen, 16, 16, 3, 0.4);
  auto k = oracle::random_kernel(gen, 3, 3, 2, 1, ConvMode::Submanifold);
  std::fill(k.bias.begin(), k.bias.end(), 0.0f);
  std::vector<float> scaled(g.feature_data().begin(), g.feature_data().end());
  for (auto & v : scaled) v *= 0.5f;  // exact in binary floating point
  const auto a = sparse_conv(g, k);
  const auto b = sparse_conv(g.with_features(3, scaled), k);
  for (std::size_t i = 0; i < a.feature_data().size(); ++i) {
    const float x = a.feature_data()[i], y = b.feature_data()[i];
    EXPECT_LE(std::abs(0.5f * x - y), 1e-6 * std::max(1.0f, std::abs(x)));
  }
}

TEST(SparseConv, StrideComposition)
{
  std::mt19937_64 gen(7);
  const auto g = oracle::random_grid(gen, 40, 36, 1, 0.05);
  const auto k = ConvKernel2D::zeros(3, 1, 1, 2, ConvMode::Regular);
  const auto s4 = sparse_conv(sparse_conv(g, k), k);
  std::set<Coord> expected;
  for (const auto & c : g.coords()) expected.insert({c.row / 4, c.col / 4});
  EXPECT_EQ(s4.stride(), 4);
  ASSERT_EQ(s4.size(), expected.size());
  std::size_t i = 0;
  for (const auto & c : expected) EXPECT_EQ(s4.coord(i++), c);
}

TEST(SparseConv, DeterministicAcrossWorkerCounts)
{
  std::mt19937_64 gen(8);
  const auto g = oracle::random_grid(gen, 48, 48, 8, 0.3);
  const auto k = oracle::random_kernel(gen, 3, 8, 8, 2, ConvMode::Regular);
  set_num_threads(1);
  const auto a = sparse_conv(g, k);
  set_num_threads(4);
  const auto b = sparse_conv(g, k);
  set_num_threads(1);
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(sparse_conv(g, k) == a);
}

TEST(AffineAct, Cases)
{
  std::mt19937_64 gen(9);
  const auto g = oracle::random_grid(gen, 10, 10, 2, 0.5);
  const std::vector<float> one{1.0f, 1.0f}, zero{0.0f, 0.0f}, shift{0.25f, -0.5f};
  const auto a = affine_act(g, zero, shift);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.features(i)[0], 0.25f);
    EXPECT_EQ(a.features(i)[1], 0.0f);
  }
  const auto nonneg = affine_act(g, one, zero);
  EXPECT_TRUE(affine_act(nonneg, one, zero) == nonneg);
  const std::vector<float> scale{1.5f, -2.0f};
  const auto r = affine_act(g, scale, shift);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_EQ(r.features(i)[c], std::max(scale[c] * g.features(i)[c] + shift[c], 0.0f));
    }
  }
}

TEST(Densify, EmptyAndSingleSite)
{
  const auto e = densify(sites(4, 5, {}, 2));
  EXPECT_EQ(e.rows(), 4);
  EXPECT_EQ(e.cols(), 5);
  for (float v : e.data()) EXPECT_EQ(v, 0.0f);
  const auto one = densify(sites(4, 5, {{2, 3}}, 2));
  int nonzero = 0;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 5; ++c) nonzero += one.at(r, c, 0) != 0.0f;
  EXPECT_EQ(nonzero, 1);
  EXPECT_EQ(one.at(2, 3, 1), 1.0f);
}

TEST(Densify, RoundTrip)
{
  std::mt19937_64 gen(10);
  auto g = oracle::random_grid(gen, 20, 20, 2, 0.3);
  std::vector<float> f(g.feature_data().begin(), g.feature_data().end());
  f[0] = f[1] = 0.0f;  // first site becomes exactly zero
  g = g.with_features(2, f);
  const auto back = sparsify(densify(g));
  EXPECT_EQ(back.size(), g.size() - 1);
  for (std::size_t i = 0; i < back.size(); ++i) {
    const auto j = g.find(back.coord(i));
    ASSERT_GE(j, 0);
    EXPECT_EQ(back.features(i)[0], g.features(static_cast<std::size_t>(j))[0]);
  }
}

TEST(DenseConv, IdentityAndBoxKernel)
{
  DenseMap2D m(unit_spec(7, 7), 1, 1);
  m.at(3, 3, 0) = 1.0f;
  auto id = ConvKernel2D::zeros(3, 1, 1, 1, ConvMode::Regular);
  id.at(1, 1, 0, 0) = 1.0f;
  EXPECT_TRUE(dense_conv(m, id) == m);
  auto box = ConvKernel2D::zeros(3, 1, 1, 1, ConvMode::Regular);
  std::fill(box.weights.begin(), box.weights.end(), 1.0f);
  const auto out = dense_conv(m, box);
  for (int r = 0; r < 7; ++r) {
    for (int c = 0; c < 7; ++c) {
      const bool plateau = std::abs(r - 3) <= 1 && std::abs(c - 3) <= 1;
      EXPECT_EQ(out.at(r, c, 0), plateau ? 1.0f : 0.0f);
    }
  }
}

TEST(DenseConv, MatchesNaiveLoop)
{
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (int stride : {1, 2}) {
    DenseMap2D m(unit_spec(13, 11), 1, 3);
    for (auto & v : m.data()) v = u(gen);
    const auto k = oracle::random_kernel(gen, 3, 3, 4, stride, ConvMode::Regular);
    const auto out = dense_conv(m, k);
    const auto ref = oracle::naive_conv(oracle::to_dense(m), k);
    ASSERT_EQ(out.rows(), ref.rows);
    ASSERT_EQ(out.cols(), ref.cols);
    for (int r = 0; r < ref.rows; ++r)
      for (int c = 0; c < ref.cols; ++c)
        for (int ch = 0; ch < 4; ++ch) EXPECT_NEAR(out.at(r, c, ch), ref.at(r, c, ch), 1e-5);
  }
}

TEST(DenseConv, ShapeMismatchThrows)
{
  DenseMap2D m(unit_spec(4, 4), 1, 2);
  EXPECT_THROW(dense_conv(m, ConvKernel2D::zeros(3, 3, 1, 1, ConvMode::Regular)), std::invalid_argument);
}

TEST(Upsample, NearestAndConcat)
{
  DenseMap2D m(unit_spec(8, 8), 2, 4, 4, 1);
  m.at(1, 2, 0) = 3.0f;
  const auto up = upsample_nearest(m, 2, 8, 7);
  EXPECT_EQ(up.rows(), 8);
  EXPECT_EQ(up.cols(), 7);
  EXPECT_EQ(up.stride(), 1);
  EXPECT_EQ(up.at(2, 4, 0), 3.0f);
  EXPECT_EQ(up.at(3, 5, 0), 3.0f);
  EXPECT_EQ(up.at(3, 6, 0), 0.0f);
  const auto cat = concat_channels(up, up);
  EXPECT_EQ(cat.channels(), 2);
  EXPECT_EQ(cat.at(3, 5, 1), 3.0f);
}
