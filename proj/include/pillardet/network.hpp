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

#ifndef PILLARDET__NETWORK_HPP_
#define PILLARDET__NETWORK_HPP_

#include "pillardet/head.hpp"
#include "pillardet/pillars.hpp"
#include "pillardet/sparse2d.hpp"
#include "pillardet/weights.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace pillardet
{

enum class Backbone { Vgg, R18, R34 };
enum class NeckVariant { V1, V2, V3 };
enum class BlockType { Vgg, BasicResidual };

std::string to_string(Backbone b);
std::string to_string(NeckVariant v);
Backbone parse_backbone(const std::string & s);
NeckVariant parse_neck(const std::string & s);

struct NeckKind
{
  NeckVariant variant{NeckVariant::V2};
  int group_convs{2};           // convolutions per conv group
  bool sparse_stride8{false};   // submanifold instead of dense convs on the stride-8 branch
};

struct ModelConfig
{
  Backbone backbone{Backbone::R18};
  NeckKind neck{};
  double base_pillar{0.075};
  double pillar_size{0.075};
  int pillar_channels{32};
  std::array<int, 4> stage_channels{32, 64, 128, 256};  // strides 1, 2, 4, 8
  int dense_channels{256};
  int neck_channels{128};
  int head_channels{64};
  int num_classes{3};

  // Pillar size in base-pillar units: 1, 2, 4 or 8.
  int base_factor() const;
  // Stride of the neck output relative to the input grid.
  int fusion_stride() const { return 8 / base_factor(); }
  void validate() const;

  static ModelConfig from_json(const nlohmann::json & j);
  nlohmann::json to_json() const;
};

struct StageSpec
{
  int stride{1};  // in base-pillar units
  BlockType block{BlockType::Vgg};
  int blocks{1};  // blocks after the stage entry convolution
  int channels{0};
  bool dense{false};
};

struct StagePlan
{
  std::vector<StageSpec> stages;
  int sparse_upto{8};
  int dense_from{16};

  std::vector<int> strides() const;
};

// Stages for the configured pillar size; coarser pillars drop the leading stages.
StagePlan plan_encoder(const ModelConfig & cfg);

struct StageStat
{
  int stride{1};  // base-pillar units
  std::size_t active_sites{0};
};

struct EncoderOutput
{
  SparseGrid2D sparse8;
  DenseMap2D dense16;
  std::vector<StageStat> stages;
};

struct LayerInfo
{
  std::string name;
  std::string kind;
  int k{1};
  int stride{1};
  int c_in{0};
  int c_out{0};
  std::size_t parameters{0};
};

/// A convolution followed by folded normalization (per-channel scale/shift) and an
/// optional ReLU.
struct ConvLayer
{
  std::string name;
  ConvKernel2D kernel;
  std::vector<float> scale;  // empty: no normalization
  std::vector<float> shift;
  bool relu{true};
  bool dense{false};

  std::size_t parameter_count() const
  {
    return kernel.parameter_count() + scale.size() + shift.size();
  }
};

/// Immutable network instance. Concurrent forward passes on different inputs are safe.
class Model
{
public:
  static Model random(const ModelConfig & cfg, std::uint64_t seed);
  static Model from_weights(const ModelConfig & cfg, const WeightStore & weights);

  const ModelConfig & config() const { return cfg_; }
  const StagePlan & plan() const { return plan_; }
  const PillarEncoderParams & pillar_params() const { return pillar_; }
  WeightStore weights() const;

  EncoderOutput run_encoder(const SparseGrid2D & grid) const;
  DenseMap2D run_neck(const SparseGrid2D & sparse8, const DenseMap2D & dense16) const;
  HeadOutput run_head(const DenseMap2D & features) const;

  std::vector<LayerInfo> describe() const;
  std::size_t parameter_count() const;

  // Mutable access for constructing test fixtures.
  ConvLayer * find_layer(const std::string & name);

private:
  struct Stage
  {
    StageSpec spec;
    ConvLayer entry;
    std::vector<std::vector<ConvLayer>> blocks;  // 1 conv per vgg block, 2 per residual
  };

  Model() = default;
  void build_layout();
  template <typename Fn> void for_each_layer(Fn && fn);
  template <typename Fn> void for_each_layer(Fn && fn) const;

  ModelConfig cfg_{};
  StagePlan plan_{};
  PillarEncoderParams pillar_{};
  std::vector<Stage> stages_;
  std::vector<ConvLayer> neck_stride8_;
  std::vector<ConvLayer> neck_enrich16_;
  ConvLayer neck_project16_;
  std::vector<ConvLayer> neck_up_group_;
  std::vector<ConvLayer> neck_fusion_;
  ConvLayer head_shared_;
  std::array<ConvLayer, 6> head_branches_;  // heatmap, offset, z, size, rot, iou
};

nlohmann::json describe_json(const Model & model);

}  // namespace pillardet

#endif  // PILLARDET__NETWORK_HPP_
