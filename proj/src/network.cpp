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

#include "pillardet/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

namespace pillardet
{

std::string to_string(Backbone b)
{
  switch (b) {
    case Backbone::Vgg: return "vgg";
    case Backbone::R18: return "r18";
    case Backbone::R34: return "r34";
  }
  return "?";
}

std::string to_string(NeckVariant v)
{
  switch (v) {
    case NeckVariant::V1: return "v1";
    case NeckVariant::V2: return "v2";
    case NeckVariant::V3: return "v3";
  }
  return "?";
}

Backbone parse_backbone(const std::string & s)
{
  if (s == "vgg") return Backbone::Vgg;
  if (s == "r18" || s == "18") return Backbone::R18;
  if (s == "r34" || s == "34") return Backbone::R34;
  throw std::invalid_argument("unknown backbone '" + s + "' (expected vgg, r18 or r34)");
}

NeckVariant parse_neck(const std::string & s)
{
  if (s == "v1") return NeckVariant::V1;
  if (s == "v2") return NeckVariant::V2;
  if (s == "v3") return NeckVariant::V3;
  throw std::invalid_argument("unknown neck '" + s + "' (expected v1, v2 or v3)");
}

int ModelConfig::base_factor() const
{
  const double ratio = pillar_size / base_pillar;
  for (const int f : {1, 2, 4, 8}) {
    if (std::abs(ratio - f) < 1e-6) {
      return f;
    }
  }
  throw std::invalid_argument(
    "unsupported pillar size " + std::to_string(pillar_size) + ": must be 1, 2, 4 or 8 times " +
    std::to_string(base_pillar));
}

void ModelConfig::validate() const
{
  if (!(base_pillar > 0.0)) {
    throw std::invalid_argument("base pillar size must be positive");
  }
  (void)base_factor();
  const auto positive = [](int v) { return v > 0; };
  if (!std::all_of(stage_channels.begin(), stage_channels.end(), positive) ||
      !positive(pillar_channels) || !positive(dense_channels) || !positive(neck_channels) ||
      !positive(head_channels) || !positive(num_classes) || !positive(neck.group_convs)) {
    throw std::invalid_argument("model widths and counts must be positive");
  }
}

ModelConfig ModelConfig::from_json(const nlohmann::json & j)
{
  ModelConfig c;
  c.backbone = parse_backbone(j.value("backbone", to_string(c.backbone)));
  c.neck.variant = parse_neck(j.value("neck", to_string(c.neck.variant)));
  c.neck.group_convs = j.value("neck_group_convs", c.neck.group_convs);
  c.neck.sparse_stride8 = j.value("neck_sparse_stride8", c.neck.sparse_stride8);
  c.base_pillar = j.value("base_pillar", c.base_pillar);
  c.pillar_size = j.value("pillar_size", c.pillar_size);
  c.pillar_channels = j.value("pillar_channels", c.pillar_channels);
  if (j.contains("stage_channels")) {
    const auto v = j.at("stage_channels").get<std::vector<int>>();
    if (v.size() != 4) {
      throw std::invalid_argument("stage_channels needs 4 entries (strides 1, 2, 4, 8)");
    }
    std::copy(v.begin(), v.end(), c.stage_channels.begin());
  }
  c.dense_channels = j.value("dense_channels", c.dense_channels);
  c.neck_channels = j.value("neck_channels", c.neck_channels);
  c.head_channels = j.value("head_channels", c.head_channels);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.validate();
  return c;
}

nlohmann::json ModelConfig::to_json() const
{
  return {
    {"backbone", to_string(backbone)},
    {"neck", to_string(neck.variant)},
    {"neck_group_convs", neck.group_convs},
    {"neck_sparse_stride8", neck.sparse_stride8},
    {"base_pillar", base_pillar},
    {"pillar_size", pillar_size},
    {"pillar_channels", pillar_channels},
    {"stage_channels", stage_channels},
    {"dense_channels", dense_channels},
    {"neck_channels", neck_channels},
    {"head_channels", head_channels},
    {"num_classes", num_classes}};
}

std::vector<int> StagePlan::strides() const
{
  std::vector<int> out;
  for (const auto & s : stages) {
    out.push_back(s.stride);
  }
  return out;
}

namespace
{

int log2_exact(int v)
{
  int k = 0;
  while ((1 << k) < v) {
    ++k;
  }
  return k;
}

int block_count(Backbone b, int stride)
{
  switch (b) {
    case Backbone::Vgg: return 1;
    case Backbone::R18: return 2;
    case Backbone::R34: return stride >= 4 ? 3 : 2;
  }
  return 1;
}

}  // namespace

StagePlan plan_encoder(const ModelConfig & cfg)
{
  cfg.validate();
  StagePlan plan;
  const BlockType block = cfg.backbone == Backbone::Vgg ? BlockType::Vgg : BlockType::BasicResidual;
  for (int stride = cfg.base_factor(); stride <= 16; stride *= 2) {
    StageSpec s;
    s.stride = stride;
    s.block = block;
    s.blocks = block_count(cfg.backbone, stride);
    s.dense = stride >= plan.dense_from;
    s.channels = s.dense ? cfg.dense_channels
                         : cfg.stage_channels[static_cast<std::size_t>(log2_exact(stride))];
    plan.stages.push_back(s);
  }
  return plan;
}

namespace
{

ConvLayer make_layer(
  std::string name, int k, int c_in, int c_out, int stride, ConvMode mode, bool dense,
  bool normalized, bool relu)
{
  ConvLayer layer;
  layer.name = std::move(name);
  layer.kernel = ConvKernel2D::zeros(k, c_in, c_out, stride, mode);
  if (normalized) {
    layer.scale.assign(static_cast<std::size_t>(c_out), 1.0f);
    layer.shift.assign(static_cast<std::size_t>(c_out), 0.0f);
  }
  layer.relu = relu;
  layer.dense = dense;
  return layer;
}

ConvLayer dense3(std::string name, int c_in, int c_out, bool relu = true)
{
  return make_layer(std::move(name), 3, c_in, c_out, 1, ConvMode::Submanifold, true, true, relu);
}

ConvLayer subm3(std::string name, int c_in, int c_out, bool relu = true)
{
  return make_layer(std::move(name), 3, c_in, c_out, 1, ConvMode::Submanifold, false, true, relu);
}

// Uniform doubles in [0, 1) from raw 64-bit draws, identical on every platform.
double unit(std::mt19937_64 & gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

void init_uniform(std::vector<float> & v, double bound, std::mt19937_64 & gen)
{
  for (auto & x : v) {
    x = static_cast<float>((2.0 * unit(gen) - 1.0) * bound);
  }
}

void post_process(std::span<float> values, const ConvLayer & layer)
{
  const auto width = static_cast<std::size_t>(layer.kernel.c_out);
  const bool affine = !layer.scale.empty();
  for (std::size_t i = 0; i < values.size(); ++i) {
    float v = values[i];
    if (affine) {
      const std::size_t c = i % width;
      v = layer.scale[c] * v + layer.shift[c];
    }
    values[i] = layer.relu ? std::max(v, 0.0f) : v;
  }
}

SparseGrid2D apply(const ConvLayer & layer, const SparseGrid2D & x, const Rulebook * rules = nullptr)
{
  SparseGrid2D y = rules ? sparse_conv(x, layer.kernel, *rules) : sparse_conv(x, layer.kernel);
  post_process(y.feature_data(), layer);
  return y;
}

DenseMap2D apply(const ConvLayer & layer, const DenseMap2D & x)
{
  DenseMap2D y = dense_conv(x, layer.kernel);
  post_process(y.data(), layer);
  return y;
}

template <typename Span>
void add_relu(Span dst, Span src)
{
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = std::max(dst[i] + src[i], 0.0f);
  }
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

template <typename Fn>
void Model::for_each_layer(Fn && fn)
{
  for (auto & stage : stages_) {
    fn(stage.entry);
    for (auto & block : stage.blocks) {
      for (auto & layer : block) {
        fn(layer);
      }
    }
  }
  for (auto & l : neck_enrich16_) fn(l);
  fn(neck_project16_);
  for (auto & l : neck_stride8_) fn(l);
  for (auto & l : neck_up_group_) fn(l);
  for (auto & l : neck_fusion_) fn(l);
  fn(head_shared_);
  for (auto & l : head_branches_) fn(l);
}

template <typename Fn>
void Model::for_each_layer(Fn && fn) const
{
  const_cast<Model *>(this)->for_each_layer([&](ConvLayer & l) { fn(static_cast<const ConvLayer &>(l)); });
}

void Model::build_layout()
{
  cfg_.validate();
  plan_ = plan_encoder(cfg_);
  pillar_.out_channels = cfg_.pillar_channels;
  pillar_.weight.assign(static_cast<std::size_t>(cfg_.pillar_channels * kPointFeatureWidth), 0.0f);
  pillar_.bias.assign(static_cast<std::size_t>(cfg_.pillar_channels), 0.0f);

  stages_.clear();
  int c_prev = cfg_.pillar_channels;
  for (std::size_t si = 0; si < plan_.stages.size(); ++si) {
    const StageSpec & spec = plan_.stages[si];
    const std::string prefix = "encoder.s" + std::to_string(spec.stride);
    Stage stage;
    stage.spec = spec;
    const int c = spec.channels;
    if (spec.dense) {
      stage.entry = make_layer(prefix + ".entry", 3, c_prev, c, 2, ConvMode::Regular, true, true, true);
    } else if (si == 0) {
      stage.entry = subm3(prefix + ".entry", c_prev, c);
    } else {
      stage.entry =
        make_layer(prefix + ".entry", 3, c_prev, c, 2, ConvMode::Regular, false, true, true);
    }
    const auto conv = [&](const std::string & name, bool relu) {
      return spec.dense ? dense3(name, c, c, relu) : subm3(name, c, c, relu);
    };
    for (int b = 0; b < spec.blocks; ++b) {
      const std::string bp = prefix + ".b" + std::to_string(b);
      if (spec.block == BlockType::Vgg) {
        stage.blocks.push_back({conv(bp + ".conv0", true)});
      } else {
        // second conv is activated after the skip addition
        stage.blocks.push_back({conv(bp + ".conv0", true), conv(bp + ".conv1", false)});
      }
    }
    stages_.push_back(std::move(stage));
    c_prev = c;
  }

  const int c8 = plan_.stages[plan_.stages.size() - 2].channels;
  const int c16 = cfg_.dense_channels;
  const int cn = cfg_.neck_channels;
  const int groups = cfg_.neck.group_convs;
  const auto variant = cfg_.neck.variant;

  neck_stride8_.clear();
  for (int i = 0; i < groups; ++i) {
    const std::string name = "neck.s8.conv" + std::to_string(i);
    const int ci = i == 0 ? c8 : cn;
    neck_stride8_.push_back(cfg_.neck.sparse_stride8 ? subm3(name, ci, cn) : dense3(name, ci, cn));
  }
  neck_enrich16_.clear();
  if (variant == NeckVariant::V3) {
    for (int i = 0; i < groups; ++i) {
      neck_enrich16_.push_back(dense3("neck.s16.enrich" + std::to_string(i), c16, c16));
    }
  }
  neck_project16_ =
    make_layer("neck.s16.project", 1, c16, cn, 1, ConvMode::Submanifold, true, true, true);
  neck_up_group_.clear();
  neck_fusion_.clear();
  if (variant != NeckVariant::V1) {
    for (int i = 0; i < groups; ++i) {
      neck_up_group_.push_back(dense3("neck.up.conv" + std::to_string(i), cn, cn));
    }
    const int fusion_convs = variant == NeckVariant::V3 ? 2 * groups : groups;
    for (int i = 0; i < fusion_convs; ++i) {
      neck_fusion_.push_back(dense3("neck.fuse.conv" + std::to_string(i), 2 * cn, 2 * cn));
    }
  }

  head_shared_ = dense3("head.shared", 2 * cn, cfg_.head_channels);
  const std::array<std::pair<const char *, int>, 6> branches{{
    {"head.heatmap", cfg_.num_classes},
    {"head.offset", 2},
    {"head.z", 1},
    {"head.size", 3},
    {"head.rot", 2},
    {"head.iou", 1},
  }};
  for (std::size_t i = 0; i < branches.size(); ++i) {
    head_branches_[i] = make_layer(
      branches[i].first, 1, cfg_.head_channels, branches[i].second, 1, ConvMode::Submanifold, true,
      false, false);
  }
}

Model Model::random(const ModelConfig & cfg, std::uint64_t seed)
{
  Model m;
  m.cfg_ = cfg;
  m.build_layout();
  std::mt19937_64 gen(seed);
  init_uniform(m.pillar_.weight, std::sqrt(6.0 / kPointFeatureWidth), gen);
  m.for_each_layer([&](ConvLayer & layer) {
    const int fan_in = layer.kernel.taps() * layer.kernel.c_in;
    init_uniform(layer.kernel.weights, std::sqrt(6.0 / fan_in), gen);
  });
  // Heatmap logits start near sigmoid^-1(0.1).
  std::fill(m.head_branches_[0].kernel.bias.begin(), m.head_branches_[0].kernel.bias.end(), -2.19f);
  return m;
}

Model Model::from_weights(const ModelConfig & cfg, const WeightStore & weights)
{
  Model m;
  m.cfg_ = cfg;
  m.build_layout();
  const auto c = static_cast<std::int64_t>(cfg.pillar_channels);
  m.pillar_.weight = weights.get("pillar.weight", {c, kPointFeatureWidth}).data;
  m.pillar_.bias = weights.get("pillar.bias", {c}).data;
  m.pillar_.validate();
  m.for_each_layer([&](ConvLayer & layer) {
    const auto & k = layer.kernel;
    const std::int64_t co = k.c_out;
    layer.kernel.weights = weights.get(layer.name + ".weight", {k.k, k.k, k.c_in, co}).data;
    layer.kernel.bias = weights.get(layer.name + ".bias", {co}).data;
    if (!layer.scale.empty()) {
      layer.scale = weights.get(layer.name + ".scale", {co}).data;
      layer.shift = weights.get(layer.name + ".shift", {co}).data;
    }
    layer.kernel.validate();
  });
  return m;
}

WeightStore Model::weights() const
{
  WeightStore store;
  const auto c = static_cast<std::int64_t>(cfg_.pillar_channels);
  store.put("pillar.weight", {{c, kPointFeatureWidth}, pillar_.weight});
  store.put("pillar.bias", {{c}, pillar_.bias});
  for_each_layer([&](const ConvLayer & layer) {
    const auto & k = layer.kernel;
    const std::int64_t co = k.c_out;
    store.put(layer.name + ".weight", {{k.k, k.k, k.c_in, co}, k.weights});
    store.put(layer.name + ".bias", {{co}, k.bias});
    if (!layer.scale.empty()) {
      store.put(layer.name + ".scale", {{co}, layer.scale});
      store.put(layer.name + ".shift", {{co}, layer.shift});
    }
  });
  return store;
}

ConvLayer * Model::find_layer(const std::string & name)
{
  ConvLayer * found = nullptr;
  for_each_layer([&](ConvLayer & l) {
    if (l.name == name) {
      found = &l;
    }
  });
  return found;
}

EncoderOutput Model::run_encoder(const SparseGrid2D & grid) const
{
  if (grid.stride() != 1) {
    throw std::invalid_argument("encoder input must be a stride-1 pillar grid");
  }
  if (std::abs(grid.spec().sx - cfg_.pillar_size) > 1e-9 ||
      std::abs(grid.spec().sy - cfg_.pillar_size) > 1e-9) {
    throw std::invalid_argument("grid pillar size does not match the model's pillar size");
  }
  if (grid.channels() != cfg_.pillar_channels) {
    throw std::invalid_argument("grid feature width does not match the pillar encoder");
  }

  EncoderOutput out;
  SparseGrid2D x = grid;
  DenseMap2D d;
  for (const auto & stage : stages_) {
    if (!stage.spec.dense) {
      x = apply(stage.entry, x);
      // every submanifold conv inside the stage sees the same active set
      const Rulebook rules = build_rulebook(x, stage.blocks.empty() ? stage.entry.kernel
                                                                     : stage.blocks[0][0].kernel);
      for (const auto & block : stage.blocks) {
        if (stage.spec.block == BlockType::Vgg) {
          x = apply(block[0], x, &rules);
        } else {
          SparseGrid2D y = apply(block[1], apply(block[0], x, &rules), &rules);
          add_relu(y.feature_data(), std::span<float>(x.feature_data()));
          x = std::move(y);
        }
      }
      out.stages.push_back({stage.spec.stride, x.size()});
    } else {
      std::set<Coord> footprint;
      for (const auto & c : x.coords()) {
        footprint.insert({c.row / 2, c.col / 2});
      }
      d = apply(stage.entry, densify(x));
      for (const auto & block : stage.blocks) {
        if (stage.spec.block == BlockType::Vgg) {
          d = apply(block[0], d);
        } else {
          DenseMap2D y = apply(block[1], apply(block[0], d));
          add_relu(y.data(), d.data());
          d = std::move(y);
        }
      }
      out.stages.push_back({stage.spec.stride, footprint.size()});
    }
  }
  out.sparse8 = std::move(x);
  out.dense16 = std::move(d);
  return out;
}

DenseMap2D Model::run_neck(const SparseGrid2D & sparse8, const DenseMap2D & dense16) const
{
  if (sparse8.stride() != cfg_.fusion_stride() || dense16.stride() != 2 * cfg_.fusion_stride()) {
    throw std::invalid_argument("neck inputs must be the stride-8 and stride-16 encoder outputs");
  }
  DenseMap2D spatial;
  if (cfg_.neck.sparse_stride8) {
    SparseGrid2D s = sparse8;
    for (const auto & l : neck_stride8_) {
      s = apply(l, s);
    }
    spatial = densify(s);
  } else {
    spatial = densify(sparse8);
    for (const auto & l : neck_stride8_) {
      spatial = apply(l, spatial);
    }
  }

  DenseMap2D semantic = dense16;
  for (const auto & l : neck_enrich16_) {
    semantic = apply(l, semantic);
  }
  semantic = upsample_nearest(apply(neck_project16_, semantic), 2, spatial.rows(), spatial.cols());
  for (const auto & l : neck_up_group_) {
    semantic = apply(l, semantic);
  }

  DenseMap2D fused = concat_channels(spatial, semantic);
  for (const auto & l : neck_fusion_) {
    fused = apply(l, fused);
  }
  return fused;
}

HeadOutput Model::run_head(const DenseMap2D & features) const
{
  const DenseMap2D shared = apply(head_shared_, features);
  HeadOutput out = HeadOutput::zeros(features.rows(), features.cols(), cfg_.num_classes);
  std::array<std::vector<double> *, 6> targets{&out.heatmap, &out.offset, &out.z,
                                               &out.size,    &out.rot,    &out.iou};
  for (std::size_t b = 0; b < head_branches_.size(); ++b) {
    const DenseMap2D m = apply(head_branches_[b], shared);
    auto & dst = *targets[b];
    const auto src = m.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double v = src[i];
      if (b == 0) {
        dst[i] = sigmoid(v);
      } else if (b == 5) {
        dst[i] = std::tanh(v);
      } else {
        dst[i] = v;
      }
    }
  }
  return out;
}

std::vector<LayerInfo> Model::describe() const
{
  std::vector<LayerInfo> out;
  out.push_back(
    {"pillar", "pointwise", 1, 1, kPointFeatureWidth, cfg_.pillar_channels,
     pillar_.weight.size() + pillar_.bias.size()});
  for_each_layer([&](const ConvLayer & l) {
    std::string kind;
    if (l.dense) {
      kind = "dense";
    } else {
      kind = l.kernel.mode == ConvMode::Submanifold ? "submanifold" : "sparse";
    }
    out.push_back(
      {l.name, kind, l.kernel.k, l.kernel.stride, l.kernel.c_in, l.kernel.c_out,
       l.parameter_count()});
  });
  return out;
}

std::size_t Model::parameter_count() const
{
  std::size_t n = 0;
  for (const auto & l : describe()) {
    n += l.parameters;
  }
  return n;
}

nlohmann::json describe_json(const Model & model)
{
  nlohmann::json layers = nlohmann::json::array();
  for (const auto & l : model.describe()) {
    layers.push_back(
      {{"name", l.name},
       {"kind", l.kind},
       {"kernel", l.k},
       {"stride", l.stride},
       {"c_in", l.c_in},
       {"c_out", l.c_out},
       {"parameters", l.parameters}});
  }
  return {
    {"config", model.config().to_json()},
    {"stages", model.plan().strides()},
    {"parameters", model.parameter_count()},
    {"layers", layers}};
}

}  // namespace pillardet
