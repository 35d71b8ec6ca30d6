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

#ifndef PILLARDET__HARNESS_HPP_
#define PILLARDET__HARNESS_HPP_

#include "pillardet/geom.hpp"
#include "pillardet/head.hpp"
#include "pillardet/losses.hpp"
#include "pillardet/network.hpp"
#include "pillardet/pillars.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace pillardet
{

enum ObjectClass : int { kCar = 0, kPedestrian = 1, kCyclist = 2 };
inline constexpr int kNumClasses = 3;

struct SceneOptions
{
  int points_per_object{48};
  double noise_sigma{0.02};
  double ground_z{-1.8};        // clamped into the grid's z range
  double fusion_cell{0.6};      // object centers are kept >= 3 cells apart
  bool occlusion{false};        // when set, objects may receive no points
};

struct SyntheticScene
{
  std::uint64_t seed{0};
  std::vector<Box3D> boxes;
  std::vector<int> labels;
  PointCloud cloud;
};

// Deterministic per seed. Boxes lie fully inside the grid range and never overlap.
SyntheticScene generate_scene(
  std::uint64_t seed, const GridSpec & spec, int n_objects, double clutter_density,
  const SceneOptions & options = {});

bool point_in_box(const Box3D & box, double x, double y, double z, double tol = 0.0);

// Planar ego pose: p' = R(yaw) p + t.
struct Pose2D
{
  double yaw{0.0};
  double tx{0.0};
  double ty{0.0};

  std::array<double, 2> apply(double x, double y) const;
  // (a * b)(p) = a(b(p))
  friend Pose2D operator*(const Pose2D & a, const Pose2D & b);
};

struct Sweep
{
  PointCloud cloud;
  double time_offset{0.0};  // seconds before the newest sweep
  Pose2D pose{};            // sweep frame -> newest frame
};

using SweepSet = std::vector<Sweep>;

// Throws if offsets are negative or not ascending.
PointCloud accumulate_sweeps(const SweepSet & sweeps);

struct AugmentOp
{
  enum class Kind { FlipX, FlipY, Rotate, Scale, Translate };
  Kind kind{Kind::FlipX};
  double value{0.0};               // angle for Rotate, factor for Scale
  std::array<double, 3> shift{};   // Translate

  static AugmentOp flip_x() { return {Kind::FlipX, 0.0, {}}; }
  static AugmentOp flip_y() { return {Kind::FlipY, 0.0, {}}; }
  static AugmentOp rotate(double phi) { return {Kind::Rotate, phi, {}}; }
  static AugmentOp scale(double s) { return {Kind::Scale, s, {}}; }
  static AugmentOp translate(double x, double y, double z) { return {Kind::Translate, 0.0, {x, y, z}}; }
};

// FlipX mirrors across the x axis (y -> -y), FlipY across the y axis (x -> -x).
SyntheticScene augment(const SyntheticScene & scene, const std::vector<AugmentOp> & ops);

// Width in cells of the Gaussian splat for a box footprint of (l, w) cells.
double gaussian_radius(double l_cells, double w_cells, double min_overlap = 0.1);
inline constexpr int kMinGaussianRadius = 2;

// Boxes whose center falls outside the grid are skipped, as are later boxes whose center
// cell is already taken.
TargetMaps assemble_targets(
  const std::vector<Box3D> & boxes, const std::vector<int> & labels, const GridSpec & spec,
  int stride, int num_classes = kNumClasses);
TargetMaps assemble_targets(
  const SyntheticScene & scene, const GridSpec & spec, int stride, int num_classes = kNumClasses);

// Head maps that decode exactly to the targets, with IoU predictions of 1.
HeadOutput oracle_head_output(const TargetMaps & targets);

struct PostConfig
{
  std::size_t top_k{100};
  std::vector<double> beta{0.5};  // one value for all classes, or one per class
  NmsConfig nms{};
};

struct PipelineConfig
{
  GridSpec grid{};
  ModelConfig model{};
  PostConfig post{};
  int point_channels{5};
  int scene_objects{8};
  double clutter_density{0.5};

  static PipelineConfig from_json(const nlohmann::json & j);
};

struct StageTiming
{
  double pillarize_ms{0.0};
  double encoder_ms{0.0};
  double neck_ms{0.0};
  double head_ms{0.0};
  double post_ms{0.0};

  double total_ms() const { return pillarize_ms + encoder_ms + neck_ms + head_ms + post_ms; }
};

struct PipelineResult
{
  std::vector<Detection> detections;
  StageTiming timing;
  std::size_t pillars{0};
  std::vector<StageStat> stages;
};

std::vector<Detection> postprocess(const HeadOutput & out, const GridSpec & spec, int stride, const PostConfig & post);

PipelineResult run_pipeline(const PointCloud & cloud, const Model & model, const PipelineConfig & config);

struct BenchCase
{
  std::string name;
  Backbone backbone{Backbone::R18};
  NeckVariant neck{NeckVariant::V2};
  double pillar_size{0.075};
  double clutter_density{0.5};
  std::uint64_t seed{0};
};

struct BenchGrid
{
  GridSpec grid{};
  ModelConfig model{};  // widths shared by every case
  int n_objects{8};
  int runs{20};
  int warmup{3};
  std::vector<BenchCase> cases;

  // {"grid", "model", "n_objects", "runs", "warmup", "seeds": [..],
  //  "clutter_densities": [..], "configs": [{"name", "backbone", "neck", "pillar_size"}]}
  static BenchGrid from_json(const nlohmann::json & j);
};

struct BenchRow
{
  BenchCase config;
  std::size_t pillars{0};
  std::vector<StageStat> stages;
  StageTiming median;
  std::size_t detections{0};
};

std::vector<BenchRow> bench(const BenchGrid & grid);
void write_bench_csv(std::ostream & os, const std::vector<BenchRow> & rows);

// Coupled BEV IoU and orientation-decoupled IoU of a perturbed copy of the box
// [0, 0, 3.9, 1.6, 0] against the original.
//   A: center offset a along x, heading swept over [0, pi]
//   B: extents scaled by a, heading swept over [0, pi]
//   C: center offset (a, b), heading pi/4
//   D: extents (l, w) = (a, b), heading pi/4
struct CurvePoint
{
  char panel{'A'};
  double a{0.0};
  double b{0.0};
  double theta{0.0};
  double coupled_iou{0.0};
  double od_iou{0.0};
};

struct CurveOptions
{
  std::vector<double> offsets{0.5, 1.0, 2.0, 3.0, 3.9};
  std::vector<double> scales{0.5, 0.75, 1.25, 1.5, 2.0};
  int theta_samples{181};
  double xy_extent{3.0};
  double xy_step{0.25};
  double wl_min{0.5};
  double wl_max{5.0};
  double wl_step{0.25};
};

Box3D curve_reference_box();
std::vector<CurvePoint> orientation_curves(const CurveOptions & options = {});
void write_curves_csv(std::ostream & os, const std::vector<CurvePoint> & points);

GridSpec grid_from_json(const nlohmann::json & j, const GridSpec & defaults = {});

}  // namespace pillardet

#endif  // PILLARDET__HARNESS_HPP_
