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

#ifndef PILLARDET__LOSSES_HPP_
#define PILLARDET__LOSSES_HPP_

#include "pillardet/geom.hpp"
#include "pillardet/head.hpp"
#include "pillardet/pillars.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace pillardet
{

// Regression targets at one object-center cell.
struct PositiveCell
{
  int row{0};
  int col{0};
  int label{0};
  std::array<double, 2> offset{};
  double z{0.0};
  std::array<double, 3> log_size{};  // (log w, log l, log h)
  std::array<double, 2> rot{};       // (sin, cos)
  Box3D gt{};
};

struct TargetMaps
{
  int rows{0};
  int cols{0};
  int num_classes{0};
  int stride{8};
  GridSpec spec{};
  std::vector<double> heatmap;       // H x W x classes
  std::vector<std::uint8_t> mask;    // H x W
  std::vector<PositiveCell> positives;  // row-major

  std::size_t num_centers() const { return positives.size(); }
};

struct CellGradient
{
  int row{0};
  int col{0};
  std::array<double, 2> offset{};
  double z{0.0};
  std::array<double, 3> size{};
  std::array<double, 2> rot{};
  double iou{0.0};
};

struct LossReport
{
  double cls{0.0};
  double iou{0.0};
  double od_iou{0.0};
  double off{0.0};
  double z{0.0};
  double size{0.0};
  double ori{0.0};
  double total{0.0};
  double lambda{0.25};
  // d total / d regression outputs at every positive cell. The IoU target is treated as
  // a constant, so box outputs receive no gradient through the IoU branch.
  std::vector<CellGradient> grads;
};

inline constexpr double kFocalAlpha = 2.0;
inline constexpr double kFocalBeta = 4.0;
inline constexpr double kDefaultLambda = 0.25;

// Penalty-reduced focal loss over all cells, normalized by max(1, #centers). Predictions
// are clamped to [1e-6, 1 - 1e-6].
double focal_heatmap(const std::vector<double> & pred, const std::vector<double> & target);

struct L1Terms
{
  double off{0.0};
  double z{0.0};
  double size{0.0};
  double ori{0.0};
  // per positive cell, gradients of each term w.r.t. its own channels
  std::vector<CellGradient> grads;
};

// Sum of absolute errors over each term's channels, averaged over positive cells.
L1Terms l1_terms(const HeadOutput & pred, const TargetMaps & targets);

// L1 between the IoU map and the encoded 3D IoU of each decoded box with its target box.
double iou_pred_loss(const HeadOutput & pred, const TargetMaps & targets, std::vector<double> * grad = nullptr);

struct OdIouLoss
{
  double value{0.0};
  std::vector<BoxGradient> box_grads;  // d loss / d decoded box, per positive cell
};

// Mean of (1 - value) over positive cells using the orientation-decoupled family.
OdIouLoss od_iou_loss(const std::vector<Box3D> & pred, const std::vector<Box3D> & gt, IouKind kind);

LossReport total_loss(
  const HeadOutput & pred, const TargetMaps & targets, double lambda = kDefaultLambda,
  IouKind kind = IouKind::IoU);

// cls + iou + lambda * (od_iou + off + z + size + ori), in exactly this evaluation order.
double combine_terms(const LossReport & r, double lambda);

// Decoded boxes at the positive cells, in target order.
std::vector<Box3D> decode_positive_boxes(const HeadOutput & pred, const TargetMaps & targets);

struct GradientCheck
{
  double max_rel_error{0.0};
  std::size_t checked{0};
  std::size_t skipped{0};  // components whose one-sided differences disagree (kinks)
};

// Central differences of the regression part of total_loss (IoU targets held fixed)
// against LossReport::grads. Relative error uses max(|analytic|, |numeric|, 1e-6).
GradientCheck check_gradients(
  const HeadOutput & pred, const TargetMaps & targets, double lambda = kDefaultLambda,
  IouKind kind = IouKind::IoU, double h = 1e-5);

}  // namespace pillardet

#endif  // PILLARDET__LOSSES_HPP_
