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

#ifndef PILLARDET__GEOM_HPP_
#define PILLARDET__GEOM_HPP_

#include <vector>

namespace pillardet
{

struct Vec2
{
  double x{};
  double y{};
};

// Rotated rectangle on the ground plane. l runs along the heading, w across it.
struct BoxBEV
{
  double cx{};
  double cy{};
  double l{};
  double w{};
  double theta{};
};

struct Box3D
{
  double cx{};
  double cy{};
  double cz{};
  double l{};
  double w{};
  double h{};
  double theta{};

  BoxBEV bev() const { return {cx, cy, l, w, theta}; }
};

bool is_valid(const BoxBEV & box);
bool is_valid(const Box3D & box);
// Throws std::invalid_argument when the box has non-finite fields or non-positive extents.
void validate(const BoxBEV & box);
void validate(const Box3D & box);

// Counter-clockwise vertex list. Empty when the region has no area.
struct ConvexPolygon
{
  std::vector<Vec2> vertices;

  double area() const;
  bool empty() const { return vertices.size() < 3; }
};

ConvexPolygon corners(const BoxBEV & box);

/// Sutherland-Hodgman clip of a convex subject polygon against a convex CCW clip polygon.
/// Consecutive vertices closer than 1e-9 m are merged.
ConvexPolygon clip_convex(const ConvexPolygon & subject, const ConvexPolygon & clip);

// Intersections below 1e-12 m^2 are reported as 0.
double intersect_area(const BoxBEV & a, const BoxBEV & b);
double iou_bev(const BoxBEV & a, const BoxBEV & b);
double iou_3d(const Box3D & a, const Box3D & b);

enum class IouKind { IoU, GIoU, DIoU };

// Derivatives of an IoU-family value with respect to the predicted box parameters.
struct BoxGradient
{
  double cx{};
  double cy{};
  double cz{};
  double l{};
  double w{};
  double h{};
  double theta{};
};

struct OdIouResult
{
  double value{};
  BoxGradient grad{};
};

/// Orientation-decoupled IoU / GIoU / DIoU.
///
/// The prediction's heading is replaced by the ground-truth heading, so both boxes are
/// axis-aligned in the ground-truth frame and the value reduces to an axis-aligned 3D
/// IoU-family score. GIoU uses the 3-axis enclosing box; DIoU subtracts the squared
/// center distance over the squared enclosing-box diagonal.
///
/// The returned gradient is analytic and piecewise: when an interval bound of the two
/// boxes coincides exactly the derivative of min/max is split evenly between both
/// arguments, and an overlap of exactly zero takes the derivative from the overlapping
/// side. grad.theta is always 0.
OdIouResult od_iou_family(const Box3D & pred, const Box3D & gt, IouKind kind);

/// Grid-count IoU: counts centers of a `cell`-sized lattice anchored at the origin that
/// fall inside each box (boundary inclusive). Rows are resolved analytically, so the cost
/// is linear in the number of lattice rows covered.
double rasterize_iou_oracle(const BoxBEV & a, const BoxBEV & b, double cell);

}  // namespace pillardet

#endif  // PILLARDET__GEOM_HPP_
