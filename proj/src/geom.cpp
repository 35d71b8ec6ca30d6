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

#include "pillardet/geom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <tuple>

namespace pillardet
{

namespace
{
constexpr double kMergeTol = 1e-9;
constexpr double kMinArea = 1e-12;

double cross(const Vec2 & o, const Vec2 & a, const Vec2 & b)
{
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool near(const Vec2 & a, const Vec2 & b)
{
  return std::abs(a.x - b.x) <= kMergeTol && std::abs(a.y - b.y) <= kMergeTol;
}

void push_unique(std::vector<Vec2> & out, const Vec2 & p)
{
  if (out.empty() || !near(out.back(), p)) {
    out.push_back(p);
  }
}

// Intersection of segment p->q with the infinite line through a->b.
Vec2 line_hit(const Vec2 & p, const Vec2 & q, const Vec2 & a, const Vec2 & b)
{
  const double dp = cross(a, b, p);
  const double dq = cross(a, b, q);
  const double t = dp / (dp - dq);
  return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

bool finite_all(std::initializer_list<double> values)
{
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

// Derivative of min(a, b) with respect to a.
double dmin_first(double a, double b)
{
  if (a < b) return 1.0;
  if (a > b) return 0.0;
  return 0.5;
}

// Derivative of max(a, b) with respect to a.
double dmax_first(double a, double b)
{
  if (a > b) return 1.0;
  if (a < b) return 0.0;
  return 0.5;
}

}  // namespace

bool is_valid(const BoxBEV & box)
{
  return finite_all({box.cx, box.cy, box.l, box.w, box.theta}) && box.l > 0.0 && box.w > 0.0;
}

bool is_valid(const Box3D & box)
{
  return is_valid(box.bev()) && std::isfinite(box.cz) && std::isfinite(box.h) && box.h > 0.0;
}

void validate(const BoxBEV & box)
{
  if (!is_valid(box)) {
    throw std::invalid_argument("invalid BEV box: extents must be positive and fields finite");
  }
}

void validate(const Box3D & box)
{
  if (!is_valid(box)) {
    throw std::invalid_argument("invalid 3D box: extents must be positive and fields finite");
  }
}

double ConvexPolygon::area() const
{
  if (vertices.size() < 3) {
    return 0.0;
  }
  double twice = 0.0;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const auto & a = vertices[i];
    const auto & b = vertices[(i + 1) % vertices.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

ConvexPolygon corners(const BoxBEV & box)
{
  const double c = std::cos(box.theta);
  const double s = std::sin(box.theta);
  const double hl = 0.5 * box.l;
  const double hw = 0.5 * box.w;
  // local (+l, -w), (+l, +w), (-l, +w), (-l, -w) is counter-clockwise
  constexpr std::array<std::array<double, 2>, 4> signs{{{1, -1}, {1, 1}, {-1, 1}, {-1, -1}}};
  ConvexPolygon poly;
  poly.vertices.reserve(4);
  for (const auto & sg : signs) {
    const double u = sg[0] * hl;
    const double v = sg[1] * hw;
    poly.vertices.push_back({box.cx + c * u - s * v, box.cy + s * u + c * v});
  }
  return poly;
}

ConvexPolygon clip_convex(const ConvexPolygon & subject, const ConvexPolygon & clip)
{
  std::vector<Vec2> current = subject.vertices;
  const auto & cv = clip.vertices;
  for (std::size_t e = 0; e < cv.size() && current.size() >= 3; ++e) {
    const Vec2 & a = cv[e];
    const Vec2 & b = cv[(e + 1) % cv.size()];
    std::vector<Vec2> next;
    next.reserve(current.size() + 2);
    for (std::size_t i = 0; i < current.size(); ++i) {
      const Vec2 & p = current[i];
      const Vec2 & q = current[(i + 1) % current.size()];
      const bool p_in = cross(a, b, p) >= 0.0;
      const bool q_in = cross(a, b, q) >= 0.0;
      if (p_in) {
        push_unique(next, p);
        if (!q_in) {
          push_unique(next, line_hit(p, q, a, b));
        }
      } else if (q_in) {
        push_unique(next, line_hit(p, q, a, b));
      }
    }
    while (next.size() > 1 && near(next.front(), next.back())) {
      next.pop_back();
    }
    current = std::move(next);
  }
  ConvexPolygon out;
  if (current.size() >= 3) {
    out.vertices = std::move(current);
  }
  return out;
}

double intersect_area(const BoxBEV & a, const BoxBEV & b)
{
  // Clip in a fixed argument order so the result is bitwise symmetric.
  const auto key = [](const BoxBEV & x) { return std::tie(x.cx, x.cy, x.l, x.w, x.theta); };
  const bool swap = key(b) < key(a);
  const double area = clip_convex(corners(swap ? b : a), corners(swap ? a : b)).area();
  return area < kMinArea ? 0.0 : area;
}

double iou_bev(const BoxBEV & a, const BoxBEV & b)
{
  const double inter = intersect_area(a, b);
  if (inter <= 0.0) {
    return 0.0;
  }
  const double uni = (a.l * a.w + b.l * b.w) - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D & a, const Box3D & b)
{
  const double z_lo = std::max(a.cz - 0.5 * a.h, b.cz - 0.5 * b.h);
  const double z_hi = std::min(a.cz + 0.5 * a.h, b.cz + 0.5 * b.h);
  const double dz = z_hi - z_lo;
  if (dz <= 0.0) {
    return 0.0;
  }
  const double inter = intersect_area(a.bev(), b.bev()) * dz;
  if (inter <= 0.0) {
    return 0.0;
  }
  const double uni = a.l * a.w * a.h + b.l * b.w * b.h - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

OdIouResult od_iou_family(const Box3D & pred, const Box3D & gt, IouKind kind)
{
  // Express the prediction in the ground-truth frame; gt is centered at the origin there.
  const double c = std::cos(gt.theta);
  const double s = std::sin(gt.theta);
  const double dx = pred.cx - gt.cx;
  const double dy = pred.cy - gt.cy;
  const std::array<double, 3> pc{c * dx + s * dy, -s * dx + c * dy, pred.cz - gt.cz};
  const std::array<double, 3> ps{pred.l, pred.w, pred.h};
  const std::array<double, 3> gs{gt.l, gt.w, gt.h};

  std::array<double, 3> plo{}, phi{}, glo{}, ghi{};
  std::array<double, 3> ov{}, d_ov_hi{}, d_ov_lo{};
  std::array<double, 3> en{}, d_en_hi{}, d_en_lo{};
  for (int k = 0; k < 3; ++k) {
    plo[k] = pc[k] - 0.5 * ps[k];
    phi[k] = pc[k] + 0.5 * ps[k];
    glo[k] = -0.5 * gs[k];
    ghi[k] = 0.5 * gs[k];
    const double raw = std::min(phi[k], ghi[k]) - std::max(plo[k], glo[k]);
    if (raw >= 0.0) {
      ov[k] = raw;
      d_ov_hi[k] = dmin_first(phi[k], ghi[k]);
      d_ov_lo[k] = -dmax_first(plo[k], glo[k]);
    }
    en[k] = std::max(phi[k], ghi[k]) - std::min(plo[k], glo[k]);
    d_en_hi[k] = dmax_first(phi[k], ghi[k]);
    d_en_lo[k] = -dmin_first(plo[k], glo[k]);
  }

  const double inter = ov[0] * ov[1] * ov[2];
  const double vp = ps[0] * ps[1] * ps[2];
  const double vg = gs[0] * gs[1] * gs[2];
  const double uni = vp + vg - inter;
  const double iou = inter / uni;

  // Gradients w.r.t. the interval bounds (hi, lo) of each axis.
  std::array<double, 3> g_hi{}, g_lo{};
  double value = iou;

  double enclose = 1.0;
  double rho2 = 0.0;
  double diag2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    enclose *= en[k];
    rho2 += pc[k] * pc[k];
    diag2 += en[k] * en[k];
  }
  if (kind == IouKind::GIoU) {
    value = iou - (enclose - uni) / enclose;
  } else if (kind == IouKind::DIoU) {
    value = iou - rho2 / diag2;
  }

  for (int k = 0; k < 3; ++k) {
    const int a = (k + 1) % 3;
    const int b = (k + 2) % 3;
    const double ov_rest = ov[a] * ov[b];
    const double ps_rest = ps[a] * ps[b];
    const double en_rest = en[a] * en[b];
    for (int side = 0; side < 2; ++side) {
      const double d_ov = side == 0 ? d_ov_hi[k] : d_ov_lo[k];
      const double d_vp = side == 0 ? ps_rest : -ps_rest;
      const double d_en = side == 0 ? d_en_hi[k] : d_en_lo[k];
      const double d_inter = d_ov * ov_rest;
      const double d_uni = d_vp - d_inter;
      double d = (d_inter * uni - inter * d_uni) / (uni * uni);
      if (kind == IouKind::GIoU) {
        const double d_enclose = d_en * en_rest;
        d += (d_uni * enclose - uni * d_enclose) / (enclose * enclose);
      } else if (kind == IouKind::DIoU) {
        const double d_rho2 = pc[k];  // d(center)/d(bound) = 1/2
        const double d_diag2 = 2.0 * en[k] * d_en;
        d -= (d_rho2 * diag2 - rho2 * d_diag2) / (diag2 * diag2);
      }
      (side == 0 ? g_hi : g_lo)[k] = d;
    }
  }

  // hi = center + size/2, lo = center - size/2
  std::array<double, 3> g_center{}, g_size{};
  for (int k = 0; k < 3; ++k) {
    g_center[k] = g_hi[k] + g_lo[k];
    g_size[k] = 0.5 * (g_hi[k] - g_lo[k]);
  }

  OdIouResult out;
  out.value = value;
  out.grad.cx = c * g_center[0] - s * g_center[1];
  out.grad.cy = s * g_center[0] + c * g_center[1];
  out.grad.cz = g_center[2];
  out.grad.l = g_size[0];
  out.grad.w = g_size[1];
  out.grad.h = g_size[2];
  out.grad.theta = 0.0;
  return out;
}

namespace
{

struct Interval
{
  double lo;
  double hi;
};

// Range of x for which (x, y) lies inside the box; empty when lo > hi.
Interval row_span(const BoxBEV & box, double y, Interval clamp)
{
  const double c = std::cos(box.theta);
  const double s = std::sin(box.theta);
  Interval span = clamp;
  // |u.(p - c)| <= l/2 with u = (c, s); |v.(p - c)| <= w/2 with v = (-s, c)
  const auto constrain = [&](double coef_x, double offset, double half) {
    if (std::abs(coef_x) < 1e-15) {
      if (std::abs(offset) > half) {
        span = {1.0, 0.0};
      }
      return;
    }
    double a = (-half - offset) / coef_x;
    double b = (half - offset) / coef_x;
    if (a > b) std::swap(a, b);
    span.lo = std::max(span.lo, a);
    span.hi = std::min(span.hi, b);
  };
  const double dy = y - box.cy;
  // u.(p - c) = c (x - cx) + s dy  =>  coefficient c on x, offset (s dy - c cx)
  constrain(c, s * dy - c * box.cx, 0.5 * box.l);
  constrain(-s, c * dy + s * box.cx, 0.5 * box.w);
  return span;
}

// Number of lattice centers (j + 0.5) * cell inside [lo, hi].
std::int64_t count_centers(Interval span, double cell)
{
  if (span.lo > span.hi) {
    return 0;
  }
  const auto first = static_cast<std::int64_t>(std::ceil(span.lo / cell - 0.5));
  const auto last = static_cast<std::int64_t>(std::floor(span.hi / cell - 0.5));
  return last >= first ? last - first + 1 : 0;
}

Interval bounds_x(const ConvexPolygon & p)
{
  Interval r{p.vertices[0].x, p.vertices[0].x};
  for (const auto & v : p.vertices) {
    r.lo = std::min(r.lo, v.x);
    r.hi = std::max(r.hi, v.x);
  }
  return r;
}

Interval bounds_y(const ConvexPolygon & p)
{
  Interval r{p.vertices[0].y, p.vertices[0].y};
  for (const auto & v : p.vertices) {
    r.lo = std::min(r.lo, v.y);
    r.hi = std::max(r.hi, v.y);
  }
  return r;
}

}  // namespace

double rasterize_iou_oracle(const BoxBEV & a, const BoxBEV & b, double cell)
{
  if (!(cell > 0.0)) {
    throw std::invalid_argument("rasterize_iou_oracle: cell must be positive");
  }
  const auto pa = corners(a);
  const auto pb = corners(b);
  const Interval ax = bounds_x(pa), bx = bounds_x(pb);
  const Interval ay = bounds_y(pa), by = bounds_y(pb);
  const Interval xs{std::min(ax.lo, bx.lo) - cell, std::max(ax.hi, bx.hi) + cell};
  const double y_lo = std::min(ay.lo, by.lo);
  const double y_hi = std::max(ay.hi, by.hi);

  const auto row_first = static_cast<std::int64_t>(std::floor(y_lo / cell)) - 1;
  const auto row_last = static_cast<std::int64_t>(std::ceil(y_hi / cell)) + 1;
  std::int64_t n_a = 0, n_b = 0, n_ab = 0;
  for (std::int64_t r = row_first; r <= row_last; ++r) {
    const double y = (static_cast<double>(r) + 0.5) * cell;
    const Interval sa = row_span(a, y, xs);
    const Interval sb = row_span(b, y, xs);
    n_a += count_centers(sa, cell);
    n_b += count_centers(sb, cell);
    n_ab += count_centers({std::max(sa.lo, sb.lo), std::min(sa.hi, sb.hi)}, cell);
  }
  const std::int64_t uni = n_a + n_b - n_ab;
  if (uni == 0) {
    return 0.0;
  }
  return static_cast<double>(n_ab) / static_cast<double>(uni);
}

}  // namespace pillardet
