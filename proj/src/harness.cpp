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

#include "pillardet/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace pillardet
{

namespace
{

class Rng
{
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal()
  {
    // Box-Muller on our own uniforms so sequences match across standard libraries.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

private:
  std::mt19937_64 gen_;
};

struct ClassShape
{
  double l, w, h;
};

constexpr std::array<ClassShape, kNumClasses> kShapes{{
  {3.9, 1.6, 1.5},  // car
  {0.8, 0.6, 1.7},  // pedestrian
  {1.8, 0.6, 1.7},  // cyclist
}};

bool footprint_inside(const Box3D & box, const GridSpec & spec, double margin)
{
  for (const auto & v : corners(box.bev()).vertices) {
    if (v.x < spec.x.min + margin || v.x >= spec.x.max - margin || v.y < spec.y.min + margin ||
        v.y >= spec.y.max - margin) {
      return false;
    }
  }
  return box.cz - 0.5 * box.h >= spec.z.min && box.cz + 0.5 * box.h < spec.z.max;
}

Point sample_surface(const Box3D & box, Rng & rng, double sigma)
{
  // Four side faces and the roof, weighted by area.
  const std::array<double, 5> areas{box.l * box.h, box.l * box.h, box.w * box.h, box.w * box.h, box.l * box.w};
  double total = 0.0;
  for (const double a : areas) total += a;
  double pick = rng.uniform() * total;
  std::size_t face = 0;
  while (face + 1 < areas.size() && pick >= areas[face]) {
    pick -= areas[face];
    ++face;
  }
  double u = rng.uniform(-0.5, 0.5) * box.l;
  double v = rng.uniform(-0.5, 0.5) * box.w;
  double z = rng.uniform(-0.5, 0.5) * box.h;
  switch (face) {
    case 0: v = 0.5 * box.w; break;
    case 1: v = -0.5 * box.w; break;
    case 2: u = 0.5 * box.l; break;
    case 3: u = -0.5 * box.l; break;
    default: z = 0.5 * box.h; break;
  }
  const double c = std::cos(box.theta);
  const double s = std::sin(box.theta);
  Point p;
  p.x = static_cast<float>(box.cx + c * u - s * v + sigma * rng.normal());
  p.y = static_cast<float>(box.cy + s * u + c * v + sigma * rng.normal());
  p.z = static_cast<float>(box.cz + z + sigma * rng.normal());
  p.intensity = static_cast<float>(rng.uniform());
  return p;
}

int pick_label(Rng & rng)
{
  const double u = rng.uniform();
  if (u < 0.6) return kCar;
  if (u < 0.85) return kPedestrian;
  return kCyclist;
}

}  // namespace

SyntheticScene generate_scene(
  std::uint64_t seed, const GridSpec & spec, int n_objects, double clutter_density,
  const SceneOptions & options)
{
  spec.validate();
  if (n_objects < 0 || clutter_density < 0.0) {
    throw std::invalid_argument("generate_scene: counts must be non-negative");
  }
  Rng rng(seed);
  SyntheticScene scene;
  scene.seed = seed;
  const double ground = std::clamp(options.ground_z, spec.z.min + 0.05, spec.z.max - 2.0);
  const double min_sep = 3.0 * options.fusion_cell;

  for (int i = 0; i < n_objects; ++i) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const int label = pick_label(rng);
      const auto & shape = kShapes[static_cast<std::size_t>(label)];
      Box3D box;
      box.l = shape.l * rng.uniform(0.9, 1.1);
      box.w = shape.w * rng.uniform(0.9, 1.1);
      box.h = shape.h * rng.uniform(0.9, 1.1);
      box.cx = rng.uniform(spec.x.min, spec.x.max);
      box.cy = rng.uniform(spec.y.min, spec.y.max);
      box.cz = ground + 0.5 * box.h;
      box.theta = rng.uniform(-std::numbers::pi, std::numbers::pi);
      if (!footprint_inside(box, spec, 0.05)) {
        continue;
      }
      const bool clear = std::none_of(scene.boxes.begin(), scene.boxes.end(), [&](const Box3D & o) {
        return std::hypot(o.cx - box.cx, o.cy - box.cy) < min_sep || intersect_area(o.bev(), box.bev()) > 0.0;
      });
      if (!clear) {
        continue;
      }
      scene.boxes.push_back(box);
      scene.labels.push_back(label);
      break;
    }
  }

  for (const auto & box : scene.boxes) {
    const int n = options.occlusion ? static_cast<int>(rng.uniform() * options.points_per_object)
                                    : std::max(1, options.points_per_object);
    for (int k = 0; k < n; ++k) {
      scene.cloud.points.push_back(sample_surface(box, rng, options.noise_sigma));
    }
  }

  const auto clutter =
    static_cast<std::size_t>(std::llround(clutter_density * spec.x.extent() * spec.y.extent()));
  for (std::size_t k = 0; k < clutter; ++k) {
    Point p;
    p.x = static_cast<float>(rng.uniform(spec.x.min, spec.x.max));
    p.y = static_cast<float>(rng.uniform(spec.y.min, spec.y.max));
    p.z = static_cast<float>(ground + options.noise_sigma * rng.normal());
    p.intensity = static_cast<float>(rng.uniform());
    scene.cloud.points.push_back(p);
  }
  return scene;
}

bool point_in_box(const Box3D & box, double x, double y, double z, double tol)
{
  const double c = std::cos(box.theta);
  const double s = std::sin(box.theta);
  const double dx = x - box.cx;
  const double dy = y - box.cy;
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  return std::abs(u) <= 0.5 * box.l + tol && std::abs(v) <= 0.5 * box.w + tol &&
         std::abs(z - box.cz) <= 0.5 * box.h + tol;
}

std::array<double, 2> Pose2D::apply(double x, double y) const
{
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {c * x - s * y + tx, s * x + c * y + ty};
}

Pose2D operator*(const Pose2D & a, const Pose2D & b)
{
  const auto t = a.apply(b.tx, b.ty);
  return {a.yaw + b.yaw, t[0], t[1]};
}

PointCloud accumulate_sweeps(const SweepSet & sweeps)
{
  PointCloud out;
  double prev = 0.0;
  for (std::size_t i = 0; i < sweeps.size(); ++i) {
    const double dt = sweeps[i].time_offset;
    if (!(dt >= 0.0) || (i > 0 && dt < prev)) {
      throw std::invalid_argument("sweep time offsets must be non-negative and ascending");
    }
    prev = dt;
  }
  for (const auto & sweep : sweeps) {
    const bool identity = sweep.pose.yaw == 0.0 && sweep.pose.tx == 0.0 && sweep.pose.ty == 0.0;
    for (const auto & p : sweep.cloud.points) {
      Point q = p;
      if (!identity) {
        const auto xy = sweep.pose.apply(p.x, p.y);
        q.x = static_cast<float>(xy[0]);
        q.y = static_cast<float>(xy[1]);
      }
      q.dt = static_cast<float>(sweep.time_offset);
      out.points.push_back(q);
    }
  }
  return out;
}

SyntheticScene augment(const SyntheticScene & scene, const std::vector<AugmentOp> & ops)
{
  SyntheticScene out = scene;
  std::vector<std::array<double, 3>> pts;
  pts.reserve(out.cloud.size());
  for (const auto & p : out.cloud.points) {
    pts.push_back({p.x, p.y, p.z});
  }
  for (const auto & op : ops) {
    switch (op.kind) {
      case AugmentOp::Kind::FlipX:
        for (auto & p : pts) p[1] = -p[1];
        for (auto & b : out.boxes) {
          b.cy = -b.cy;
          b.theta = -b.theta;
        }
        break;
      case AugmentOp::Kind::FlipY:
        for (auto & p : pts) p[0] = -p[0];
        for (auto & b : out.boxes) {
          b.cx = -b.cx;
          b.theta = std::numbers::pi - b.theta;
        }
        break;
      case AugmentOp::Kind::Rotate: {
        const double c = std::cos(op.value);
        const double s = std::sin(op.value);
        const auto rot = [&](double & x, double & y) {
          const double nx = c * x - s * y;
          const double ny = s * x + c * y;
          x = nx;
          y = ny;
        };
        for (auto & p : pts) rot(p[0], p[1]);
        for (auto & b : out.boxes) {
          rot(b.cx, b.cy);
          b.theta += op.value;
        }
        break;
      }
      case AugmentOp::Kind::Scale:
        if (!(op.value > 0.0)) {
          throw std::invalid_argument("scale factor must be positive");
        }
        for (auto & p : pts) {
          for (auto & v : p) v *= op.value;
        }
        for (auto & b : out.boxes) {
          b.cx *= op.value;
          b.cy *= op.value;
          b.cz *= op.value;
          b.l *= op.value;
          b.w *= op.value;
          b.h *= op.value;
        }
        break;
      case AugmentOp::Kind::Translate:
        for (auto & p : pts) {
          for (int k = 0; k < 3; ++k) p[static_cast<std::size_t>(k)] += op.shift[static_cast<std::size_t>(k)];
        }
        for (auto & b : out.boxes) {
          b.cx += op.shift[0];
          b.cy += op.shift[1];
          b.cz += op.shift[2];
        }
        break;
    }
  }
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out.cloud.points[i].x = static_cast<float>(pts[i][0]);
    out.cloud.points[i].y = static_cast<float>(pts[i][1]);
    out.cloud.points[i].z = static_cast<float>(pts[i][2]);
  }
  return out;
}

double gaussian_radius(double l_cells, double w_cells, double min_overlap)
{
  const double height = l_cells;
  const double width = w_cells;
  const double b1 = height + width;
  const double c1 = width * height * (1.0 - min_overlap) / (1.0 + min_overlap);
  const double r1 = (b1 + std::sqrt(b1 * b1 - 4.0 * c1)) / 2.0;
  const double a2 = 4.0;
  const double b2 = 2.0 * (height + width);
  const double c2 = (1.0 - min_overlap) * width * height;
  const double r2 = (b2 + std::sqrt(b2 * b2 - 4.0 * a2 * c2)) / 2.0;
  const double a3 = 4.0 * min_overlap;
  const double b3 = -2.0 * min_overlap * (height + width);
  const double c3 = (min_overlap - 1.0) * width * height;
  const double r3 = (b3 + std::sqrt(b3 * b3 - 4.0 * a3 * c3)) / 2.0;
  return std::min({r1, r2, r3});
}

TargetMaps assemble_targets(
  const std::vector<Box3D> & boxes, const std::vector<int> & labels, const GridSpec & spec,
  int stride, int num_classes)
{
  if (boxes.size() != labels.size()) {
    throw std::invalid_argument("assemble_targets: one label per box required");
  }
  TargetMaps t;
  t.rows = spec.rows(stride);
  t.cols = spec.cols(stride);
  t.num_classes = num_classes;
  t.stride = stride;
  t.spec = spec;
  const auto cells = static_cast<std::size_t>(t.rows) * static_cast<std::size_t>(t.cols);
  t.heatmap.assign(cells * static_cast<std::size_t>(num_classes), 0.0);
  t.mask.assign(cells, 0);

  const double cell_x = stride * spec.sx;
  const double cell_y = stride * spec.sy;
  for (std::size_t j = 0; j < boxes.size(); ++j) {
    const Box3D & box = boxes[j];
    const int label = labels[j];
    if (label < 0 || label >= num_classes) {
      throw std::invalid_argument("assemble_targets: label out of range");
    }
    const double fx = (box.cx - spec.x.min) / cell_x;
    const double fy = (box.cy - spec.y.min) / cell_y;
    const auto col = static_cast<int>(std::floor(fx));
    const auto row = static_cast<int>(std::floor(fy));
    if (fx < 0.0 || fy < 0.0 || col >= t.cols || row >= t.rows) {
      continue;
    }
    const std::size_t ci = static_cast<std::size_t>(row) * static_cast<std::size_t>(t.cols) +
                           static_cast<std::size_t>(col);
    if (t.mask[ci]) {
      continue;
    }
    t.mask[ci] = 1;

    const double r = std::max<double>(
      kMinGaussianRadius, std::floor(gaussian_radius(box.l / cell_x, box.w / cell_y)));
    const int radius = static_cast<int>(r);
    const double sigma = (2.0 * radius + 1.0) / 6.0;
    for (int dy = -radius; dy <= radius; ++dy) {
      for (int dx = -radius; dx <= radius; ++dx) {
        const int rr = row + dy;
        const int cc = col + dx;
        if (rr < 0 || cc < 0 || rr >= t.rows || cc >= t.cols) {
          continue;
        }
        double g = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        if (g < std::numeric_limits<double>::epsilon()) {
          g = 0.0;
        }
        auto & h = t.heatmap[(static_cast<std::size_t>(rr) * static_cast<std::size_t>(t.cols) +
                              static_cast<std::size_t>(cc)) *
                               static_cast<std::size_t>(num_classes) +
                             static_cast<std::size_t>(label)];
        h = std::max(h, g);
      }
    }

    PositiveCell p;
    p.row = row;
    p.col = col;
    p.label = label;
    p.offset = {fx - col, fy - row};
    p.z = box.cz;
    p.log_size = {std::log(box.w), std::log(box.l), std::log(box.h)};
    p.rot = {std::sin(box.theta), std::cos(box.theta)};
    p.gt = box;
    t.positives.push_back(p);
  }
  std::sort(t.positives.begin(), t.positives.end(), [](const PositiveCell & a, const PositiveCell & b) {
    return std::tie(a.row, a.col) < std::tie(b.row, b.col);
  });
  return t;
}

TargetMaps assemble_targets(const SyntheticScene & scene, const GridSpec & spec, int stride, int num_classes)
{
  return assemble_targets(scene.boxes, scene.labels, spec, stride, num_classes);
}

HeadOutput oracle_head_output(const TargetMaps & targets)
{
  HeadOutput out = HeadOutput::zeros(targets.rows, targets.cols, targets.num_classes);
  out.heatmap = targets.heatmap;
  for (const auto & p : targets.positives) {
    const std::size_t i = out.cell(p.row, p.col);
    out.offset[i * 2 + 0] = p.offset[0];
    out.offset[i * 2 + 1] = p.offset[1];
    out.z[i] = p.z;
    for (std::size_t k = 0; k < 3; ++k) out.size[i * 3 + k] = p.log_size[k];
    out.rot[i * 2 + 0] = p.rot[0];
    out.rot[i * 2 + 1] = p.rot[1];
    out.iou[i] = 1.0;
  }
  return out;
}

Box3D curve_reference_box()
{
  return {0.0, 0.0, 0.0, 3.9, 1.6, 1.5, 0.0};
}

std::vector<CurvePoint> orientation_curves(const CurveOptions & options)
{
  if (options.theta_samples < 2 || !(options.xy_step > 0.0) || !(options.wl_step > 0.0)) {
    throw std::invalid_argument("orientation_curves: bad sampling options");
  }
  const Box3D gt = curve_reference_box();
  std::vector<CurvePoint> out;
  const auto emit = [&](char panel, double a, double b, const Box3D & pred) {
    out.push_back({panel, a, b, pred.theta, iou_bev(pred.bev(), gt.bev()),
                   od_iou_family(pred, gt, IouKind::IoU).value});
  };
  const auto sweep = [&](char panel, double a, Box3D pred) {
    for (int i = 0; i < options.theta_samples; ++i) {
      pred.theta = std::numbers::pi * i / (options.theta_samples - 1);
      emit(panel, a, 0.0, pred);
    }
  };
  for (const double d : options.offsets) {
    Box3D pred = gt;
    pred.cx = d;
    sweep('A', d, pred);
  }
  for (const double s : options.scales) {
    Box3D pred = gt;
    pred.l *= s;
    pred.w *= s;
    sweep('B', s, pred);
  }
  const double quarter = std::numbers::pi / 4.0;
  const auto steps = [](double lo, double hi, double step) {
    return static_cast<int>(std::floor((hi - lo) / step + 1e-9));
  };
  const int nxy = steps(-options.xy_extent, options.xy_extent, options.xy_step);
  for (int iy = 0; iy <= nxy; ++iy) {
    for (int ix = 0; ix <= nxy; ++ix) {
      Box3D pred = gt;
      pred.cx = -options.xy_extent + ix * options.xy_step;
      pred.cy = -options.xy_extent + iy * options.xy_step;
      pred.theta = quarter;
      emit('C', pred.cx, pred.cy, pred);
    }
  }
  const int nwl = steps(options.wl_min, options.wl_max, options.wl_step);
  for (int iw = 0; iw <= nwl; ++iw) {
    for (int il = 0; il <= nwl; ++il) {
      Box3D pred = gt;
      pred.l = options.wl_min + il * options.wl_step;
      pred.w = options.wl_min + iw * options.wl_step;
      pred.theta = quarter;
      emit('D', pred.l, pred.w, pred);
    }
  }
  return out;
}

void write_curves_csv(std::ostream & os, const std::vector<CurvePoint> & points)
{
  os << "panel,a,b,theta,coupled_iou,od_iou\n";
  const auto precision = os.precision(12);
  for (const auto & p : points) {
    os << p.panel << ',' << p.a << ',' << p.b << ',' << p.theta << ',' << p.coupled_iou << ','
       << p.od_iou << '\n';
  }
  os.precision(precision);
}

GridSpec grid_from_json(const nlohmann::json & j, const GridSpec & defaults)
{
  GridSpec g = defaults;
  const auto range = [&](const char * key, Range & r) {
    if (j.contains(key)) {
      const auto v = j.at(key).get<std::vector<double>>();
      if (v.size() != 2) {
        throw std::invalid_argument(std::string(key) + " needs [min, max]");
      }
      r = {v[0], v[1]};
    }
  };
  range("x_range", g.x);
  range("y_range", g.y);
  range("z_range", g.z);
  if (j.contains("pillar")) {
    const auto v = j.at("pillar").get<std::vector<double>>();
    if (v.size() != 2) {
      throw std::invalid_argument("pillar needs [sx, sy]");
    }
    g.sx = v[0];
    g.sy = v[1];
  }
  g.validate();
  return g;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json & j)
{
  PipelineConfig c;
  if (j.contains("model")) {
    c.model = ModelConfig::from_json(j.at("model"));
  }
  c.grid = c.grid.with_pillar(c.model.pillar_size);
  if (j.contains("grid")) {
    c.grid = grid_from_json(j.at("grid"), c.grid);
  }
  if (std::abs(c.grid.sx - c.model.pillar_size) > 1e-9 || std::abs(c.grid.sy - c.model.pillar_size) > 1e-9) {
    throw std::invalid_argument("grid pillar size must equal model pillar_size");
  }
  c.point_channels = j.value("point_channels", c.point_channels);
  if (c.point_channels != 4 && c.point_channels != 5) {
    throw std::invalid_argument("point_channels must be 4 or 5");
  }
  if (j.contains("post")) {
    const auto & p = j.at("post");
    c.post.top_k = p.value("top_k", c.post.top_k);
    if (p.contains("beta")) {
      c.post.beta = p.at("beta").is_array() ? p.at("beta").get<std::vector<double>>()
                                            : std::vector<double>{p.at("beta").get<double>()};
    }
    if (p.contains("nms")) {
      const auto & n = p.at("nms");
      const std::string mode = n.value("mode", "class_agnostic");
      if (mode == "class_agnostic") {
        c.post.nms = NmsConfig::class_agnostic(
          n.value("score_threshold", 0.1), n.value("overlap_threshold", 0.2));
      } else if (mode == "class_specific") {
        c.post.nms = NmsConfig::class_specific(n.at("iou_thresholds").get<std::vector<double>>());
      } else {
        throw std::invalid_argument("unknown nms mode '" + mode + "'");
      }
    }
  }
  if (j.contains("scene")) {
    c.scene_objects = j.at("scene").value("n_objects", c.scene_objects);
    c.clutter_density = j.at("scene").value("clutter_density", c.clutter_density);
  }
  return c;
}

std::vector<Detection> postprocess(const HeadOutput & out, const GridSpec & spec, int stride, const PostConfig & post)
{
  std::vector<Detection> dets = decode(out, spec, stride, post.top_k);
  if (post.beta.size() == 1) {
    rectify(dets, out, post.beta[0]);
  } else {
    rectify(dets, out, post.beta);
  }
  return nms_rotated(std::move(dets), post.nms);
}

namespace
{
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0)
{
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}
}  // namespace

PipelineResult run_pipeline(const PointCloud & cloud, const Model & model, const PipelineConfig & config)
{
  PipelineResult result;
  auto t0 = Clock::now();
  const SparseGrid2D grid = pillarize(cloud, config.grid, model.pillar_params());
  result.timing.pillarize_ms = ms_since(t0);
  result.pillars = grid.size();

  t0 = Clock::now();
  const EncoderOutput enc = model.run_encoder(grid);
  result.timing.encoder_ms = ms_since(t0);
  result.stages = enc.stages;

  t0 = Clock::now();
  const DenseMap2D fused = model.run_neck(enc.sparse8, enc.dense16);
  result.timing.neck_ms = ms_since(t0);

  t0 = Clock::now();
  const HeadOutput out = model.run_head(fused);
  result.timing.head_ms = ms_since(t0);

  t0 = Clock::now();
  result.detections = postprocess(out, config.grid, model.config().fusion_stride(), config.post);
  result.timing.post_ms = ms_since(t0);
  return result;
}

BenchGrid BenchGrid::from_json(const nlohmann::json & j)
{
  BenchGrid g;
  if (j.contains("model")) {
    g.model = ModelConfig::from_json(j.at("model"));
  }
  if (j.contains("grid")) {
    g.grid = grid_from_json(j.at("grid"), g.grid);
  }
  g.n_objects = j.value("n_objects", g.n_objects);
  g.runs = j.value("runs", g.runs);
  g.warmup = j.value("warmup", g.warmup);
  const auto seeds = j.value("seeds", std::vector<std::uint64_t>{0});
  const auto densities = j.value("clutter_densities", std::vector<double>{0.5});
  if (!j.contains("configs")) {
    throw std::invalid_argument("bench grid needs a configs list");
  }
  for (const auto & c : j.at("configs")) {
    for (const double density : densities) {
      for (const auto seed : seeds) {
        BenchCase bc;
        bc.name = c.value("name", std::string("case"));
        bc.backbone = parse_backbone(c.value("backbone", to_string(g.model.backbone)));
        bc.neck = parse_neck(c.value("neck", to_string(g.model.neck.variant)));
        bc.pillar_size = c.value("pillar_size", g.model.pillar_size);
        bc.clutter_density = density;
        bc.seed = seed;
        g.cases.push_back(bc);
      }
    }
  }
  if (g.runs < 1 || g.warmup < 0) {
    throw std::invalid_argument("bench needs runs >= 1 and warmup >= 0");
  }
  return g;
}

namespace
{
double median(std::vector<double> v)
{
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace

std::vector<BenchRow> bench(const BenchGrid & grid)
{
  std::vector<BenchRow> rows;
  for (const auto & bc : grid.cases) {
    PipelineConfig cfg;
    cfg.model = grid.model;
    cfg.model.backbone = bc.backbone;
    cfg.model.neck.variant = bc.neck;
    cfg.model.pillar_size = bc.pillar_size;
    cfg.grid = grid.grid.with_pillar(bc.pillar_size);
    // the scene is drawn on the base grid so every pillar size sees the same points
    const SyntheticScene scene = generate_scene(bc.seed, grid.grid, grid.n_objects, bc.clutter_density);
    const Model model = Model::random(cfg.model, bc.seed);

    std::array<std::vector<double>, 5> samples;
    PipelineResult last;
    for (int i = 0; i < grid.warmup + grid.runs; ++i) {
      last = run_pipeline(scene.cloud, model, cfg);
      if (i < grid.warmup) {
        continue;
      }
      samples[0].push_back(last.timing.pillarize_ms);
      samples[1].push_back(last.timing.encoder_ms);
      samples[2].push_back(last.timing.neck_ms);
      samples[3].push_back(last.timing.head_ms);
      samples[4].push_back(last.timing.post_ms);
    }
    BenchRow row;
    row.config = bc;
    row.pillars = last.pillars;
    row.stages = last.stages;
    row.detections = last.detections.size();
    row.median = {median(samples[0]), median(samples[1]), median(samples[2]), median(samples[3]), median(samples[4])};
    rows.push_back(row);
  }
  return rows;
}

void write_bench_csv(std::ostream & os, const std::vector<BenchRow> & rows)
{
  os << "config,backbone,neck,pillar_size,clutter_density,seed,pillars,"
        "sites_1x,sites_2x,sites_4x,sites_8x,sites_16x,"
        "ms_pillarize,ms_encoder,ms_neck,ms_head,ms_post,ms_total,detections\n";
  for (const auto & r : rows) {
    os << r.config.name << ',' << to_string(r.config.backbone) << ',' << to_string(r.config.neck)
       << ',' << r.config.pillar_size << ',' << r.config.clutter_density << ',' << r.config.seed
       << ',' << r.pillars;
    for (const int stride : {1, 2, 4, 8, 16}) {
      os << ',';
      for (const auto & s : r.stages) {
        if (s.stride == stride) {
          os << s.active_sites;
        }
      }
    }
    os << ',' << r.median.pillarize_ms << ',' << r.median.encoder_ms << ',' << r.median.neck_ms
       << ',' << r.median.head_ms << ',' << r.median.post_ms << ',' << r.median.total_ms() << ','
       << r.detections << '\n';
  }
}

}  // namespace pillardet
