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

#include "pillardet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pillardet
{

namespace
{
constexpr double kProbClamp = 1e-6;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_shapes(const HeadOutput & pred, const TargetMaps & targets)
{
  pred.validate();
  if (pred.rows != targets.rows || pred.cols != targets.cols ||
      pred.num_classes != targets.num_classes) {
    throw std::invalid_argument("head output and target maps disagree in shape");
  }
}
}  // namespace

double focal_heatmap(const std::vector<double> & pred, const std::vector<double> & target)
{
  if (pred.size() != target.size()) {
    throw std::invalid_argument("focal_heatmap: prediction and target sizes differ");
  }
  double pos = 0.0;
  double neg = 0.0;
  std::size_t centers = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred[i], kProbClamp, 1.0 - kProbClamp);
    const double y = target[i];
    if (y == 1.0) {
      pos += -std::pow(1.0 - p, kFocalAlpha) * std::log(p);
      ++centers;
    } else {
      neg += -std::pow(1.0 - y, kFocalBeta) * std::pow(p, kFocalAlpha) * std::log(1.0 - p);
    }
  }
  return (pos + neg) / static_cast<double>(std::max<std::size_t>(centers, 1));
}

std::vector<Box3D> decode_positive_boxes(const HeadOutput & pred, const TargetMaps & targets)
{
  std::vector<Box3D> boxes;
  boxes.reserve(targets.positives.size());
  for (const auto & p : targets.positives) {
    boxes.push_back(decode_box(pred, p.row, p.col, targets.spec, targets.stride));
  }
  return boxes;
}

L1Terms l1_terms(const HeadOutput & pred, const TargetMaps & targets)
{
  check_shapes(pred, targets);
  L1Terms out;
  const auto n = static_cast<double>(std::max<std::size_t>(targets.positives.size(), 1));
  for (const auto & p : targets.positives) {
    const std::size_t i = pred.cell(p.row, p.col);
    CellGradient g;
    g.row = p.row;
    g.col = p.col;
    for (std::size_t k = 0; k < 2; ++k) {
      const double d = pred.offset[i * 2 + k] - p.offset[k];
      out.off += std::abs(d);
      g.offset[k] = sign(d) / n;
    }
    {
      const double d = pred.z[i] - p.z;
      out.z += std::abs(d);
      g.z = sign(d) / n;
    }
    for (std::size_t k = 0; k < 3; ++k) {
      const double d = pred.size[i * 3 + k] - p.log_size[k];
      out.size += std::abs(d);
      g.size[k] = sign(d) / n;
    }
    for (std::size_t k = 0; k < 2; ++k) {
      const double d = pred.rot[i * 2 + k] - p.rot[k];
      out.ori += std::abs(d);
      g.rot[k] = sign(d) / n;
    }
    out.grads.push_back(g);
  }
  out.off /= n;
  out.z /= n;
  out.size /= n;
  out.ori /= n;
  return out;
}

double iou_pred_loss(const HeadOutput & pred, const TargetMaps & targets, std::vector<double> * grad)
{
  check_shapes(pred, targets);
  const auto boxes = decode_positive_boxes(pred, targets);
  const auto n = static_cast<double>(std::max<std::size_t>(targets.positives.size(), 1));
  double loss = 0.0;
  if (grad) {
    grad->assign(targets.positives.size(), 0.0);
  }
  for (std::size_t j = 0; j < targets.positives.size(); ++j) {
    const auto & p = targets.positives[j];
    // constant target: no gradient flows back into the boxes
    const double target = encode_iou_target(iou_3d(boxes[j], p.gt));
    const double d = pred.iou[pred.cell(p.row, p.col)] - target;
    loss += std::abs(d);
    if (grad) {
      (*grad)[j] = sign(d) / n;
    }
  }
  return loss / n;
}

OdIouLoss od_iou_loss(const std::vector<Box3D> & pred, const std::vector<Box3D> & gt, IouKind kind)
{
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("od_iou_loss: prediction and target counts differ");
  }
  OdIouLoss out;
  const auto n = static_cast<double>(std::max<std::size_t>(pred.size(), 1));
  for (std::size_t j = 0; j < pred.size(); ++j) {
    const auto r = od_iou_family(pred[j], gt[j], kind);
    out.value += 1.0 - r.value;
    BoxGradient g = r.grad;
    for (double * v : {&g.cx, &g.cy, &g.cz, &g.l, &g.w, &g.h, &g.theta}) {
      *v = -*v / n;
    }
    out.box_grads.push_back(g);
  }
  out.value /= n;
  return out;
}

double combine_terms(const LossReport & r, double lambda)
{
  return r.cls + r.iou + lambda * (r.od_iou + r.off + r.z + r.size + r.ori);
}

LossReport total_loss(const HeadOutput & pred, const TargetMaps & targets, double lambda, IouKind kind)
{
  check_shapes(pred, targets);
  LossReport report;
  report.lambda = lambda;
  report.cls = focal_heatmap(pred.heatmap, targets.heatmap);

  std::vector<double> iou_grad;
  report.iou = iou_pred_loss(pred, targets, &iou_grad);

  const auto boxes = decode_positive_boxes(pred, targets);
  std::vector<Box3D> gts;
  gts.reserve(targets.positives.size());
  for (const auto & p : targets.positives) {
    gts.push_back(p.gt);
  }
  const OdIouLoss od = od_iou_loss(boxes, gts, kind);
  report.od_iou = od.value;

  const L1Terms l1 = l1_terms(pred, targets);
  report.off = l1.off;
  report.z = l1.z;
  report.size = l1.size;
  report.ori = l1.ori;
  report.total = combine_terms(report, lambda);

  // Chain the box gradients through decode_box.
  const double du = targets.stride * targets.spec.sx;
  const double dv = targets.stride * targets.spec.sy;
  for (std::size_t j = 0; j < targets.positives.size(); ++j) {
    const auto & bg = od.box_grads[j];
    const auto & b = boxes[j];
    CellGradient g = l1.grads[j];
    g.offset[0] = lambda * (g.offset[0] + bg.cx * du);
    g.offset[1] = lambda * (g.offset[1] + bg.cy * dv);
    g.z = lambda * (g.z + bg.cz);
    g.size[0] = lambda * (g.size[0] + bg.w * b.w);
    g.size[1] = lambda * (g.size[1] + bg.l * b.l);
    g.size[2] = lambda * (g.size[2] + bg.h * b.h);
    g.rot[0] = lambda * g.rot[0];
    g.rot[1] = lambda * g.rot[1];
    g.iou = iou_grad[j];
    report.grads.push_back(g);
  }
  return report;
}

namespace
{
// Everything in total_loss that depends on the regression channels, with the IoU
// targets frozen at `iou_targets`.
double regression_part(
  const HeadOutput & pred, const TargetMaps & targets, double lambda, IouKind kind,
  const std::vector<double> & iou_targets)
{
  const auto boxes = decode_positive_boxes(pred, targets);
  std::vector<Box3D> gts;
  for (const auto & p : targets.positives) {
    gts.push_back(p.gt);
  }
  const L1Terms l1 = l1_terms(pred, targets);
  const double od = od_iou_loss(boxes, gts, kind).value;
  const auto n = static_cast<double>(std::max<std::size_t>(targets.positives.size(), 1));
  double iou = 0.0;
  for (std::size_t j = 0; j < targets.positives.size(); ++j) {
    const auto & p = targets.positives[j];
    iou += std::abs(pred.iou[pred.cell(p.row, p.col)] - iou_targets[j]);
  }
  return iou / n + lambda * (od + l1.off + l1.z + l1.size + l1.ori);
}
}  // namespace

GradientCheck check_gradients(
  const HeadOutput & pred, const TargetMaps & targets, double lambda, IouKind kind, double h)
{
  const LossReport report = total_loss(pred, targets, lambda, kind);
  const auto boxes = decode_positive_boxes(pred, targets);
  std::vector<double> frozen;
  for (std::size_t j = 0; j < targets.positives.size(); ++j) {
    frozen.push_back(encode_iou_target(iou_3d(boxes[j], targets.positives[j].gt)));
  }

  GradientCheck out;
  HeadOutput work = pred;
  const double f0 = regression_part(work, targets, lambda, kind, frozen);
  const auto probe = [&](double & slot, double analytic) {
    const double saved = slot;
    slot = saved + h;
    const double fp = regression_part(work, targets, lambda, kind, frozen);
    slot = saved - h;
    const double fm = regression_part(work, targets, lambda, kind, frozen);
    slot = saved;
    const double fwd = (fp - f0) / h;
    const double bwd = (f0 - fm) / h;
    if (std::abs(fwd - bwd) > 1e-3 * std::max(1.0, std::abs(fwd) + std::abs(bwd))) {
      ++out.skipped;
      return;
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic - numeric) / denom);
    ++out.checked;
  };
  for (std::size_t j = 0; j < targets.positives.size(); ++j) {
    const auto & p = targets.positives[j];
    const auto & g = report.grads[j];
    const std::size_t i = work.cell(p.row, p.col);
    probe(work.offset[i * 2 + 0], g.offset[0]);
    probe(work.offset[i * 2 + 1], g.offset[1]);
    probe(work.z[i], g.z);
    for (std::size_t k = 0; k < 3; ++k) probe(work.size[i * 3 + k], g.size[k]);
    probe(work.rot[i * 2 + 0], g.rot[0]);
    probe(work.rot[i * 2 + 1], g.rot[1]);
    probe(work.iou[i], g.iou);
  }
  return out;
}

}  // namespace pillardet
