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

#include "pillardet/head.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pillardet
{

HeadOutput HeadOutput::zeros(int rows, int cols, int num_classes)
{
  HeadOutput out;
  out.rows = rows;
  out.cols = cols;
  out.num_classes = num_classes;
  const auto n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  out.heatmap.assign(n * static_cast<std::size_t>(num_classes), 0.0);
  out.offset.assign(n * 2, 0.0);
  out.z.assign(n, 0.0);
  out.size.assign(n * 3, 0.0);
  out.rot.assign(n * 2, 0.0);
  out.iou.assign(n, 0.0);
  return out;
}

void HeadOutput::validate() const
{
  const auto n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (rows < 0 || cols < 0 || num_classes < 1 ||
      heatmap.size() != n * static_cast<std::size_t>(num_classes) || offset.size() != n * 2 ||
      z.size() != n || size.size() != n * 3 || rot.size() != n * 2 || iou.size() != n) {
    throw std::invalid_argument("head output maps do not share one H x W shape");
  }
}

Box3D decode_box(const HeadOutput & out, int row, int col, const GridSpec & spec, int stride)
{
  const std::size_t i = out.cell(row, col);
  Box3D box;
  box.cx = (col + out.offset[i * 2 + 0]) * stride * spec.sx + spec.x.min;
  box.cy = (row + out.offset[i * 2 + 1]) * stride * spec.sy + spec.y.min;
  box.cz = out.z[i];
  box.w = std::exp(out.size[i * 3 + 0]);
  box.l = std::exp(out.size[i * 3 + 1]);
  box.h = std::exp(out.size[i * 3 + 2]);
  box.theta = std::atan2(out.rot[i * 2 + 0], out.rot[i * 2 + 1]);
  return box;
}

namespace
{

bool is_peak(const HeadOutput & out, int r, int c, int k)
{
  const double v = out.heat(r, c, k);
  if (!(v > 0.0)) {
    return false;
  }
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc) {
      if (dr == 0 && dc == 0) {
        continue;
      }
      const int nr = r + dr;
      const int nc = c + dc;
      if (nr < 0 || nc < 0 || nr >= out.rows || nc >= out.cols) {
        continue;
      }
      const double n = out.heat(nr, nc, k);
      const bool before = dr < 0 || (dr == 0 && dc < 0);
      if (before ? !(v > n) : !(v >= n)) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

std::vector<Detection> decode(const HeadOutput & out, const GridSpec & spec, int stride, std::size_t k)
{
  out.validate();
  std::vector<Detection> peaks;
  for (int r = 0; r < out.rows; ++r) {
    for (int c = 0; c < out.cols; ++c) {
      for (int cls = 0; cls < out.num_classes; ++cls) {
        if (is_peak(out, r, c, cls)) {
          Detection d;
          d.label = cls;
          d.score = out.heat(r, c, cls);
          d.rectified_score = d.score;
          d.row = r;
          d.col = c;
          peaks.push_back(d);
        }
      }
    }
  }
  std::sort(peaks.begin(), peaks.end(), [](const Detection & a, const Detection & b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.row != b.row) return a.row < b.row;
    if (a.col != b.col) return a.col < b.col;
    return a.label < b.label;
  });
  if (peaks.size() > k) {
    peaks.resize(k);
  }
  for (auto & d : peaks) {
    d.box = decode_box(out, d.row, d.col, spec, stride);
  }
  return peaks;
}

double rectify(double score, double iou_pred, double beta)
{
  const double w = std::clamp((std::clamp(iou_pred, -1.0, 1.0) + 1.0) / 2.0, kRectifyEps, 1.0);
  return std::pow(score, 1.0 - beta) * std::pow(w, beta);
}

void rectify(std::vector<Detection> & dets, const HeadOutput & out, double beta)
{
  for (auto & d : dets) {
    d.rectified_score = rectify(d.score, out.iou[out.cell(d.row, d.col)], beta);
  }
}

void rectify(
  std::vector<Detection> & dets, const HeadOutput & out, const std::vector<double> & beta_per_class)
{
  for (auto & d : dets) {
    const auto label = static_cast<std::size_t>(d.label);
    if (label >= beta_per_class.size()) {
      throw std::invalid_argument("no rectification factor for label " + std::to_string(d.label));
    }
    d.rectified_score = rectify(d.score, out.iou[out.cell(d.row, d.col)], beta_per_class[label]);
  }
}

double encode_iou_target(double w) { return 2.0 * (w - 0.5); }

double decode_iou_target(double t) { return t / 2.0 + 0.5; }

NmsConfig NmsConfig::class_agnostic(double score_threshold, double overlap)
{
  NmsConfig c;
  c.mode = Mode::ClassAgnostic;
  c.score_threshold = score_threshold;
  c.overlap_threshold = overlap;
  return c;
}

NmsConfig NmsConfig::class_specific(std::vector<double> thresholds)
{
  NmsConfig c;
  c.mode = Mode::ClassSpecific;
  c.class_thresholds = std::move(thresholds);
  return c;
}

std::vector<Detection> nms_rotated(std::vector<Detection> dets, const NmsConfig & config)
{
  const bool agnostic = config.mode == NmsConfig::Mode::ClassAgnostic;
  if (agnostic) {
    std::erase_if(dets, [&](const Detection & d) { return d.rectified_score < config.score_threshold; });
  } else {
    for (const auto & d : dets) {
      if (d.label < 0 || static_cast<std::size_t>(d.label) >= config.class_thresholds.size()) {
        throw std::invalid_argument("no NMS threshold for label " + std::to_string(d.label));
      }
    }
  }
  std::stable_sort(dets.begin(), dets.end(), [](const Detection & a, const Detection & b) {
    return a.rectified_score > b.rectified_score;
  });

  std::vector<Detection> kept;
  for (const auto & d : dets) {
    bool suppressed = false;
    for (const auto & k : kept) {
      if (!agnostic && k.label != d.label) {
        continue;
      }
      const double thresh =
        agnostic ? config.overlap_threshold : config.class_thresholds[static_cast<std::size_t>(d.label)];
      if (iou_bev(k.box.bev(), d.box.bev()) >= thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) {
      kept.push_back(d);
    }
  }
  return kept;
}

void write_jsonl(std::ostream & os, const std::vector<Detection> & dets, const std::string & scene_id)
{
  for (const auto & d : dets) {
    const nlohmann::json j{
      {"box", {d.box.cx, d.box.cy, d.box.cz, d.box.l, d.box.w, d.box.h, d.box.theta}},
      {"label", d.label},
      {"score", d.score},
      {"rectified_score", d.rectified_score},
      {"scene_id", scene_id}};
    os << j.dump() << '\n';
  }
}

std::vector<Detection> read_jsonl(std::istream & is)
{
  std::vector<Detection> dets;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    const auto j = nlohmann::json::parse(line);
    const auto b = j.at("box").get<std::vector<double>>();
    if (b.size() != 7) {
      throw std::runtime_error("detection box must have 7 values");
    }
    Detection d;
    d.box = {b[0], b[1], b[2], b[3], b[4], b[5], b[6]};
    validate(d.box);
    d.label = j.at("label").get<int>();
    d.score = j.at("score").get<double>();
    d.rectified_score = j.value("rectified_score", d.score);
    dets.push_back(d);
  }
  return dets;
}

}  // namespace pillardet
