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

#ifndef PILLARDET__HEAD_HPP_
#define PILLARDET__HEAD_HPP_

#include "pillardet/geom.hpp"
#include "pillardet/pillars.hpp"

#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace pillardet
{

// Per-cell maps of the center head, row-major H x W with channels innermost.
struct HeadOutput
{
  int rows{0};
  int cols{0};
  int num_classes{0};
  std::vector<double> heatmap;  // H x W x classes, post-sigmoid
  std::vector<double> offset;   // H x W x 2, (x, y) sub-cell offsets in cells
  std::vector<double> z;        // H x W x 1, box center height in meters
  std::vector<double> size;     // H x W x 3, (log w, log l, log h)
  std::vector<double> rot;      // H x W x 2, (sin, cos)
  std::vector<double> iou;      // H x W x 1, encoded IoU in [-1, 1]

  static HeadOutput zeros(int rows, int cols, int num_classes);
  std::size_t cell(int r, int c) const
  {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) +
           static_cast<std::size_t>(c);
  }
  double heat(int r, int c, int k) const
  {
    return heatmap[cell(r, c) * static_cast<std::size_t>(num_classes) + static_cast<std::size_t>(k)];
  }
  void validate() const;
};

struct Detection
{
  Box3D box{};
  int label{0};
  double score{0.0};
  double rectified_score{0.0};
  // Cell the detection was decoded from; used for deterministic ordering.
  int row{0};
  int col{0};
};

// Box regressed at one cell. Decoding is shared by inference and the losses.
Box3D decode_box(const HeadOutput & out, int row, int col, const GridSpec & spec, int stride);

/// Top-k 3x3 local maxima of the class heatmaps with score > 0. On plateaus the
/// earliest cell in row-major order wins. Ordered by (score desc, row, col, class).
std::vector<Detection> decode(const HeadOutput & out, const GridSpec & spec, int stride, std::size_t k);

inline constexpr double kRectifyEps = 1e-6;

// S^(1 - beta) * W^beta with W = clamp((iou_pred + 1) / 2, eps, 1).
double rectify(double score, double iou_pred, double beta);
// Sets rectified_score from the IoU map at each detection's cell.
void rectify(std::vector<Detection> & dets, const HeadOutput & out, double beta);
void rectify(std::vector<Detection> & dets, const HeadOutput & out, const std::vector<double> & beta_per_class);

double encode_iou_target(double w);
double decode_iou_target(double t);

struct NmsConfig
{
  enum class Mode { ClassAgnostic, ClassSpecific };
  Mode mode{Mode::ClassAgnostic};
  double score_threshold{0.1};
  double overlap_threshold{0.2};
  std::vector<double> class_thresholds{};  // indexed by label in class-specific mode

  static NmsConfig class_agnostic(double score_threshold = 0.1, double overlap = 0.2);
  static NmsConfig class_specific(std::vector<double> thresholds);
};

// Greedy suppression by BEV IoU in rectified-score order (stable for ties).
std::vector<Detection> nms_rotated(std::vector<Detection> dets, const NmsConfig & config);

// {"box":[cx,cy,cz,l,w,h,theta],"label":..,"score":..,"rectified_score":..,"scene_id":..}
void write_jsonl(std::ostream & os, const std::vector<Detection> & dets, const std::string & scene_id);
std::vector<Detection> read_jsonl(std::istream & is);

}  // namespace pillardet

#endif  // PILLARDET__HEAD_HPP_
