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
#include "pillardet/harness.hpp"
#include "pillardet/head.hpp"
#include "pillardet/losses.hpp"
#include "pillardet/network.hpp"
#include "pillardet/parallel.hpp"
#include "pillardet/pillars.hpp"
#include "pillardet/weights.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace pd = pillardet;
using nlohmann::json;

namespace
{

json read_json(const std::string & path)
{
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path);
  }
  return json::parse(in);
}

std::ofstream open_out(const std::string & path)
{
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path);
  }
  return out;
}

pd::PipelineConfig load_config(const std::string & path)
{
  return path.empty() ? pd::PipelineConfig{} : pd::PipelineConfig::from_json(read_json(path));
}

pd::Model load_model(const pd::PipelineConfig & cfg, const std::string & weights, std::uint64_t seed)
{
  if (!weights.empty()) {
    return pd::Model::from_weights(cfg.model, pd::WeightStore::load(weights));
  }
  return pd::Model::random(cfg.model, seed);
}

json grid_to_json(const pd::SparseGrid2D & grid)
{
  json sites = json::array();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto f = grid.features(i);
    sites.push_back({{"row", grid.coord(i).row}, {"col", grid.coord(i).col},
                     {"features", std::vector<float>(f.begin(), f.end())}});
  }
  return {{"stride", grid.stride()}, {"rows", grid.rows()}, {"cols", grid.cols()},
          {"channels", grid.channels()}, {"sites", sites}};
}

// Loss surface of a synthetic scene with noisy predictions around the planted truth.
json losscheck(std::uint64_t seed, double lambda)
{
  pd::GridSpec spec;
  spec.x = {-9.6, 9.6};
  spec.y = {-9.6, 9.6};
  const auto scene = pd::generate_scene(seed, spec, 6, 0.0);
  const auto targets = pd::assemble_targets(scene, spec, 8);
  pd::HeadOutput pred = pd::oracle_head_output(targets);

  std::mt19937_64 gen(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::uniform_real_distribution<double> unit(0.01, 0.99);
  for (auto & v : pred.heatmap) v = unit(gen);
  for (auto * m : {&pred.offset, &pred.z, &pred.size, &pred.rot, &pred.iou}) {
    for (auto & v : *m) v += noise(gen);
  }

  json report;
  report["seed"] = seed;
  report["lambda"] = lambda;
  report["positives"] = targets.positives.size();
  bool pass = true;
  for (const auto kind : {pd::IouKind::IoU, pd::IouKind::GIoU, pd::IouKind::DIoU}) {
    const auto r = pd::total_loss(pred, targets, lambda, kind);
    const auto check = pd::check_gradients(pred, targets, lambda, kind);
    const bool identity = r.total == pd::combine_terms(r, lambda);
    const bool ok = identity && check.max_rel_error < 1e-4;
    pass = pass && ok;
    const char * name = kind == pd::IouKind::IoU ? "od_iou" : (kind == pd::IouKind::GIoU ? "od_giou" : "od_diou");
    report["kinds"][name] = {
      {"terms", {{"cls", r.cls}, {"iou", r.iou}, {"od_iou", r.od_iou}, {"off", r.off}, {"z", r.z},
                 {"size", r.size}, {"ori", r.ori}, {"total", r.total}}},
      {"total_identity", identity},
      {"gradient_check", {{"max_rel_error", check.max_rel_error}, {"checked", check.checked},
                          {"skipped_kinks", check.skipped}}},
      {"pass", ok}};
  }
  report["pass"] = pass;
  return report;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Pillar-based 3D detection pipeline tools"};
  app.require_subcommand(1);

  // pillarize
  std::string cloud_path, config_path, weights_path, out_path;
  std::uint64_t seed = 0;
  auto * pillarize = app.add_subcommand("pillarize", "Quantize a point cloud into pillar features");
  pillarize->add_option("cloud", cloud_path, "float32 point cloud")->required()->check(CLI::ExistingFile);
  pillarize->add_option("--config", config_path, "pipeline config JSON");
  pillarize->add_option("--weights", weights_path, "weight container");
  pillarize->add_option("--seed", seed, "seed for random weights when --weights is absent");
  pillarize->add_option("--out", out_path, "output JSON")->required();

  // forward
  std::optional<std::uint64_t> scene_seed;
  auto * forward = app.add_subcommand("forward", "Run the full pipeline and write detections");
  forward->add_option("cloud", cloud_path, "float32 point cloud");
  forward->add_option("--seed", scene_seed, "synthetic scene seed (also seeds random weights)");
  forward->add_option("--config", config_path, "pipeline config JSON");
  forward->add_option("--weights", weights_path, "weight container");
  forward->add_option("--out", out_path, "detections JSONL")->required();
  bool print_timing = false;
  forward->add_flag("--timing", print_timing, "print per-stage timings to stderr");

  // bench
  std::string grid_path;
  auto * bench = app.add_subcommand("bench", "Benchmark a grid of configurations");
  bench->add_option("--grid", grid_path, "bench grid JSON")->required()->check(CLI::ExistingFile);
  bench->add_option("--out", out_path, "CSV output")->required();

  // losscheck
  double lambda = pd::kDefaultLambda;
  auto * loss = app.add_subcommand("losscheck", "Evaluate the loss surface and check gradients");
  loss->add_option("--seed", seed, "scene seed")->required();
  loss->add_option("--lambda", lambda, "regression weight");
  loss->add_option("--out", out_path, "report JSON")->required();

  // nms
  std::string in_path, mode = "class_agnostic";
  double score_threshold = 0.1, overlap = 0.2;
  std::vector<double> class_thresholds{0.8, 0.55, 0.55};
  auto * nms = app.add_subcommand("nms", "Rotated NMS over a detections file");
  nms->add_option("--in", in_path, "detections JSONL")->required()->check(CLI::ExistingFile);
  nms->add_option("--mode", mode, "class_agnostic or class_specific")
    ->check(CLI::IsMember({"class_agnostic", "class_specific"}));
  nms->add_option("--score-threshold", score_threshold);
  nms->add_option("--overlap", overlap, "BEV IoU threshold in class-agnostic mode");
  nms->add_option("--class-thresholds", class_thresholds, "per-class IoU thresholds")->delimiter(',');
  nms->add_option("--out", out_path, "output JSONL")->required();

  // curves
  bool fig5 = false;
  auto * curves = app.add_subcommand("curves", "Orientation coupling curves");
  curves->add_flag("--fig5", fig5, "IoU vs heading / center / size around the canonical car box")->required();
  curves->add_option("--out", out_path, "CSV output")->required();

  // scene
  std::string boxes_path;
  auto * scene = app.add_subcommand("scene", "Write a seeded synthetic point cloud");
  scene->add_option("--seed", seed, "scene seed")->required();
  scene->add_option("--config", config_path, "pipeline config JSON");
  scene->add_option("--out", out_path, "float32 point cloud")->required();
  scene->add_option("--boxes", boxes_path, "planted boxes as JSONL");

  // describe / init-weights
  auto * describe = app.add_subcommand("describe", "List every layer with shapes and parameter counts");
  describe->add_option("--config", config_path, "pipeline config JSON");
  auto * init = app.add_subcommand("init-weights", "Write seeded random weights");
  init->add_option("--config", config_path, "pipeline config JSON");
  init->add_option("--seed", seed, "weight seed");
  init->add_option("--out", out_path, "weight container")->required();

  int threads = 0;
  app.add_option("--threads", threads, "worker count (default: PILLARDET_NUM_THREADS or 1)");

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) {
    pd::set_num_threads(threads);
  }

  try {
    if (*pillarize) {
      const auto cfg = load_config(config_path);
      const auto model = load_model(cfg, weights_path, seed);
      const auto cloud = pd::read_point_cloud(cloud_path, cfg.point_channels);
      const auto grid = pd::pillarize(cloud, cfg.grid, model.pillar_params());
      open_out(out_path) << grid_to_json(grid).dump() << '\n';
      std::cerr << grid.size() << " pillars\n";
    } else if (*forward) {
      if (cloud_path.empty() == !scene_seed) {
        throw std::invalid_argument("forward needs exactly one of <cloud> or --seed");
      }
      const auto cfg = load_config(config_path);
      const auto model = load_model(cfg, weights_path, scene_seed.value_or(0));
      pd::PointCloud cloud;
      std::string scene_id;
      if (scene_seed) {
        // scenes are drawn on the base grid, independent of the model's pillar size
        pd::GridSpec base = cfg.grid.with_pillar(cfg.model.base_pillar);
        cloud = pd::generate_scene(*scene_seed, base, cfg.scene_objects, cfg.clutter_density).cloud;
        scene_id = "seed-" + std::to_string(*scene_seed);
      } else {
        cloud = pd::read_point_cloud(cloud_path, cfg.point_channels);
        scene_id = std::filesystem::path(cloud_path).stem().string();
      }
      const auto result = pd::run_pipeline(cloud, model, cfg);
      auto out = open_out(out_path);
      pd::write_jsonl(out, result.detections, scene_id);
      if (print_timing) {
        const auto & t = result.timing;
        std::cerr << "pillars " << result.pillars << "  pillarize " << t.pillarize_ms << " ms  encoder "
                  << t.encoder_ms << " ms  neck " << t.neck_ms << " ms  head " << t.head_ms
                  << " ms  post " << t.post_ms << " ms  total " << t.total_ms() << " ms\n";
      }
    } else if (*bench) {
      const auto grid = pd::BenchGrid::from_json(read_json(grid_path));
      const auto rows = pd::bench(grid);
      auto out = open_out(out_path);
      pd::write_bench_csv(out, rows);
      pd::write_bench_csv(std::cout, rows);
    } else if (*loss) {
      const auto report = losscheck(seed, lambda);
      open_out(out_path) << report.dump(2) << '\n';
      std::cout << (report["pass"].get<bool>() ? "PASS" : "FAIL") << '\n';
      return report["pass"].get<bool>() ? 0 : 1;
    } else if (*nms) {
      std::ifstream in(in_path);
      auto dets = pd::read_jsonl(in);
      const auto config = mode == "class_agnostic" ? pd::NmsConfig::class_agnostic(score_threshold, overlap)
                                                   : pd::NmsConfig::class_specific(class_thresholds);
      const auto kept = pd::nms_rotated(std::move(dets), config);
      auto out = open_out(out_path);
      pd::write_jsonl(out, kept, std::filesystem::path(in_path).stem().string());
      std::cerr << kept.size() << " detections kept\n";
    } else if (*curves) {
      auto out = open_out(out_path);
      pd::write_curves_csv(out, pd::orientation_curves());
    } else if (*scene) {
      const auto cfg = load_config(config_path);
      const auto s = pd::generate_scene(
        seed, cfg.grid.with_pillar(cfg.model.base_pillar), cfg.scene_objects, cfg.clutter_density);
      pd::write_point_cloud(out_path, s.cloud, cfg.point_channels);
      if (!boxes_path.empty()) {
        std::vector<pd::Detection> planted;
        for (std::size_t i = 0; i < s.boxes.size(); ++i) {
          pd::Detection d;
          d.box = s.boxes[i];
          d.label = s.labels[i];
          d.score = d.rectified_score = 1.0;
          planted.push_back(d);
        }
        auto out = open_out(boxes_path);
        pd::write_jsonl(out, planted, "seed-" + std::to_string(seed));
      }
      std::cerr << s.cloud.size() << " points, " << s.boxes.size() << " boxes\n";
    } else if (*describe) {
      const auto cfg = load_config(config_path);
      std::cout << pd::describe_json(pd::Model::random(cfg.model, 0)).dump(2) << '\n';
    } else if (*init) {
      const auto cfg = load_config(config_path);
      pd::Model::random(cfg.model, seed).weights().save(out_path);
    }
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
