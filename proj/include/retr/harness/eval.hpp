// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "retr/renderer/render.hpp"

namespace retr::harness {

/// Depth accuracy over pixels with valid ground truth: mean absolute error
/// plus the fraction (in percent) within 1% / 2% / 4% of the scene extent.
struct DepthEval {
  double mae = 0;
  double acc_1pct = 0, acc_2pct = 0, acc_4pct = 0;
  int valid_pixels = 0;
  bool empty = true;
};
DepthEval eval_depth(const std::vector<double>& pred, const std::vector<double>& gt,
                     double scene_extent);

/// Excess kurtosis of the attention-weighted depth distribution,
/// mu4 / sigma^4 - 3; a one-hot distribution (sigma = 0) reports +infinity.
double attention_kurtosis(const std::vector<double>& attention, const std::vector<double>& t);

/// Back-projects every valid-depth pixel along its camera ray and keeps the
/// points inside the scene bounds.
std::vector<geom::Vec3> fuse_point_cloud(const std::vector<std::vector<double>>& depth_maps,
                                         const std::vector<geom::Camera>& cameras,
                                         const geom::Bounds& bounds, double near, double far);

/// accuracy  = mean |sdf| over predicted points (exact distance to surface)
/// completeness = mean over surface samples of the nearest predicted point
/// chamfer  = mean of the two. Nearest neighbors via an exact expanding-ring
/// grid search. Empty clouds flag infinite completeness.
struct ChamferEval {
  double accuracy = 0;
  double completeness = 0;
  double chamfer = 0;
  bool empty_cloud = false;
};
ChamferEval chamfer_eval(const std::vector<geom::Vec3>& points,
                         const scenes::AnalyticScene& scene, int n_surface_samples,
                         uint64_t seed);

/// Brute-force O(n*m) completeness, kept as the independent oracle for the
/// grid search.
double completeness_bruteforce(const std::vector<geom::Vec3>& points,
                               const std::vector<geom::Vec3>& surface_samples);

/// One fully rendered view plus per-pixel attention kurtosis.
struct ViewRender {
  std::vector<double> image;     // H*W*3
  std::vector<double> depth;     // H*W
  std::vector<double> kurtosis;  // H*W
};
ViewRender render_view(const render::Model& model, const ext::SceneContext& ctx,
                       const geom::Camera& camera, double near, double far,
                       const render::SamplingConfig& scfg);

struct EvalReport {
  double depth_mae = 0;
  double acc_1pct = 0, acc_2pct = 0, acc_4pct = 0;
  double psnr = 0;
  double mean_kurtosis = 0;
  double pc_accuracy = 0, pc_completeness = 0, pc_chamfer = 0;
  int eval_views = 0;
  int hit_rays = 0;
  bool depth_empty = false;

  std::string to_text() const;
  static std::string csv_header();
  std::string csv_row() const;
};

/// Renders the eval views from the given source views and aggregates every
/// metric; renderer-agnostic (both flavours produce the same report shape).
EvalReport evaluate(const render::Model& model, const scenes::Dataset& ds,
                    const std::vector<int>& eval_views, const std::vector<int>& source_views,
                    const render::SamplingConfig& scfg, int n_surface_samples, uint64_t seed);

void write_ply(const std::string& path, const std::vector<geom::Vec3>& points);

}  // namespace retr::harness
