// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "retr/scenes/sdf.hpp"

namespace retr::scenes {

/// One posed view: RGB image in [0,1], per-pixel ray depth (distance along
/// the unit-direction ray; 0 = no hit), and the camera that produced it.
struct PosedView {
  std::vector<double> image;  // H*W*3 row-major
  std::vector<double> depth;  // H*W, 0 where the ray missed
  geom::Camera camera;

  double pixel(int x, int y, int c) const {
    return image[(static_cast<size_t>(y) * camera.width() + x) * 3 + c];
  }
  double depth_at(int x, int y) const {
    return depth[static_cast<size_t>(y) * camera.width() + x];
  }
};

struct Dataset {
  std::string scene_id;
  AnalyticScene scene;  // embedded so evaluation can query the exact surface
  std::vector<PosedView> views;
  Bounds bounds;
  double near = 0, far = 0;
  int width = 0, height = 0;
  int trace_warnings = 0;  // rays that exhausted the sphere-trace budget
};

/// Renders ground truth with sphere tracing and Lambertian shading:
/// color = albedo * (max(0, n.l) + 0.1 ambient), clamped to [0,1];
/// depth = hit t, 0 on miss. Deterministic; rng_seed is recorded use for
/// future pixel jitter and does not affect the current output.
Dataset generate_dataset(const AnalyticScene& scene, const std::vector<geom::Camera>& cameras,
                         const Bounds& bounds, double near, double far, uint64_t rng_seed);

/// Single-file container (documented in the README): magic "RETRDATA",
/// u32 version, then tagged sections META / CAMS / IMGS / DPTH / END.
/// Cameras serialize as 12 little-endian f64 extrinsics ([R|t] row-major),
/// 9 f64 intrinsics, and 2 u32 sizes. Round-trips are lossless.
void dataset_save(const Dataset& ds, const std::string& path);
Dataset dataset_load(const std::string& path);

/// 8-bit preview next to the dataset; derived artifact, never re-ingested.
void write_view_png(const PosedView& view, const std::string& path);

}  // namespace retr::scenes
