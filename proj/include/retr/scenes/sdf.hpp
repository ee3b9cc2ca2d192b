// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "retr/geometry/camera.hpp"

namespace retr::scenes {

using geom::Bounds;
using geom::Ray;
using geom::Vec3;

using Rgb = std::array<double, 3>;

enum class PrimitiveKind : uint8_t { kSphere = 0, kBox = 1, kRoundedBox = 2 };

/// Axis-aligned analytic primitive. size: sphere radius in size.x; box and
/// rounded-box half extents. For rounded boxes `size` is the outer extent and
/// `rounding` the corner radius (core box = size - rounding per axis).
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kSphere;
  Vec3 center;
  Vec3 size{1, 1, 1};
  double rounding = 0.0;
  Rgb albedo{0.5, 0.5, 0.5};
};

struct AnalyticScene {
  std::string id;
  std::vector<Primitive> primitives;
  Rgb background{0, 0, 0};
  Vec3 light_dir{0, 1, 0};  // unit, pointing toward the light
};

/// Exact signed distance of one primitive.
double primitive_sdf(const Primitive& prim, const Vec3& p);

/// Union SDF: min over primitives, plus the albedo of the nearest one.
struct SdfResult {
  double distance = 0;
  Rgb albedo{0, 0, 0};
};
SdfResult sdf_eval(const AnalyticScene& scene, const Vec3& p);

struct TraceResult {
  bool hit = false;
  double t = 0;
  Vec3 normal{0, 0, 0};
  int iterations = 0;
  bool exhausted = false;  // gave up after the iteration cap
};

/// Sphere tracing from ray.near: steps by the SDF value until |d| < 1e-6 or
/// t passes ray.far. Normals from central differences (eps = 1e-5). Caps at
/// 10^4 iterations and reports exhaustion as a miss.
TraceResult sphere_trace(const AnalyticScene& scene, const Ray& ray);

/// Area-weighted uniform samples on the union surface: points landing
/// strictly inside another primitive are rejected so only the visible
/// boundary is kept.
std::vector<Vec3> sample_surface(const AnalyticScene& scene, int n, uint64_t seed);

/// The built-in desk scene: one sphere and one box inside the unit box,
/// six ring cameras at radius 3, 32x32 images, near 1.5 / far 4.5.
AnalyticScene builtin_scene(const std::string& name);
Bounds builtin_bounds();
std::vector<geom::Camera> ring_cameras(int count, int width, int height);
constexpr double kBuiltinNear = 1.5;
constexpr double kBuiltinFar = 4.5;

}  // namespace retr::scenes
