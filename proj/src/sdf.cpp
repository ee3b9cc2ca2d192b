// SPDX-License-Identifier: Apache-2.0
#include "retr/scenes/sdf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "retr/util/rng.hpp"

namespace retr::scenes {

namespace {

double box_sdf(const Vec3& p, const Vec3& half) {
  Vec3 q{std::fabs(p.x) - half.x, std::fabs(p.y) - half.y, std::fabs(p.z) - half.z};
  Vec3 qpos{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
  return qpos.norm() + std::min(std::max(q.x, std::max(q.y, q.z)), 0.0);
}

}  // namespace

double primitive_sdf(const Primitive& prim, const Vec3& p) {
  Vec3 local = p - prim.center;
  switch (prim.kind) {
    case PrimitiveKind::kSphere:
      return local.norm() - prim.size.x;
    case PrimitiveKind::kBox:
      return box_sdf(local, prim.size);
    case PrimitiveKind::kRoundedBox: {
      Vec3 core{prim.size.x - prim.rounding, prim.size.y - prim.rounding,
                prim.size.z - prim.rounding};
      return box_sdf(local, core) - prim.rounding;
    }
  }
  return 0.0;
}

SdfResult sdf_eval(const AnalyticScene& scene, const Vec3& p) {
  if (scene.primitives.empty()) throw std::invalid_argument("sdf_eval: scene has no primitives");
  SdfResult r;
  r.distance = std::numeric_limits<double>::infinity();
  for (const auto& prim : scene.primitives) {
    double d = primitive_sdf(prim, p);
    if (d < r.distance) {
      r.distance = d;
      r.albedo = prim.albedo;
    }
  }
  return r;
}

TraceResult sphere_trace(const AnalyticScene& scene, const Ray& ray) {
  constexpr double kHitTol = 1e-6;
  constexpr int kMaxIter = 10000;
  TraceResult res;
  double t = ray.near;
  for (res.iterations = 0; res.iterations < kMaxIter; ++res.iterations) {
    if (t > ray.far) return res;
    Vec3 p = ray.at(t);
    double d = sdf_eval(scene, p).distance;
    if (std::fabs(d) < kHitTol) {
      res.hit = true;
      res.t = t;
      const double eps = 1e-5;
      Vec3 n{sdf_eval(scene, {p.x + eps, p.y, p.z}).distance -
                 sdf_eval(scene, {p.x - eps, p.y, p.z}).distance,
             sdf_eval(scene, {p.x, p.y + eps, p.z}).distance -
                 sdf_eval(scene, {p.x, p.y - eps, p.z}).distance,
             sdf_eval(scene, {p.x, p.y, p.z + eps}).distance -
                 sdf_eval(scene, {p.x, p.y, p.z - eps}).distance};
      res.normal = n.normalized();
      return res;
    }
    t += d;
  }
  res.exhausted = true;
  return res;
}

namespace {

double primitive_area(const Primitive& prim) {
  switch (prim.kind) {
    case PrimitiveKind::kSphere:
      return 4.0 * M_PI * prim.size.x * prim.size.x;
    case PrimitiveKind::kBox:
      return 8.0 * (prim.size.x * prim.size.y + prim.size.y * prim.size.z +
                    prim.size.z * prim.size.x);
    case PrimitiveKind::kRoundedBox: {
      double cx = prim.size.x - prim.rounding, cy = prim.size.y - prim.rounding,
             cz = prim.size.z - prim.rounding;
      double faces = 8.0 * (cx * cy + cy * cz + cz * cx);
      double edges = 2.0 * M_PI * prim.rounding * (cx + cy + cz);  // 4 edges per axis, 1/4 each
      double corners = 4.0 * M_PI * prim.rounding * prim.rounding;
      return faces + edges + corners;
    }
  }
  return 0.0;
}

Vec3 sample_sphere_dir(Rng& rng) {
  for (;;) {
    Vec3 v{rng.gaussian(), rng.gaussian(), rng.gaussian()};
    double n = v.norm();
    if (n > 1e-12) return v * (1.0 / n);
  }
}

Vec3 sample_box_surface(const Vec3& half, Rng& rng) {
  double ax = 4.0 * half.y * half.z, ay = 4.0 * half.x * half.z, az = 4.0 * half.x * half.y;
  double u = rng.uniform() * 2.0 * (ax + ay + az);
  double sign = (rng.next_u64() & 1) ? 1.0 : -1.0;
  if (u < 2 * ax) {
    return {sign * half.x, rng.uniform(-half.y, half.y), rng.uniform(-half.z, half.z)};
  }
  if (u < 2 * (ax + ay)) {
    return {rng.uniform(-half.x, half.x), sign * half.y, rng.uniform(-half.z, half.z)};
  }
  return {rng.uniform(-half.x, half.x), rng.uniform(-half.y, half.y), sign * half.z};
}

// Rounded box surface = core box dilated by r: flat faces, quarter-cylinder
// edges, eighth-sphere corners, sampled by exact area.
Vec3 sample_rounded_box_surface(const Primitive& prim, Rng& rng) {
  double r = prim.rounding;
  Vec3 core{prim.size.x - r, prim.size.y - r, prim.size.z - r};
  double faces = 8.0 * (core.x * core.y + core.y * core.z + core.z * core.x);
  double edges = 2.0 * M_PI * r * (core.x + core.y + core.z);
  double corners = 4.0 * M_PI * r * r;
  double u = rng.uniform() * (faces + edges + corners);
  if (u < faces) {
    Vec3 p = sample_box_surface(core, rng);
    // push the face outward along its normal
    if (std::fabs(std::fabs(p.x) - core.x) < 1e-12) p.x += (p.x > 0 ? r : -r);
    else if (std::fabs(std::fabs(p.y) - core.y) < 1e-12) p.y += (p.y > 0 ? r : -r);
    else p.z += (p.z > 0 ? r : -r);
    return p;
  }
  if (u < faces + edges) {
    // pick an axis by edge area, then a quarter arc in the other two axes
    double wx = core.x, wy = core.y, wz = core.z;
    double pick = rng.uniform() * (wx + wy + wz);
    int axis = pick < wx ? 0 : (pick < wx + wy ? 1 : 2);
    double along = rng.uniform(-1.0, 1.0);
    double ang = rng.uniform(0.0, M_PI / 2.0);
    double sa = (rng.next_u64() & 1) ? 1.0 : -1.0;
    double sb = (rng.next_u64() & 1) ? 1.0 : -1.0;
    double ca = std::cos(ang) * r, cb = std::sin(ang) * r;
    Vec3 p;
    if (axis == 0) p = {along * core.x, sa * (core.y + ca), sb * (core.z + cb)};
    if (axis == 1) p = {sa * (core.x + ca), along * core.y, sb * (core.z + cb)};
    if (axis == 2) p = {sa * (core.x + ca), sb * (core.y + cb), along * core.z};
    return p;
  }
  // corner: eighth-sphere around a core corner
  Vec3 dir = sample_sphere_dir(rng);
  Vec3 corner{(dir.x >= 0 ? 1.0 : -1.0) * core.x, (dir.y >= 0 ? 1.0 : -1.0) * core.y,
              (dir.z >= 0 ? 1.0 : -1.0) * core.z};
  return corner + dir * r;
}

}  // namespace

std::vector<Vec3> sample_surface(const AnalyticScene& scene, int n, uint64_t seed) {
  if (n <= 0) return {};
  Rng rng(seed);
  std::vector<double> cum;
  double total = 0;
  for (const auto& prim : scene.primitives) {
    total += primitive_area(prim);
    cum.push_back(total);
  }
  std::vector<Vec3> points;
  points.reserve(n);
  int guard = 0;
  while (static_cast<int>(points.size()) < n && guard < 100 * n) {
    ++guard;
    double u = rng.uniform() * total;
    size_t pi = std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
    pi = std::min(pi, scene.primitives.size() - 1);
    const Primitive& prim = scene.primitives[pi];
    Vec3 p;
    switch (prim.kind) {
      case PrimitiveKind::kSphere:
        p = prim.center + sample_sphere_dir(rng) * prim.size.x;
        break;
      case PrimitiveKind::kBox:
        p = prim.center + sample_box_surface(prim.size, rng);
        break;
      case PrimitiveKind::kRoundedBox:
        p = prim.center + sample_rounded_box_surface(prim, rng);
        break;
    }
    // keep only points on the union boundary
    if (sdf_eval(scene, p).distance > -1e-9) points.push_back(p);
  }
  return points;
}

AnalyticScene builtin_scene(const std::string& name) {
  AnalyticScene scene;
  scene.background = {0.08, 0.09, 0.11};
  scene.light_dir = Vec3{0.45, 0.8, 0.55}.normalized();
  if (name == "sphere-box") {
    scene.id = name;
    Primitive sphere;
    sphere.kind = PrimitiveKind::kSphere;
    sphere.center = {-0.2, 0.02, 0.06};
    sphere.size = {0.21, 0.21, 0.21};
    sphere.albedo = {0.85, 0.35, 0.3};
    Primitive box;
    box.kind = PrimitiveKind::kBox;
    box.center = {0.2, -0.06, -0.1};
    box.size = {0.17, 0.21, 0.15};
    box.albedo = {0.3, 0.45, 0.85};
    scene.primitives = {sphere, box};
    return scene;
  }
  if (name == "three-blobs") {
    scene.id = name;
    Primitive a;
    a.kind = PrimitiveKind::kSphere;
    a.center = {-0.22, -0.1, -0.15};
    a.size = {0.16, 0.16, 0.16};
    a.albedo = {0.9, 0.7, 0.25};
    Primitive b;
    b.kind = PrimitiveKind::kRoundedBox;
    b.center = {0.22, 0.0, 0.05};
    b.size = {0.16, 0.14, 0.16};
    b.rounding = 0.05;
    b.albedo = {0.35, 0.75, 0.45};
    Primitive c;
    c.kind = PrimitiveKind::kBox;
    c.center = {-0.02, 0.2, 0.14};
    c.size = {0.13, 0.1, 0.12};
    c.albedo = {0.55, 0.4, 0.8};
    scene.primitives = {a, b, c};
    return scene;
  }
  throw std::invalid_argument("unknown builtin scene '" + name +
                              "' (available: sphere-box, three-blobs)");
}

Bounds builtin_bounds() { return Bounds{{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}}; }

std::vector<geom::Camera> ring_cameras(int count, int width, int height) {
  std::vector<geom::Camera> cams;
  cams.reserve(count);
  const double radius = 3.0;
  const double elevation = 0.32;  // radians above the equator
  for (int i = 0; i < count; ++i) {
    double ang = 2.0 * M_PI * i / count;
    Vec3 pos{radius * std::cos(ang) * std::cos(elevation), radius * std::sin(elevation),
             radius * std::sin(ang) * std::cos(elevation)};
    double f = 2.0 * width;  // covers the unit box with margin at radius 3
    cams.push_back(geom::Camera::look_at(pos, {0, 0, 0}, f, f, width / 2.0, height / 2.0, width,
                                         height));
  }
  return cams;
}

}  // namespace retr::scenes
