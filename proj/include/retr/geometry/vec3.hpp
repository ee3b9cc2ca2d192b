// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

namespace retr::geom {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    double n = norm();
    return {x / n, y / n, z / n};
  }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// Axis-aligned box; the scene bounding box that volume coordinates are
/// normalized against.
struct Bounds {
  Vec3 min, max;

  Vec3 extent() const { return max - min; }
  double max_extent() const {
    Vec3 e = extent();
    return std::max(e.x, std::max(e.y, e.z));
  }
  bool contains(const Vec3& p, double slack = 0.0) const {
    return p.x >= min.x - slack && p.x <= max.x + slack && p.y >= min.y - slack &&
           p.y <= max.y + slack && p.z >= min.z - slack && p.z <= max.z + slack;
  }
  /// Maps a world point into [-1,1]^3.
  Vec3 to_normalized(const Vec3& p) const {
    Vec3 e = extent();
    return {2.0 * (p.x - min.x) / e.x - 1.0, 2.0 * (p.y - min.y) / e.y - 1.0,
            2.0 * (p.z - min.z) / e.z - 1.0};
  }
};

}  // namespace retr::geom
