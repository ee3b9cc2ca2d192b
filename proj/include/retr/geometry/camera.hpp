// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "retr/geometry/vec3.hpp"

namespace retr::geom {

/// Pinhole camera: 3x3 intrinsics (fx, fy, cx, cy; zero skew) and a 3x4
/// world-to-camera extrinsic [R|t], x_cam = R x_world + t. Pixel-center
/// convention: continuous coordinate (u, v) == (u, v) names the center of
/// pixel column u, row v, i.e. projection subtracts the half-pixel offset
/// that ray generation adds.
class Camera {
 public:
  Camera(double fx, double fy, double cx, double cy, const std::array<double, 9>& rotation,
         const Vec3& translation, int width, int height);

  /// Camera on a ring of given radius around the origin, looking at the
  /// target point, world +y as up reference.
  static Camera look_at(const Vec3& position, const Vec3& target, double fx, double fy,
                        double cx, double cy, int width, int height);

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }
  int width() const { return width_; }
  int height() const { return height_; }
  const std::array<double, 9>& rotation() const { return rot_; }
  const Vec3& translation() const { return t_; }

  /// Optical center in world coordinates: -R^T t.
  Vec3 center() const;

  Vec3 to_camera(const Vec3& p_world) const;   // R p + t
  Vec3 to_world_dir(const Vec3& d_cam) const;  // R^T d

 private:
  double fx_, fy_, cx_, cy_;
  std::array<double, 9> rot_;
  Vec3 t_;
  int width_, height_;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit
  double near = 0, far = 0;

  Vec3 at(double t) const { return origin + direction * t; }
};

/// Back-projects a pixel into a world ray; direction R^T K^-1 (u+.5, v+.5, 1)
/// normalized. The pixel must lie inside the image.
Ray generate_ray(const Camera& cam, double u, double v, double near, double far);

struct Projection {
  double u = 0, v = 0;
  double depth = 0;    // z in the camera frame
  bool valid = false;  // false when the point is at or behind the camera
};

/// Perspective projection with behind-camera flagging (depth <= 1e-9).
Projection project(const Vec3& point, const Camera& cam);

}  // namespace retr::geom
