// SPDX-License-Identifier: Apache-2.0
#include "retr/geometry/camera.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace retr::geom {

namespace {

double det3(const std::array<double, 9>& m) {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

}  // namespace

Camera::Camera(double fx, double fy, double cx, double cy, const std::array<double, 9>& rotation,
               const Vec3& translation, int width, int height)
    : fx_(fx), fy_(fy), cx_(cx), cy_(cy), rot_(rotation), t_(translation),
      width_(width), height_(height) {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("Camera: focal lengths must be positive (fx=" +
                                std::to_string(fx) + ", fy=" + std::to_string(fy) + ")");
  }
  if (width <= 0 || height <= 0) throw std::invalid_argument("Camera: empty image");
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw std::invalid_argument("Camera: principal point outside the image");
  }
  // R^T R = I and det R = +1, both within 1e-9
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0;
      for (int k = 0; k < 3; ++k) dot += rot_[k * 3 + i] * rot_[k * 3 + j];
      double expect = i == j ? 1.0 : 0.0;
      if (std::fabs(dot - expect) > 1e-9) {
        throw std::invalid_argument("Camera: extrinsic rotation is not orthonormal");
      }
    }
  }
  if (std::fabs(det3(rot_) - 1.0) > 1e-9) {
    throw std::invalid_argument("Camera: extrinsic rotation has det != +1");
  }
}

Camera Camera::look_at(const Vec3& position, const Vec3& target, double fx, double fy,
                       double cx, double cy, int width, int height) {
  Vec3 forward = (target - position).normalized();
  Vec3 up{0, 1, 0};
  if (std::fabs(forward.dot(up)) > 0.999) up = Vec3{0, 0, 1};
  Vec3 right = forward.cross(up).normalized();
  Vec3 down = forward.cross(right);
  std::array<double, 9> rot = {right.x,   right.y,   right.z,    //
                               down.x,    down.y,    down.z,     //
                               forward.x, forward.y, forward.z};
  // t = -R C so that R C + t = 0
  Vec3 t{-(rot[0] * position.x + rot[1] * position.y + rot[2] * position.z),
         -(rot[3] * position.x + rot[4] * position.y + rot[5] * position.z),
         -(rot[6] * position.x + rot[7] * position.y + rot[8] * position.z)};
  return Camera(fx, fy, cx, cy, rot, t, width, height);
}

Vec3 Camera::center() const {
  // -R^T t
  return {-(rot_[0] * t_.x + rot_[3] * t_.y + rot_[6] * t_.z),
          -(rot_[1] * t_.x + rot_[4] * t_.y + rot_[7] * t_.z),
          -(rot_[2] * t_.x + rot_[5] * t_.y + rot_[8] * t_.z)};
}

Vec3 Camera::to_camera(const Vec3& p) const {
  return {rot_[0] * p.x + rot_[1] * p.y + rot_[2] * p.z + t_.x,
          rot_[3] * p.x + rot_[4] * p.y + rot_[5] * p.z + t_.y,
          rot_[6] * p.x + rot_[7] * p.y + rot_[8] * p.z + t_.z};
}

Vec3 Camera::to_world_dir(const Vec3& d) const {
  return {rot_[0] * d.x + rot_[3] * d.y + rot_[6] * d.z,
          rot_[1] * d.x + rot_[4] * d.y + rot_[7] * d.z,
          rot_[2] * d.x + rot_[5] * d.y + rot_[8] * d.z};
}

Ray generate_ray(const Camera& cam, double u, double v, double near, double far) {
  if (u < 0.0 || u >= cam.width() || v < 0.0 || v >= cam.height()) {
    throw std::invalid_argument("generate_ray: pixel (" + std::to_string(u) + "," +
                                std::to_string(v) + ") outside image " +
                                std::to_string(cam.width()) + "x" + std::to_string(cam.height()));
  }
  if (!(near > 0.0) || !(near < far)) {
    throw std::invalid_argument("generate_ray: need 0 < near < far");
  }
  Vec3 d_cam{(u + 0.5 - cam.cx()) / cam.fx(), (v + 0.5 - cam.cy()) / cam.fy(), 1.0};
  Ray ray;
  ray.origin = cam.center();
  ray.direction = cam.to_world_dir(d_cam).normalized();
  ray.near = near;
  ray.far = far;
  return ray;
}

Projection project(const Vec3& point, const Camera& cam) {
  Vec3 pc = cam.to_camera(point);
  Projection pr;
  pr.depth = pc.z;
  if (pc.z <= 1e-9) return pr;  // at or behind the camera; flagged, not thrown
  pr.u = cam.fx() * pc.x / pc.z + cam.cx() - 0.5;
  pr.v = cam.fy() * pc.y / pc.z + cam.cy() - 0.5;
  pr.valid = true;
  return pr;
}

}  // namespace retr::geom
