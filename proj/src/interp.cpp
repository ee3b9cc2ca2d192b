// SPDX-License-Identifier: Apache-2.0
#include "retr/geometry/interp.hpp"

#include <algorithm>
#include <cmath>

namespace retr::geom {

Taps4 bilinear_taps(int height, int width, double u, double v) {
  Taps4 t;
  if (!(u >= 0.0) || !(u <= width - 1.0) || !(v >= 0.0) || !(v <= height - 1.0)) return t;
  int u0 = std::min(static_cast<int>(u), width - 2);
  int v0 = std::min(static_cast<int>(v), height - 2);
  if (width == 1) u0 = 0;
  if (height == 1) v0 = 0;
  double fu = u - u0, fv = v - v0;
  int u1 = std::min(u0 + 1, width - 1), v1 = std::min(v0 + 1, height - 1);
  t.index = {static_cast<int32_t>(v0 * width + u0), static_cast<int32_t>(v0 * width + u1),
             static_cast<int32_t>(v1 * width + u0), static_cast<int32_t>(v1 * width + u1)};
  t.weight = {(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv};
  t.valid = true;
  return t;
}

Taps8 trilinear_taps(int resolution, const Vec3& p) {
  Taps8 t;
  const int R = resolution;
  if (!(p.x >= -1.0) || !(p.x <= 1.0) || !(p.y >= -1.0) || !(p.y <= 1.0) || !(p.z >= -1.0) ||
      !(p.z <= 1.0)) {
    return t;
  }
  double gx = 0.5 * (p.x + 1.0) * (R - 1);
  double gy = 0.5 * (p.y + 1.0) * (R - 1);
  double gz = 0.5 * (p.z + 1.0) * (R - 1);
  int x0 = std::min(static_cast<int>(gx), R - 2);
  int y0 = std::min(static_cast<int>(gy), R - 2);
  int z0 = std::min(static_cast<int>(gz), R - 2);
  double fx = gx - x0, fy = gy - y0, fz = gz - z0;
  int n = 0;
  for (int dx = 0; dx < 2; ++dx) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dz = 0; dz < 2; ++dz) {
        int ix = x0 + dx, iy = y0 + dy, iz = z0 + dz;
        t.index[n] = static_cast<int32_t>((ix * R + iy) * R + iz);
        t.weight[n] = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
        ++n;
      }
    }
  }
  t.valid = true;
  return t;
}

bool bilinear_sample(const double* grid, int height, int width, int channels, double u, double v,
                     double* out) {
  Taps4 t = bilinear_taps(height, width, u, v);
  std::fill(out, out + channels, 0.0);
  if (!t.valid) return false;
  for (int k = 0; k < 4; ++k) {
    const double* row = grid + static_cast<int64_t>(t.index[k]) * channels;
    for (int c = 0; c < channels; ++c) out[c] += t.weight[k] * row[c];
  }
  return true;
}

bool trilinear_sample(const double* volume, int resolution, int channels, const Vec3& p,
                      double* out) {
  Taps8 t = trilinear_taps(resolution, p);
  std::fill(out, out + channels, 0.0);
  if (!t.valid) return false;
  for (int k = 0; k < 8; ++k) {
    const double* row = volume + static_cast<int64_t>(t.index[k]) * channels;
    for (int c = 0; c < channels; ++c) out[c] += t.weight[k] * row[c];
  }
  return true;
}

}  // namespace retr::geom
