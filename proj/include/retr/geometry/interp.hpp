// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>

#include "retr/geometry/vec3.hpp"

namespace retr::geom {

/// Tap sets produced by the interpolators. Row indices address a flattened
/// [rows, channels] feature tensor, so the same taps drive both plain value
/// lookups and the differentiable weighted_gather op. invalid taps have all
/// indices -1 and zero weights (the out-of-bounds = zero-feature contract).
struct Taps4 {
  std::array<int32_t, 4> index{-1, -1, -1, -1};
  std::array<double, 4> weight{0, 0, 0, 0};
  bool valid = false;
};

struct Taps8 {
  std::array<int32_t, 8> index{-1, -1, -1, -1, -1, -1, -1, -1};
  std::array<double, 8> weight{0, 0, 0, 0, 0, 0, 0, 0};
  bool valid = false;
};

/// Bilinear taps into an H x W grid flattened row-major (row v, column u).
/// (u, v) live in pixel-index space: integer coordinates hit lattice points
/// exactly. Out of [0, W-1] x [0, H-1] -> invalid.
Taps4 bilinear_taps(int height, int width, double u, double v);

/// Trilinear taps into an R^3 voxel grid from coordinates in [-1,1]^3
/// (align-corners: -1 and +1 map to the boundary voxel centers). Flattened
/// index layout: ((ix * R) + iy) * R + iz.
Taps8 trilinear_taps(int resolution, const Vec3& normalized);

/// Plain (non-differentiable) sampling; writes `channels` values into out,
/// zeros when invalid. Returns the validity flag.
bool bilinear_sample(const double* grid, int height, int width, int channels, double u, double v,
                     double* out);
bool trilinear_sample(const double* volume, int resolution, int channels, const Vec3& normalized,
                      double* out);

}  // namespace retr::geom
