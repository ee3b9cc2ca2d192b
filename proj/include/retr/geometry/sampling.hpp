// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "retr/geometry/camera.hpp"

namespace retr::geom {

/// Strictly increasing depths along a ray plus the corresponding world
/// positions x_i = o + t_i d.
struct RaySamples {
  Ray ray;
  std::vector<double> t;
  std::vector<Vec3> x;

  int count() const { return static_cast<int>(t.size()); }
};

/// n >= 2 samples between near and far: deterministic bin midpoints, or one
/// uniform draw per bin when stratified.
RaySamples sample_coarse(const Ray& ray, int n, bool stratified, uint64_t rng_seed);

/// Importance samples n_fine new depths from the piecewise-constant PDF that
/// `attn` induces over the coarse bins (bin edges at midpoints between
/// consecutive coarse depths, closed by near/far), then merges them with the
/// coarse depths, sorted and deduplicated within 1e-9. attn must be
/// non-negative and sum to 1 within 1e-6.
RaySamples sample_fine_from_attention(const RaySamples& coarse, const std::vector<double>& attn,
                                      int n_fine, uint64_t rng_seed);

}  // namespace retr::geom
