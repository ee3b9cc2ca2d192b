// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

namespace retr::render {

using Rgb = std::array<double, 3>;

struct VolumeRenderOut {
  Rgb color{0, 0, 0};
  std::vector<double> weights;  // w_i = T_i (1 - exp(-sigma_i))
};

/// Classical volume rendering with unitless opacities:
///   w_i = T_i (1 - exp(-sigma_i)),  T_i = exp(-sum_{j<i} sigma_j)
/// Negative opacities are rejected.
VolumeRenderOut classical_volume_render(const std::vector<double>& sigmas,
                                        const std::vector<Rgb>& colors);

/// Per-point color as a weight-blended sum of the colors projected from the
/// source views; weights must already be softmax-normalized over views.
Rgb blend_projected_colors(const std::vector<double>& weights_per_view,
                           const std::vector<Rgb>& projected_rgb);

/// Evaluates the generalized rendering sum with the weight function
/// specialized to transmittance x alpha (each weight recomputed from its own
/// partial sum) and returns the max absolute RGB deviation from the
/// classical recurrence. Identically zero math, two code paths.
double generalized_render_specialcase_check(const std::vector<double>& sigmas,
                                            const std::vector<Rgb>& colors);

}  // namespace retr::render
