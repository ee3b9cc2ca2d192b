// SPDX-License-Identifier: Apache-2.0
#include "retr/renderer/classical.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace retr::render {

VolumeRenderOut classical_volume_render(const std::vector<double>& sigmas,
                                        const std::vector<Rgb>& colors) {
  if (sigmas.size() != colors.size()) {
    throw std::invalid_argument("classical_volume_render: " + std::to_string(sigmas.size()) +
                                " opacities vs " + std::to_string(colors.size()) + " colors");
  }
  VolumeRenderOut out;
  out.weights.resize(sigmas.size());
  double transmittance = 1.0;
  for (size_t i = 0; i < sigmas.size(); ++i) {
    if (sigmas[i] < 0.0 || !std::isfinite(sigmas[i])) {
      throw std::invalid_argument("classical_volume_render: negative opacity at index " +
                                  std::to_string(i));
    }
    double w = transmittance * (1.0 - std::exp(-sigmas[i]));
    out.weights[i] = w;
    for (int c = 0; c < 3; ++c) out.color[c] += w * colors[i][c];
    transmittance *= std::exp(-sigmas[i]);
  }
  return out;
}

Rgb blend_projected_colors(const std::vector<double>& weights_per_view,
                           const std::vector<Rgb>& projected_rgb) {
  if (weights_per_view.size() != projected_rgb.size()) {
    throw std::invalid_argument("blend_projected_colors: weight/color count mismatch");
  }
  Rgb out{0, 0, 0};
  for (size_t j = 0; j < weights_per_view.size(); ++j) {
    for (int c = 0; c < 3; ++c) out[c] += weights_per_view[j] * projected_rgb[j][c];
  }
  return out;
}

double generalized_render_specialcase_check(const std::vector<double>& sigmas,
                                            const std::vector<Rgb>& colors) {
  // generalized route: W(F_1..F_i) evaluated independently per sample from
  // its own prefix sum
  Rgb general{0, 0, 0};
  for (size_t i = 0; i < sigmas.size(); ++i) {
    double prefix = 0.0;
    for (size_t j = 0; j < i; ++j) prefix += sigmas[j];
    double w = std::exp(-prefix) * (1.0 - std::exp(-sigmas[i]));
    for (int c = 0; c < 3; ++c) general[c] += w * colors[i][c];
  }
  // oracle: the classical running-transmittance recurrence
  VolumeRenderOut classical = classical_volume_render(sigmas, colors);
  double dev = 0.0;
  for (int c = 0; c < 3; ++c) dev = std::max(dev, std::fabs(general[c] - classical.color[c]));
  return dev;
}

}  // namespace retr::render
