// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "retr/renderer/render.hpp"

namespace retr::harness {

struct LossBreakdown {
  ad::Tensor total;      // scalar tensor on the callers' tape
  double color_term = 0; // (1/S) sum ||C - C_g||
  double depth_term = 0; // (1/S1) sum |D - D_g| over valid rays
  int rays = 0;
  int valid_depth_rays = 0;
};

/// L = (1/S) sum ||C - C_g||_2 + alpha (1/S1) sum |D - D_g| with the depth
/// sum restricted to rays whose ground-truth depth is valid (> 0); when no
/// ray has valid depth the term is zero. Pass global_s / global_s1 when the
/// batch is split across tapes so each part is normalized by the full batch
/// counts.
LossBreakdown loss_total(ad::Tape& tape, const std::vector<render::RenderOutputs>& pred,
                         const std::vector<std::array<double, 3>>& gt_colors,
                         const std::vector<double>& gt_depths, double alpha,
                         int global_s = -1, int global_s1 = -1);

}  // namespace retr::harness
