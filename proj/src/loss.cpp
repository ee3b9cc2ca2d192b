// SPDX-License-Identifier: Apache-2.0
#include "retr/harness/loss.hpp"

#include <stdexcept>

namespace retr::harness {

using ad::Tensor;

LossBreakdown loss_total(ad::Tape& tape, const std::vector<render::RenderOutputs>& pred,
                         const std::vector<std::array<double, 3>>& gt_colors,
                         const std::vector<double>& gt_depths, double alpha, int global_s,
                         int global_s1) {
  if (pred.empty()) throw std::invalid_argument("loss_total: empty batch");
  if (gt_colors.size() != pred.size() || gt_depths.size() != pred.size()) {
    throw std::invalid_argument("loss_total: prediction/ground-truth count mismatch");
  }
  if (alpha < 0.0) throw std::invalid_argument("loss_total: negative depth weight");

  int s1_local = 0;
  for (double d : gt_depths) {
    if (d > 0.0) ++s1_local;
  }
  int s = global_s > 0 ? global_s : static_cast<int>(pred.size());
  int s1 = global_s1 >= 0 ? global_s1 : s1_local;

  Tensor color_sum = Tensor::scalar(0.0);
  Tensor depth_sum = Tensor::scalar(0.0);
  for (size_t r = 0; r < pred.size(); ++r) {
    Tensor gt({1, 3}, {gt_colors[r][0], gt_colors[r][1], gt_colors[r][2]});
    Tensor err = tape.sub(pred[r].color, gt);
    color_sum = tape.add(color_sum, tape.sqrt(tape.sum(tape.mul(err, err))));
    if (gt_depths[r] > 0.0) {
      depth_sum = tape.add(
          depth_sum, tape.abs(tape.sub(pred[r].depth, Tensor::scalar(gt_depths[r]))));
    }
  }

  LossBreakdown out;
  out.rays = static_cast<int>(pred.size());
  out.valid_depth_rays = s1_local;
  Tensor color_term = tape.mul(color_sum, 1.0 / s);
  out.color_term = color_term.value();
  if (s1 > 0) {
    Tensor depth_mean = tape.mul(depth_sum, 1.0 / s1);
    out.depth_term = depth_mean.value();
    out.total = tape.add(color_term, tape.mul(depth_mean, alpha));
  } else {
    out.depth_term = 0.0;
    out.total = color_term;
  }
  return out;
}

}  // namespace retr::harness
