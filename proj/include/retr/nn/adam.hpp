// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "retr/nn/param_store.hpp"

namespace retr::nn {

/// Adam with bias correction, float64 state. Moments mirror the parameter
/// layout of the store the state was created for.
class AdamState {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(const ParamStore& store);

  /// One update over all parameters. grads holds one flat buffer per
  /// parameter (empty = zero gradient). A non-finite gradient anywhere
  /// rejects the whole step and leaves parameters and state untouched.
  void step(ParamStore& store, const std::vector<std::vector<double>>& grads, double lr);

  int64_t steps_taken() const { return t_; }

 private:
  std::vector<std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

/// Cosine decay: lr_end + 0.5 (lr_start - lr_end)(1 + cos(pi step/total)).
/// Steps past total clamp to lr_end.
double cosine_lr(int64_t step, int64_t total_steps, double lr_start, double lr_end);

}  // namespace retr::nn
