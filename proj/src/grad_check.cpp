// SPDX-License-Identifier: Apache-2.0
#include "retr/autodiff/grad_check.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace retr::ad {

namespace {

double eval_value(const ScalarFn& f, const std::vector<Tensor>& params, size_t pi, size_t ei) {
  Tape tape;
  Tensor out = f(tape, params);
  double v = out.value();
  if (!std::isfinite(v)) {
    throw std::runtime_error("grad_check: non-finite objective at parameter " +
                             std::to_string(pi) + " entry " + std::to_string(ei));
  }
  return v;
}

}  // namespace

double grad_check(const ScalarFn& f, const std::vector<Tensor>& params, double eps) {
  if (!(eps > 0.0) || eps > 1e-2) {
    throw std::invalid_argument("grad_check: eps must lie in (0, 1e-2], got " +
                                std::to_string(eps));
  }
  // Reverse-mode gradients.
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.leaf(p));
  Tensor loss = f(tape, leaves);
  if (loss.numel() != 1) {
    throw std::invalid_argument("grad_check: objective must be scalar");
  }
  Gradients grads = tape.backward(loss);

  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor g_ad = grads.grad(leaves[pi]);
    const auto& base = params[pi].data();
    for (size_t ei = 0; ei < base.size(); ++ei) {
      std::vector<double> bumped = base;
      bumped[ei] = base[ei] + eps;
      std::vector<Tensor> probe = params;
      probe[pi] = Tensor(params[pi].shape(), bumped);
      double f_plus = eval_value(f, probe, pi, ei);
      bumped[ei] = base[ei] - eps;
      probe[pi] = Tensor(params[pi].shape(), bumped);
      double f_minus = eval_value(f, probe, pi, ei);
      double g_fd = (f_plus - f_minus) / (2.0 * eps);
      double rel = std::fabs(g_ad[ei] - g_fd) / std::max(1.0, std::fabs(g_fd));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace retr::ad
