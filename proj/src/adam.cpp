// SPDX-License-Identifier: Apache-2.0
#include "retr/nn/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace retr::nn {

AdamState::AdamState(const ParamStore& store) {
  m_.resize(store.size());
  v_.resize(store.size());
  for (size_t i = 0; i < store.size(); ++i) {
    size_t n = store.value(static_cast<int>(i)).numel();
    m_[i].assign(n, 0.0);
    v_[i].assign(n, 0.0);
  }
}

void AdamState::step(ParamStore& store, const std::vector<std::vector<double>>& grads,
                     double lr) {
  if (grads.size() > store.size()) {
    throw std::invalid_argument("adam_step: more gradient buffers than parameters");
  }
  for (size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].empty()) continue;
    if (grads[i].size() != m_[i].size()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for '" +
                                  store.entry(static_cast<int>(i)).name + "'");
    }
    for (double g : grads[i]) {
      if (!std::isfinite(g)) {
        throw std::domain_error("adam_step: non-finite gradient for '" +
                                store.entry(static_cast<int>(i)).name + "'; step rejected");
      }
    }
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (size_t i = 0; i < store.size(); ++i) {
    const std::vector<double>* g = (i < grads.size() && !grads[i].empty()) ? &grads[i] : nullptr;
    std::vector<double> updated = store.value(static_cast<int>(i)).data();
    for (size_t j = 0; j < updated.size(); ++j) {
      double gj = g ? (*g)[j] : 0.0;
      m_[i][j] = beta1 * m_[i][j] + (1.0 - beta1) * gj;
      v_[i][j] = beta2 * v_[i][j] + (1.0 - beta2) * gj * gj;
      double mhat = m_[i][j] / bc1;
      double vhat = v_[i][j] / bc2;
      updated[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    store.set_value(static_cast<int>(i),
                    ad::Tensor(store.value(static_cast<int>(i)).shape(), std::move(updated)));
  }
}

double cosine_lr(int64_t step, int64_t total_steps, double lr_start, double lr_end) {
  if (total_steps <= 0) throw std::invalid_argument("cosine_lr: total_steps must be positive");
  if (!(lr_start >= lr_end) || !(lr_end > 0.0)) {
    throw std::invalid_argument("cosine_lr: need lr_start >= lr_end > 0");
  }
  if (step < 0) throw std::invalid_argument("cosine_lr: negative step");
  if (step >= total_steps) return lr_end;
  double phase = 3.14159265358979323846 * static_cast<double>(step) /
                 static_cast<double>(total_steps);
  return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(phase));
}

}  // namespace retr::nn
