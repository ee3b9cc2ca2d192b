// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "retr/autodiff/tensor.hpp"

namespace retr::render {

/// Continuous positional encoding of a real ray depth t:
///   pe[2k]   = sin(beta t / 10000^(2k/D))
///   pe[2k+1] = cos(beta t / 10000^(2k/D))
/// so pe(ti) . pe(tj) = sum_k cos(beta (tj - ti) / 10000^(2k/D)) depends only
/// on the actual distance between the samples, never on their indices.
inline std::vector<double> continuous_positional_encoding(double t, double beta, int dim) {
  std::vector<double> pe(dim);
  for (int k = 0; k < dim / 2; ++k) {
    double freq = beta / std::pow(10000.0, 2.0 * k / dim);
    pe[2 * k] = std::sin(freq * t);
    pe[2 * k + 1] = std::cos(freq * t);
  }
  return pe;
}

/// Index-based control (the classic transformer table, position = sample
/// index). Kept for the resampling-misalignment comparison tests.
inline std::vector<double> index_positional_encoding(int index, int dim) {
  std::vector<double> pe(dim);
  for (int k = 0; k < dim / 2; ++k) {
    double freq = 1.0 / std::pow(10000.0, 2.0 * k / dim);
    pe[2 * k] = std::sin(freq * index);
    pe[2 * k + 1] = std::cos(freq * index);
  }
  return pe;
}

/// Stacked encodings for a sample list, as a constant [N, dim] tensor.
inline ad::Tensor cpe_tensor(const std::vector<double>& ts, double beta, int dim) {
  std::vector<double> data;
  data.reserve(ts.size() * dim);
  for (double t : ts) {
    auto pe = continuous_positional_encoding(t, beta, dim);
    data.insert(data.end(), pe.begin(), pe.end());
  }
  return ad::Tensor({static_cast<int>(ts.size()), dim}, std::move(data));
}

}  // namespace retr::render
