// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>

#include "retr/nn/layers.hpp"

namespace retr::nn {

/// Multi-head attention parameters: D x D projections for query, key, value
/// and output, each with a bias. model_dim must be divisible by heads.
struct MhaParams {
  int heads = 0;
  int model_dim = 0;
  LinearIds wq, wk, wv, wo;
};

MhaParams make_mha(ParamStore& store, const std::string& prefix, int model_dim, int heads,
                   Rng& rng);

/// Scaled dot-product attention, per-head scale 1/sqrt(D/H).
///
/// mask is a Q x S "permitted" matrix (row-major, 1 = attend). Forbidden
/// pairs get attention weight exactly 0 and contribute nothing to outputs or
/// gradients. A query row with no permitted key is rejected. The attention
/// map [H,Q,S] is always returned; depth rendering consumes it.
std::pair<ad::Tensor, ad::Tensor> mha_forward(ad::Tape& tape, const Binding& p,
                                              const MhaParams& params, const ad::Tensor& query,
                                              const ad::Tensor& key, const ad::Tensor& value,
                                              const std::vector<uint8_t>* mask = nullptr);

}  // namespace retr::nn
