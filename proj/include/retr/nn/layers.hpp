// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "retr/nn/param_store.hpp"

namespace retr::nn {

/// Affine layer W [in,out] + b [1,out], applied to row batches.
struct LinearIds {
  int w = -1;
  int b = -1;
};

LinearIds make_linear(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng);
ad::Tensor linear(ad::Tape& tape, const Binding& p, const LinearIds& ids, const ad::Tensor& x);

struct LayerNormIds {
  int gamma = -1;
  int beta = -1;
};

LayerNormIds make_layer_norm(ParamStore& store, const std::string& prefix, int dim);
ad::Tensor layer_norm(ad::Tape& tape, const Binding& p, const LayerNormIds& ids,
                      const ad::Tensor& x, double eps = 1e-6);

/// Fully connected network. widths = {in, hidden..., out}; ReLU between
/// layers, nothing after the last. Optional layer norm on the input, which
/// the feature-fusion block uses to tame its heterogeneous concat input.
struct MlpParams {
  std::vector<int> widths;
  std::vector<LinearIds> layers;
  bool input_norm = false;
  LayerNormIds norm;
};

MlpParams make_mlp(ParamStore& store, const std::string& prefix, std::vector<int> widths,
                   Rng& rng, bool input_norm = false);
ad::Tensor mlp_forward(ad::Tape& tape, const Binding& p, const MlpParams& mlp,
                       const ad::Tensor& x);

}  // namespace retr::nn
