// SPDX-License-Identifier: Apache-2.0
#include "retr/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace retr::nn {

using ad::Tensor;

LinearIds make_linear(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng) {
  LinearIds ids;
  double stddev = std::sqrt(2.0 / (in + out));
  ids.w = store.add_gaussian(prefix + ".w", {in, out}, stddev, rng);
  ids.b = store.add_zeros(prefix + ".b", {1, out});
  return ids;
}

Tensor linear(ad::Tape& tape, const Binding& p, const LinearIds& ids, const Tensor& x) {
  return tape.add(tape.matmul(x, p[ids.w]), p[ids.b]);
}

LayerNormIds make_layer_norm(ParamStore& store, const std::string& prefix, int dim) {
  LayerNormIds ids;
  ids.gamma = store.add_full(prefix + ".gamma", {1, dim}, 1.0);
  ids.beta = store.add_zeros(prefix + ".beta", {1, dim});
  return ids;
}

Tensor layer_norm(ad::Tape& tape, const Binding& p, const LayerNormIds& ids, const Tensor& x,
                  double eps) {
  if (x.rank() != 2) throw std::invalid_argument("layer_norm: expected rank-2 input");
  int n = x.shape()[0];
  Tensor mu = tape.reshape(tape.mean_axis(x, 1), {n, 1});
  Tensor centered = tape.sub(x, mu);
  Tensor var = tape.reshape(tape.mean_axis(tape.mul(centered, centered), 1), {n, 1});
  Tensor normed = tape.div(centered, tape.sqrt(tape.add(var, Tensor::scalar(eps))));
  return tape.add(tape.mul(normed, p[ids.gamma]), p[ids.beta]);
}

MlpParams make_mlp(ParamStore& store, const std::string& prefix, std::vector<int> widths,
                   Rng& rng, bool input_norm) {
  if (widths.size() < 2) throw std::invalid_argument("make_mlp: need at least in/out widths");
  MlpParams mlp;
  mlp.widths = std::move(widths);
  for (size_t i = 0; i + 1 < mlp.widths.size(); ++i) {
    mlp.layers.push_back(make_linear(store, prefix + ".l" + std::to_string(i), mlp.widths[i],
                                     mlp.widths[i + 1], rng));
  }
  mlp.input_norm = input_norm;
  if (input_norm) mlp.norm = make_layer_norm(store, prefix + ".ln", mlp.widths[0]);
  return mlp;
}

Tensor mlp_forward(ad::Tape& tape, const Binding& p, const MlpParams& mlp, const Tensor& x) {
  if (x.rank() != 2 || x.shape()[1] != mlp.widths.front()) {
    throw std::invalid_argument("mlp_forward: input width " + ad::shape_str(x.shape()) +
                                " does not match first layer width " +
                                std::to_string(mlp.widths.front()));
  }
  Tensor h = x;
  if (mlp.input_norm) h = layer_norm(tape, p, mlp.norm, h);
  for (size_t i = 0; i < mlp.layers.size(); ++i) {
    h = linear(tape, p, mlp.layers[i], h);
    if (i + 1 < mlp.layers.size()) h = tape.relu(h);
  }
  return h;
}

}  // namespace retr::nn
