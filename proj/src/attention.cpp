// SPDX-License-Identifier: Apache-2.0
#include "retr/nn/attention.hpp"

#include <stdexcept>

namespace retr::nn {

MhaParams make_mha(ParamStore& store, const std::string& prefix, int model_dim, int heads,
                   Rng& rng) {
  if (heads <= 0 || model_dim % heads != 0) {
    throw std::invalid_argument("make_mha: model_dim " + std::to_string(model_dim) +
                                " not divisible by heads " + std::to_string(heads));
  }
  MhaParams m;
  m.heads = heads;
  m.model_dim = model_dim;
  m.wq = make_linear(store, prefix + ".wq", model_dim, model_dim, rng);
  m.wk = make_linear(store, prefix + ".wk", model_dim, model_dim, rng);
  m.wv = make_linear(store, prefix + ".wv", model_dim, model_dim, rng);
  m.wo = make_linear(store, prefix + ".wo", model_dim, model_dim, rng);
  return m;
}

std::pair<ad::Tensor, ad::Tensor> mha_forward(ad::Tape& tape, const Binding& p,
                                              const MhaParams& params, const ad::Tensor& query,
                                              const ad::Tensor& key, const ad::Tensor& value,
                                              const std::vector<uint8_t>* mask) {
  if (query.rank() != 2 || query.shape()[1] != params.model_dim) {
    throw std::invalid_argument("mha_forward: query shape " + ad::shape_str(query.shape()) +
                                " does not match model_dim " + std::to_string(params.model_dim));
  }
  if (key.rank() != 2 || value.rank() != 2 || key.shape() != value.shape() ||
      key.shape()[1] != params.model_dim) {
    throw std::invalid_argument("mha_forward: key " + ad::shape_str(key.shape()) + " / value " +
                                ad::shape_str(value.shape()) + " mismatch");
  }
  ad::Tensor q = linear(tape, p, params.wq, query);
  ad::Tensor k = linear(tape, p, params.wk, key);
  ad::Tensor v = linear(tape, p, params.wv, value);
  auto [heads_out, attn] = tape.masked_attention(q, k, v, params.heads, mask);
  ad::Tensor out = linear(tape, p, params.wo, heads_out);
  return {out, attn};
}

}  // namespace retr::nn
