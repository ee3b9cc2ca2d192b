// SPDX-License-Identifier: Apache-2.0
#include "retr/nn/param_store.hpp"

#include <stdexcept>

namespace retr::nn {

int ParamStore::add(std::string name, ad::Tensor value) {
  if (find(name) >= 0) {
    throw std::invalid_argument("ParamStore: duplicate parameter name '" + name + "'");
  }
  entries_.push_back(Entry{std::move(name), std::move(value)});
  return static_cast<int>(entries_.size()) - 1;
}

int ParamStore::add_gaussian(std::string name, ad::Shape shape, double stddev, Rng& rng) {
  std::vector<double> v(ad::shape_numel(shape));
  for (auto& x : v) x = stddev * rng.gaussian();
  return add(std::move(name), ad::Tensor(std::move(shape), std::move(v)));
}

int ParamStore::add_zeros(std::string name, ad::Shape shape) {
  return add(std::move(name), ad::Tensor::zeros(std::move(shape)));
}

int ParamStore::add_full(std::string name, ad::Shape shape, double value) {
  return add(std::move(name), ad::Tensor::full(std::move(shape), value));
}

void ParamStore::set_value(int id, ad::Tensor v) {
  if (v.shape() != entries_[id].value.shape()) {
    throw std::invalid_argument("ParamStore: shape change for '" + entries_[id].name + "'");
  }
  entries_[id].value = std::move(v);
}

int ParamStore::find(const std::string& name) const {
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

Binding::Binding(ad::Tape& tape, const ParamStore& store) {
  bound_.reserve(store.size());
  for (const auto& e : store.entries()) bound_.push_back(tape.leaf(e.value));
}

void Binding::accumulate_grads(const ad::Gradients& grads,
                               std::vector<std::vector<double>>& sink, double scale) const {
  if (sink.size() < bound_.size()) sink.resize(bound_.size());
  for (size_t i = 0; i < bound_.size(); ++i) {
    const auto* g = grads.find(bound_[i]);
    if (!g) continue;
    auto& dst = sink[i];
    if (dst.empty()) dst.assign(g->size(), 0.0);
    for (size_t j = 0; j < g->size(); ++j) dst[j] += scale * (*g)[j];
  }
}

}  // namespace retr::nn
