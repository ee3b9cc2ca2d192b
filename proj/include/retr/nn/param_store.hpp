// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "retr/autodiff/tape.hpp"
#include "retr/util/rng.hpp"

namespace retr::nn {

/// Central registry of named learnable tensors. Insertion order is the
/// serialization order of the checkpoint format and the alignment of the
/// optimizer state.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    ad::Tensor value;
  };

  /// Adds a parameter; returns its stable index. Duplicate names rejected.
  int add(std::string name, ad::Tensor value);

  int add_gaussian(std::string name, ad::Shape shape, double stddev, Rng& rng);
  int add_zeros(std::string name, ad::Shape shape);
  int add_full(std::string name, ad::Shape shape, double value);

  size_t size() const { return entries_.size(); }
  const Entry& entry(int id) const { return entries_[id]; }
  const ad::Tensor& value(int id) const { return entries_[id].value; }
  void set_value(int id, ad::Tensor v);
  int find(const std::string& name) const;  // -1 when absent

  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

/// Tape-bound view of a ParamStore for one forward/backward pass: leaf
/// tensors aligned with the store's indices plus gradient accumulation.
class Binding {
 public:
  Binding(ad::Tape& tape, const ParamStore& store);

  /// Wraps an existing tensor list (leaves or constants) aligned with the
  /// store's indices; grad_check probes drive forwards through this.
  explicit Binding(std::vector<ad::Tensor> bound) : bound_(std::move(bound)) {}

  const ad::Tensor& operator[](int id) const { return bound_[id]; }

  /// Accumulates this tape's gradients (scaled) into `sink`, one flat buffer
  /// per parameter, allocating zero buffers on first touch.
  void accumulate_grads(const ad::Gradients& grads,
                        std::vector<std::vector<double>>& sink, double scale = 1.0) const;

 private:
  std::vector<ad::Tensor> bound_;
};

}  // namespace retr::nn
