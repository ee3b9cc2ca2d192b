// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace retr::ad {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

class Tape;

/// Dense row-major float64 tensor. A Tensor is a value handle: copies share
/// immutable storage. When produced by (or registered on) a Tape it also
/// carries the id of its tape value slot, which is what gradients attach to.
class Tensor {
 public:
  Tensor() = default;

  /// Constant (non-differentiable) tensor.
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
  bool defined() const { return static_cast<bool>(data_); }

  const std::vector<double>& data() const { return *data_; }
  double operator[](int64_t flat) const { return (*data_)[flat]; }
  double value() const;  // numel()==1 convenience accessor

  bool requires_grad() const { return vid_ >= 0; }
  int vid() const { return vid_; }
  const Tape* tape() const { return tape_; }

  /// Same values, no tape association.
  Tensor detached() const;

  bool all_finite() const;

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  int vid_ = -1;
  const Tape* tape_ = nullptr;
};

}  // namespace retr::ad
