// SPDX-License-Identifier: Apache-2.0
#include "retr/autodiff/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace retr::ad {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  for (int d : shape_) {
    if (d <= 0) throw std::invalid_argument("Tensor: non-positive dim in " + shape_str(shape_));
  }
  if (shape_numel(shape_) != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument("Tensor: " + shape_str(shape_) + " needs " +
                                std::to_string(shape_numel(shape_)) + " values, got " +
                                std::to_string(values.size()));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(Shape shape) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double v) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, v));
}

double Tensor::value() const {
  if (numel() != 1) {
    throw std::invalid_argument("Tensor::value: tensor has shape " + shape_str(shape_));
  }
  return (*data_)[0];
}

Tensor Tensor::detached() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

bool Tensor::all_finite() const {
  if (!data_) return true;
  for (double v : *data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace retr::ad
