#include "topoforge/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "topoforge/error.hpp"

namespace topoforge::nn {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

void check_shape(const std::vector<std::size_t>& shape) {
  if (shape.empty() || shape.size() > 5) {
    fail(ErrorCode::ShapeMismatch, "tensor rank must be 1..5, got " + std::to_string(shape.size()));
  }
  for (std::size_t s : shape) {
    if (s < 1) fail(ErrorCode::ShapeMismatch, "tensor axes must be >= 1: " + shape_string(shape));
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  check_shape(shape_);
  if (data_.size() != shape_size(shape_)) {
    fail(ErrorCode::ShapeMismatch, "buffer of " + std::to_string(data_.size()) +
                                       " values does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  if (shape_size(shape) != data_.size()) fail(ErrorCode::ShapeMismatch, "reshape to a different element count");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = data_;
  return t;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

}  // namespace topoforge::nn
