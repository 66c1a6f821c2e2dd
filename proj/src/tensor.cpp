// SPDX-License-Identifier: Apache-2.0
#include "siamban/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace siamban {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape, float fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

float Tensor::min() const { return data_.empty() ? 0.0f : *std::min_element(data_.begin(), data_.end()); }

float Tensor::max() const { return data_.empty() ? 0.0f : *std::max_element(data_.begin(), data_.end()); }

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

}  // namespace siamban
