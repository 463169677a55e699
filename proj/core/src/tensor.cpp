#include "fetalpose/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fetalpose {

namespace {

std::size_t element_count(const std::vector<int>& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must not be empty");
  std::size_t n = 1;
  for (int e : shape) {
    if (e < 1) throw std::invalid_argument("tensor extents must be positive, got " + shape_string(shape));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

}  // namespace

std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(std::vector<int> shape, T fill) : shape_(std::move(shape)) {
  values_.assign(element_count(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(std::vector<int> shape, std::vector<T> values) : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  if (values_.size() != element_count(shape_))
    throw std::invalid_argument("tensor of shape " + shape_string(shape_) + " given " +
                                std::to_string(values_.size()) + " values");
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(values_.begin(), values_.end(), v);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace fetalpose
