#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "fetalpose/geometry.hpp"

namespace fetalpose {

/// Cache-line aligned storage. Vectorized kernels peel a different number of
/// leading elements depending on the buffer address, so a fixed alignment keeps
/// float results independent of where the allocator places the data.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, alignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense row-major tensor. Activations are laid out [channels, z, y, x] so
/// the spatial part is x-fastest like Volume.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, T fill = T(0));
  Tensor(std::vector<int> shape, std::vector<T> values);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  void fill(T v);

  /// Spatial dims of a rank-4 activation tensor.
  Dims spatial() const { return {shape_[3], shape_[2], shape_[1]}; }
  int channels() const { return shape_[0]; }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(values_.begin(), values_.end());
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  std::vector<int> shape_;
  AlignedVector<T> values_;
};

/// Trainable tensor with its gradient accumulator.
template <typename T>
struct ParamTensor {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  ParamTensor() = default;
  ParamTensor(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad.fill(T(0)); }
};

std::string shape_string(const std::vector<int>& shape);

/// Activation shape helper: [channels, z, y, x].
inline std::vector<int> activation_shape(int channels, Dims d) { return {channels, d.z, d.y, d.x}; }

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace fetalpose
