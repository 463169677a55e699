#pragma once

#include <cstdint>
#include <vector>

#include "fetalpose/layers.hpp"
#include "fetalpose/tensor.hpp"

namespace fetalpose {

/// Linear reverse-mode tape over the hourglass layer set. Every op appends
/// a node holding its output; backward() replays the nodes in reverse and
/// accumulates into ParamTensor::grad. Parameters must outlive the tape.
template <typename T>
class Tape {
 public:
  using Value = int;

  /// In checked mode every op verifies that its output is finite.
  explicit Tape(bool checked = false) : checked_(checked) {}

  Value input(Tensor<T> value);
  Value conv3d(Value x, ParamTensor<T>& weights, ParamTensor<T>& bias);
  Value relu(Value x);
  Value add(Value a, Value b);
  Value maxpool2(Value x);
  Value upsample_nearest2(Value x);

  const Tensor<T>& value(Value id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  /// Gradient w.r.t. a node after backward(); empty if none reached it.
  const Tensor<T>& grad(Value id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(output) and propagates to every node and parameter.
  void backward(Value output, const Tensor<T>& grad_output);

 private:
  enum class Op { kInput, kConv, kRelu, kAdd, kPool, kUpsample };
  struct Node {
    Op op = Op::kInput;
    int a = -1;
    int b = -1;
    ParamTensor<T>* weights = nullptr;
    ParamTensor<T>* bias = nullptr;
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::uint32_t> argmax;
  };

  Value push(Node node);
  Tensor<T>& grad_slot(int id);

  bool checked_;
  std::vector<Node> nodes_;
};

/// Eager executor with the same op surface; no gradients, intermediates are
/// released as soon as the caller drops them.
template <typename T>
struct Eager {
  using Value = Tensor<T>;

  Value conv3d(const Value& x, const ParamTensor<T>& w, const ParamTensor<T>& b) const {
    return conv3d_forward(x, w.value, b.value);
  }
  Value relu(const Value& x) const { return relu_forward(x); }
  Value add(const Value& a, const Value& b) const { return add_forward(a, b); }
  Value maxpool2(const Value& x) const { return maxpool2_forward(x).output; }
  Value upsample_nearest2(const Value& x) const { return upsample_nearest2_forward(x); }
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace fetalpose
