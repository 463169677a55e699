#include "fetalpose/tape.hpp"

#include <stdexcept>
#include <string>

namespace fetalpose {

template <typename T>
typename Tape<T>::Value Tape<T>::push(Node node) {
  if (checked_ && !node.value.all_finite())
    throw std::domain_error("non-finite value produced by tape node " + std::to_string(nodes_.size()));
  nodes_.push_back(std::move(node));
  return static_cast<Value>(nodes_.size() - 1);
}

template <typename T>
Tensor<T>& Tape<T>::grad_slot(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
typename Tape<T>::Value Tape<T>::input(Tensor<T> value) {
  Node n;
  n.op = Op::kInput;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Value Tape<T>::conv3d(Value x, ParamTensor<T>& weights, ParamTensor<T>& bias) {
  Node n;
  n.op = Op::kConv;
  n.a = x;
  n.weights = &weights;
  n.bias = &bias;
  n.value = conv3d_forward(value(x), weights.value, bias.value);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Value Tape<T>::relu(Value x) {
  Node n;
  n.op = Op::kRelu;
  n.a = x;
  n.value = relu_forward(value(x));
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Value Tape<T>::add(Value a, Value b) {
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.value = add_forward(value(a), value(b));
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Value Tape<T>::maxpool2(Value x) {
  Node n;
  n.op = Op::kPool;
  n.a = x;
  auto pooled = maxpool2_forward(value(x));
  n.value = std::move(pooled.output);
  n.argmax = std::move(pooled.argmax);
  return push(std::move(n));
}

template <typename T>
typename Tape<T>::Value Tape<T>::upsample_nearest2(Value x) {
  Node n;
  n.op = Op::kUpsample;
  n.a = x;
  n.value = upsample_nearest2_forward(value(x));
  return push(std::move(n));
}

template <typename T>
void Tape<T>::backward(Value output, const Tensor<T>& grad_output) {
  if (output < 0 || static_cast<std::size_t>(output) >= nodes_.size()) throw std::out_of_range("tape node out of range");
  if (!grad_output.same_shape(value(output)))
    throw std::invalid_argument("seed gradient shape " + shape_string(grad_output.shape()) + " differs from output " +
                                shape_string(value(output).shape()));
  Tensor<T>& seed = grad_slot(output);
  for (std::size_t i = 0; i < seed.size(); ++i) seed[i] += grad_output[i];

  for (int id = output; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() || n.op == Op::kInput) continue;
    switch (n.op) {
      case Op::kConv: {
        Node& in = nodes_[static_cast<std::size_t>(n.a)];
        Tensor<T>* gin = &grad_slot(n.a);
        conv3d_backward(in.value, n.weights->value, n.grad, gin, n.weights->grad, n.bias->grad);
        break;
      }
      case Op::kRelu:
        relu_backward(n.value, n.grad, grad_slot(n.a));
        break;
      case Op::kAdd: {
        Tensor<T>& ga = grad_slot(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i];
        Tensor<T>& gb = grad_slot(n.b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += n.grad[i];
        break;
      }
      case Op::kPool:
        maxpool2_backward(n.argmax, n.grad, grad_slot(n.a));
        break;
      case Op::kUpsample:
        upsample_nearest2_backward(n.grad, grad_slot(n.a));
        break;
      case Op::kInput:
        break;
    }
    // Intermediates are no longer needed once their gradient has been pushed upstream.
    n.grad = Tensor<T>();
    n.value = Tensor<T>();
    n.argmax.clear();
    n.argmax.shrink_to_fit();
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace fetalpose
