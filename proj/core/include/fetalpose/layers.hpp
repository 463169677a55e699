#pragma once

#include <cstdint>
#include <vector>

#include "fetalpose/tensor.hpp"

namespace fetalpose {

// Layer kernels. Backward functions accumulate (+=) into the gradient
// tensors they are handed; shapes must already match.

/// Stride-1 cross-correlation with "same" zero padding.
/// input [Ci,Z,Y,X], weights [Co,Ci,kz,ky,kx] with odd kernel extents (1 or 3), bias [Co].
template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias);

/// grad_input may be null when the input needs no gradient.
template <typename T>
void conv3d_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_output,
                     Tensor<T>* grad_input, Tensor<T>& grad_weights, Tensor<T>& grad_bias);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input);
/// Masks by positivity of the forward output.
template <typename T>
void relu_backward(const Tensor<T>& output, const Tensor<T>& grad_output, Tensor<T>& grad_input);

template <typename T>
Tensor<T> add_forward(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

/// 2x2x2 max pooling; ties resolve to the first element in scan order.
template <typename T>
PoolResult<T> maxpool2_forward(const Tensor<T>& input);
template <typename T>
void maxpool2_backward(const std::vector<std::uint32_t>& argmax, const Tensor<T>& grad_output,
                       Tensor<T>& grad_input);

template <typename T>
Tensor<T> upsample_nearest2_forward(const Tensor<T>& input);
template <typename T>
void upsample_nearest2_backward(const Tensor<T>& grad_output, Tensor<T>& grad_input);

/// Mean over all elements of w * (pred - target)^2 with w = 1 + foreground_weight * target.
/// foreground_weight = 0 is the plain mean squared error.
template <typename T>
T mse_loss(const Tensor<T>& pred, const Tensor<T>& target, T foreground_weight = T(0));
/// d(scale * mse)/d(pred) = scale * 2 w (pred - target) / N.
template <typename T>
Tensor<T> mse_backward(const Tensor<T>& pred, const Tensor<T>& target, T scale = T(1), T foreground_weight = T(0));

}  // namespace fetalpose
