#pragma once

#include <span>

#include "trajattn/tensor.hpp"

namespace trajattn {

// Forward ops over dense fp64 tensors. Every op validates shapes exactly (no
// implicit broadcasting) and records itself on the active tape when any input
// requires a gradient.

// (m,k) x (k,n) -> (m,n), or (m,k) x (k) -> (m).
Tensor matmul(const Tensor& a, const Tensor& b);

// input (Cin,H,W), kernel (Cout,Cin,k,k), optional bias (Cout).
// Output spatial dims follow floor((dim + 2*padding - k) / stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding);
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(const Tensor& a, const Tensor& b, int axis = 0);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

Tensor softmax(const Tensor& x, int axis);

// (C,H,W) -> (C), mean over the spatial grid.
Tensor global_avg_pool(const Tensor& x);

// mask (H,W) times feature map (C,H,W), applied to every channel.
Tensor broadcast_multiply(const Tensor& mask, const Tensor& fmap);

Tensor slice(const Tensor& x, int axis, int start, int length);
Tensor reshape(const Tensor& x, Shape new_shape);

// Sum of all elements -> scalar.
Tensor sum(const Tensor& x);

// max(x, floor) elementwise; zero gradient at and below the floor.
Tensor clamp_min(const Tensor& x, double floor);

}  // namespace trajattn
