#pragma once

#include <cstddef>
#include <span>

#include "gapccot/tensor.hpp"

namespace gapccot {

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

/// 2-d cross-correlation with zero padding.
/// input [N,C,H,W], weight [O,C/groups,kh,kw], bias [O] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv2dOptions options = {});

/// Pointwise convolution. weight is [O,C] or [O,C,1,1].
template <typename T>
Tensor<T> matmul_1x1(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.01));

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// [N,C,H,W] -> [N,C,1,1]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> xs, std::size_t axis);

/// Elementwise arithmetic. Operands must share a shape, except that one
/// [N,C,1,1] operand may be broadcast against an [N,C,H,W] operand.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

/// Sum of all elements, as a scalar tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// [N, C*r*r, H, W] -> [N, C, H*r, W*r]; out[c, y*r+i, x*r+j] = in[c*r*r + i*r + j, y, x].
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t r);

/// Inverse of pixel_shuffle.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t r);

/// Mean squared difference over all elements, as a scalar tensor.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

/// Local attention aggregate used for dynamic context.
///
/// attention is [N, heads, k*k, H, W]; value is [N, C, H, W] with C a
/// multiple of heads. Channel c belongs to head c / (C / heads), and
///   out[n,c,y,x] = sum_j attention[n,h,j,y,x] * value[n,c,y+dy_j,x+dx_j]
/// with window offsets in row-major order and zero padding outside.
template <typename T>
Tensor<T> window_attention(const Tensor<T>& attention, const Tensor<T>& value, std::size_t k);

}  // namespace gapccot
