#pragma once

#include <cstdint>
#include <vector>

#include "branchy/tensor.hpp"

namespace branchy {

// Raw numeric kernels shared by all layers. Inputs are strided tensors in the
// layouts documented per function; accumulation happens in double regardless
// of the storage type.

// c[m][n] = sum_p a[m][p] * b[p][n]
template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b);

// General row-major GEMM on raw buffers: C (MxN) = A (MxK) * B (KxN), with
// optional accumulation into the existing contents of C.
template <typename T>
void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
          bool accumulate = false);

// out-of-place row-major transpose: dst (cols x rows) = src (rows x cols)^T
template <typename T>
void transpose(std::int64_t rows, std::int64_t cols, const T* src, T* dst);

// 2-D cross-correlation with per-output-channel bias.
//   input  [N, Cin, H, W]
//   kernel [Cout, Cin, kh, kw]
//   bias   [Cout]
//   output [N, Cout, H', W'] with H' = (H + 2*pad - kh) / stride + 1
template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& kernel, const TensorT<T>& bias,
                  std::int64_t stride, std::int64_t padding);

// Gradients of conv2d. grad_kernel/grad_bias are accumulated (+=) into the
// provided tensors; the returned tensor is the gradient w.r.t. the input.
template <typename T>
TensorT<T> conv2d_backward(const TensorT<T>& input, const TensorT<T>& kernel,
                           const TensorT<T>& grad_out, std::int64_t stride, std::int64_t padding,
                           TensorT<T>& grad_kernel, TensorT<T>& grad_bias);

template <typename T>
struct MaxPoolResult {
  TensorT<T> output;
  // Flat index into the input tensor of the max of each output cell; ties
  // resolve to the lowest flat index. Drives the backward routing.
  std::vector<std::int64_t> argmax;
};

// Max pooling over square windows, no padding.
//   input [N, C, H, W] -> output [N, C, H', W'], H' = (H - window) / stride + 1
template <typename T>
MaxPoolResult<T> maxpool2d(const TensorT<T>& input, std::int64_t window, std::int64_t stride);

// Scatters grad_out back through the argmax map of the forward pass.
template <typename T>
TensorT<T> maxpool2d_backward(const Shape& input_shape, const std::vector<std::int64_t>& argmax,
                              const TensorT<T>& grad_out);

// Output spatial extent of a conv/pool sliding window, after validation.
std::int64_t sliding_extent(std::int64_t in, std::int64_t window, std::int64_t stride,
                            std::int64_t padding, const char* what);

}  // namespace branchy
