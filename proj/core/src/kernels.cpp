#include "branchy/kernels.hpp"

#include <algorithm>
#include <string>

namespace branchy {

std::int64_t sliding_extent(std::int64_t in, std::int64_t window, std::int64_t stride,
                            std::int64_t padding, const char* what) {
  if (window > in + 2 * padding) {
    throw DimensionError(std::string(what) + ": window " + std::to_string(window) +
                         " exceeds padded input extent " + std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - window) / stride + 1;
}

namespace {

// Inner GEMM on a double scratch row. Keeping the j-loop contiguous lets the
// compiler vectorize the widen-multiply-accumulate.
template <typename T>
void gemm_rows(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
               bool accumulate, std::vector<double>& acc) {
  acc.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < m; ++i) {
    double* accp = acc.data();
    for (std::int64_t j = 0; j < n; ++j) accp[j] = 0.0;
    const T* arow = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = static_cast<double>(arow[p]);
      const T* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) {
        accp[j] += av * static_cast<double>(brow[j]);
      }
    }
    T* crow = c + i * n;
    if (accumulate) {
      for (std::int64_t j = 0; j < n; ++j) crow[j] += static_cast<T>(accp[j]);
    } else {
      for (std::int64_t j = 0; j < n; ++j) crow[j] = static_cast<T>(accp[j]);
    }
  }
}

// Gathers one sample's conv patches into a [Cin*kh*kw, Hout*Wout] matrix.
template <typename T>
void im2col(const T* in, std::int64_t cin, std::int64_t h, std::int64_t w, std::int64_t kh,
            std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t hout,
            std::int64_t wout, T* col) {
  const std::int64_t cols = hout * wout;
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < cin; ++c) {
    const T* chan = in + c * h * w;
    for (std::int64_t ky = 0; ky < kh; ++ky) {
      for (std::int64_t kx = 0; kx < kw; ++kx, ++row) {
        T* dst = col + row * cols;
        for (std::int64_t oy = 0; oy < hout; ++oy) {
          const std::int64_t iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            for (std::int64_t ox = 0; ox < wout; ++ox) dst[oy * wout + ox] = T(0);
            continue;
          }
          const T* src = chan + iy * w;
          for (std::int64_t ox = 0; ox < wout; ++ox) {
            const std::int64_t ix = ox * stride + kx - pad;
            dst[oy * wout + ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-adds a column matrix back onto the (unpadded) input image.
template <typename T>
void col2im_add(const T* col, std::int64_t cin, std::int64_t h, std::int64_t w, std::int64_t kh,
                std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t hout,
                std::int64_t wout, T* in) {
  const std::int64_t cols = hout * wout;
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < cin; ++c) {
    T* chan = in + c * h * w;
    for (std::int64_t ky = 0; ky < kh; ++ky) {
      for (std::int64_t kx = 0; kx < kw; ++kx, ++row) {
        const T* src = col + row * cols;
        for (std::int64_t oy = 0; oy < hout; ++oy) {
          const std::int64_t iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (std::int64_t ox = 0; ox < wout; ++ox) {
            const std::int64_t ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) chan[iy * w + ix] += src[oy * wout + ox];
          }
        }
      }
    }
  }
}

void require_rank(const Shape& s, std::int64_t rank, const char* what) {
  if (s.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank-" + std::to_string(rank) +
                         " tensor, got " + s.str());
  }
}

}  // namespace

template <typename T>
void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
          bool accumulate) {
  std::vector<double> acc;
  gemm_rows(m, n, k, a, b, c, accumulate, acc);
}

template <typename T>
void transpose(std::int64_t rows, std::int64_t cols, const T* src, T* dst) {
  for (std::int64_t i = 0; i < rows; ++i) {
    for (std::int64_t j = 0; j < cols; ++j) {
      dst[j * rows + i] = src[i * cols + j];
    }
  }
}

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  require_rank(a.shape(), 2, "matmul lhs");
  require_rank(b.shape(), 2, "matmul rhs");
  const std::int64_t m = a.shape().extent(0);
  const std::int64_t k = a.shape().extent(1);
  const std::int64_t n = b.shape().extent(1);
  if (b.shape().extent(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree: " + a.shape().str() + " vs " +
                         b.shape().str());
  }
  TensorT<T> c(Shape{m, n});
  gemm(m, n, k, a.data(), b.data(), c.data(), false);
  return c;
}

template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& kernel, const TensorT<T>& bias,
                  std::int64_t stride, std::int64_t padding) {
  require_rank(input.shape(), 4, "conv2d input");
  require_rank(kernel.shape(), 4, "conv2d kernel");
  if (stride < 1) throw ValidationError("conv2d: stride must be >= 1");
  if (padding < 0) throw ValidationError("conv2d: padding must be >= 0");

  const std::int64_t n = input.shape().extent(0);
  const std::int64_t cin = input.shape().extent(1);
  const std::int64_t h = input.shape().extent(2);
  const std::int64_t w = input.shape().extent(3);
  const std::int64_t cout = kernel.shape().extent(0);
  const std::int64_t kh = kernel.shape().extent(2);
  const std::int64_t kw = kernel.shape().extent(3);

  if (kernel.shape().extent(1) != cin) {
    throw DimensionError("conv2d: kernel channels " + kernel.shape().str() +
                         " do not match input " + input.shape().str());
  }
  if (bias.size() != cout) {
    throw DimensionError("conv2d: bias length " + std::to_string(bias.size()) +
                         " does not match " + std::to_string(cout) + " output channels");
  }
  const std::int64_t hout = sliding_extent(h, kh, stride, padding, "conv2d");
  const std::int64_t wout = sliding_extent(w, kw, stride, padding, "conv2d");

  TensorT<T> out(Shape{n, cout, hout, wout});
  const std::int64_t krows = cin * kh * kw;
  const std::int64_t cols = hout * wout;
  std::vector<T> col(static_cast<std::size_t>(krows * cols));
  std::vector<double> acc;

  for (std::int64_t s = 0; s < n; ++s) {
    im2col(input.data() + s * cin * h * w, cin, h, w, kh, kw, stride, padding, hout, wout,
           col.data());
    T* dst = out.data() + s * cout * cols;
    gemm_rows(cout, cols, krows, kernel.data(), col.data(), dst, false, acc);
    for (std::int64_t oc = 0; oc < cout; ++oc) {
      const T bv = bias[oc];
      T* row = dst + oc * cols;
      for (std::int64_t j = 0; j < cols; ++j) row[j] += bv;
    }
  }
  return out;
}

template <typename T>
TensorT<T> conv2d_backward(const TensorT<T>& input, const TensorT<T>& kernel,
                           const TensorT<T>& grad_out, std::int64_t stride, std::int64_t padding,
                           TensorT<T>& grad_kernel, TensorT<T>& grad_bias) {
  const std::int64_t n = input.shape().extent(0);
  const std::int64_t cin = input.shape().extent(1);
  const std::int64_t h = input.shape().extent(2);
  const std::int64_t w = input.shape().extent(3);
  const std::int64_t cout = kernel.shape().extent(0);
  const std::int64_t kh = kernel.shape().extent(2);
  const std::int64_t kw = kernel.shape().extent(3);
  const std::int64_t hout = grad_out.shape().extent(2);
  const std::int64_t wout = grad_out.shape().extent(3);
  if (grad_kernel.shape() != kernel.shape()) {
    throw DimensionError("conv2d backward: grad_kernel shape " + grad_kernel.shape().str() +
                         " does not match kernel " + kernel.shape().str());
  }

  const std::int64_t krows = cin * kh * kw;
  const std::int64_t cols = hout * wout;
  std::vector<T> col(static_cast<std::size_t>(krows * cols));
  std::vector<T> col_t(static_cast<std::size_t>(krows * cols));
  std::vector<T> col_grad(static_cast<std::size_t>(krows * cols));
  std::vector<T> kernel_t(static_cast<std::size_t>(krows * cout));
  std::vector<double> acc;
  transpose(cout, krows, kernel.data(), kernel_t.data());

  TensorT<T> grad_in(input.shape());
  for (std::int64_t s = 0; s < n; ++s) {
    const T* gout = grad_out.data() + s * cout * cols;

    // dK += dY * col^T
    im2col(input.data() + s * cin * h * w, cin, h, w, kh, kw, stride, padding, hout, wout,
           col.data());
    transpose(krows, cols, col.data(), col_t.data());
    gemm_rows(cout, krows, cols, gout, col_t.data(), grad_kernel.data(), true, acc);

    // db += row sums of dY
    for (std::int64_t oc = 0; oc < cout; ++oc) {
      double sum = 0.0;
      const T* row = gout + oc * cols;
      for (std::int64_t j = 0; j < cols; ++j) sum += static_cast<double>(row[j]);
      grad_bias[oc] += static_cast<T>(sum);
    }

    // dX = scatter(K^T * dY)
    gemm_rows(krows, cols, cout, kernel_t.data(), gout, col_grad.data(), false, acc);
    col2im_add(col_grad.data(), cin, h, w, kh, kw, stride, padding, hout, wout,
               grad_in.data() + s * cin * h * w);
  }
  return grad_in;
}

template <typename T>
MaxPoolResult<T> maxpool2d(const TensorT<T>& input, std::int64_t window, std::int64_t stride) {
  require_rank(input.shape(), 4, "maxpool2d input");
  if (window < 1 || stride < 1) throw ValidationError("maxpool2d: window and stride must be >= 1");

  const std::int64_t n = input.shape().extent(0);
  const std::int64_t c = input.shape().extent(1);
  const std::int64_t h = input.shape().extent(2);
  const std::int64_t w = input.shape().extent(3);
  const std::int64_t hout = sliding_extent(h, window, stride, 0, "maxpool2d");
  const std::int64_t wout = sliding_extent(w, window, stride, 0, "maxpool2d");

  MaxPoolResult<T> result{TensorT<T>(Shape{n, c, hout, wout}),
                          std::vector<std::int64_t>(static_cast<std::size_t>(n * c * hout * wout))};
  std::int64_t oi = 0;
  for (std::int64_t s = 0; s < n; ++s) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T* plane = input.data() + (s * c + ch) * h * w;
      const std::int64_t plane_base = (s * c + ch) * h * w;
      for (std::int64_t oy = 0; oy < hout; ++oy) {
        for (std::int64_t ox = 0; ox < wout; ++ox, ++oi) {
          const std::int64_t y0 = oy * stride;
          const std::int64_t x0 = ox * stride;
          T best = plane[y0 * w + x0];
          std::int64_t best_idx = y0 * w + x0;
          for (std::int64_t ky = 0; ky < window; ++ky) {
            for (std::int64_t kx = 0; kx < window; ++kx) {
              const std::int64_t idx = (y0 + ky) * w + (x0 + kx);
              if (plane[idx] > best) {
                best = plane[idx];
                best_idx = idx;
              }
            }
          }
          result.output[oi] = best;
          result.argmax[static_cast<std::size_t>(oi)] = plane_base + best_idx;
        }
      }
    }
  }
  return result;
}

template <typename T>
TensorT<T> maxpool2d_backward(const Shape& input_shape, const std::vector<std::int64_t>& argmax,
                              const TensorT<T>& grad_out) {
  if (static_cast<std::int64_t>(argmax.size()) != grad_out.size()) {
    throw StateError("maxpool2d backward: argmax map does not match gradient size");
  }
  TensorT<T> grad_in(input_shape);
  for (std::int64_t i = 0; i < grad_out.size(); ++i) {
    grad_in[argmax[static_cast<std::size_t>(i)]] += grad_out[i];
  }
  return grad_in;
}

#define BRANCHY_INSTANTIATE(T)                                                                 \
  template void gemm<T>(std::int64_t, std::int64_t, std::int64_t, const T*, const T*, T*,      \
                        bool);                                                                 \
  template void transpose<T>(std::int64_t, std::int64_t, const T*, T*);                        \
  template TensorT<T> matmul<T>(const TensorT<T>&, const TensorT<T>&);                         \
  template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,       \
                                std::int64_t, std::int64_t);                                   \
  template TensorT<T> conv2d_backward<T>(const TensorT<T>&, const TensorT<T>&,                 \
                                         const TensorT<T>&, std::int64_t, std::int64_t,       \
                                         TensorT<T>&, TensorT<T>&);                            \
  template MaxPoolResult<T> maxpool2d<T>(const TensorT<T>&, std::int64_t, std::int64_t);       \
  template TensorT<T> maxpool2d_backward<T>(const Shape&, const std::vector<std::int64_t>&,    \
                                            const TensorT<T>&);

BRANCHY_INSTANTIATE(float)
BRANCHY_INSTANTIATE(double)
#undef BRANCHY_INSTANTIATE

}  // namespace branchy
