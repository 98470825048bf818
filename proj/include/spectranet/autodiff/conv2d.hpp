#pragma once

#include <Eigen/Core>

#include "spectranet/autodiff/tensor.hpp"

namespace spectranet::ad {

struct ConvGeometry {
  int stride_y = 1, stride_x = 1;
  int pad_y = 0, pad_x = 0;
};

/// floor((in + 2p - k)/s) + 1, or a ShapeError when nonpositive.
inline int conv_out_dim(int in, int kernel, int stride, int pad) {
  if (stride < 1) throw ShapeError("conv stride must be >= 1");
  const int span = in + 2 * pad - kernel;
  if (span < 0) throw ShapeError("conv kernel " + std::to_string(kernel) + " larger than padded input " +
                                 std::to_string(in + 2 * pad));
  return span / stride + 1;
}

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

struct ConvDims {
  int c, h, w, o, kh, kw, ho, wo;
  [[nodiscard]] int k() const { return c * kh * kw; }
  [[nodiscard]] int p() const { return ho * wo; }
};

/// col[(ci*kh + ky)*kw + kx][oy*wo + ox] = image[ci][oy*sy - py + ky][ox*sx - px + kx]
template <class T>
void im2col(const T* img, const ConvDims& d, const ConvGeometry& g, T* col) {
  for (int ci = 0; ci < d.c; ++ci)
    for (int ky = 0; ky < d.kh; ++ky)
      for (int kx = 0; kx < d.kw; ++kx) {
        T* row = col + static_cast<std::ptrdiff_t>((ci * d.kh + ky) * d.kw + kx) * d.p();
        for (int oy = 0; oy < d.ho; ++oy) {
          const int iy = oy * g.stride_y - g.pad_y + ky;
          T* dst = row + oy * d.wo;
          if (iy < 0 || iy >= d.h) {
            std::fill(dst, dst + d.wo, T(0));
            continue;
          }
          const T* src = img + (static_cast<std::ptrdiff_t>(ci) * d.h + iy) * d.w;
          for (int ox = 0; ox < d.wo; ++ox) {
            const int ix = ox * g.stride_x - g.pad_x + kx;
            dst[ox] = (ix >= 0 && ix < d.w) ? src[ix] : T(0);
          }
        }
      }
}

template <class T>
void col2im_add(const T* col, const ConvDims& d, const ConvGeometry& g, T* img) {
  for (int ci = 0; ci < d.c; ++ci)
    for (int ky = 0; ky < d.kh; ++ky)
      for (int kx = 0; kx < d.kw; ++kx) {
        const T* row = col + static_cast<std::ptrdiff_t>((ci * d.kh + ky) * d.kw + kx) * d.p();
        for (int oy = 0; oy < d.ho; ++oy) {
          const int iy = oy * g.stride_y - g.pad_y + ky;
          if (iy < 0 || iy >= d.h) continue;
          const T* src = row + oy * d.wo;
          T* dst = img + (static_cast<std::ptrdiff_t>(ci) * d.h + iy) * d.w;
          for (int ox = 0; ox < d.wo; ++ox) {
            const int ix = ox * g.stride_x - g.pad_x + kx;
            if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace detail

/// 2-D cross-correlation, NCHW input and OIHW kernel, no bias. Lowered to one
/// GEMM per image through im2col.
template <class T>
Var<T> conv2d(Tape<T>* tape, const Var<T>& x, const Var<T>& kernel, const ConvGeometry& g) {
  if (x->shape.size() != 4 || kernel->shape.size() != 4)
    throw ShapeError("conv2d expects NCHW input and OIHW kernel");
  if (x->dim(1) != kernel->dim(1))
    throw ShapeError("conv2d channel mismatch: input " + to_string(x->shape) + ", kernel " + to_string(kernel->shape));
  const int n = x->dim(0);
  detail::ConvDims d{x->dim(1), x->dim(2), x->dim(3), kernel->dim(0), kernel->dim(2), kernel->dim(3), 0, 0};
  d.ho = conv_out_dim(d.h, d.kh, g.stride_y, g.pad_y);
  d.wo = conv_out_dim(d.w, d.kw, g.stride_x, g.pad_x);

  auto y = make_output<T>({n, d.o, d.ho, d.wo}, x, kernel);
  std::vector<T> col(static_cast<std::size_t>(d.k()) * d.p());
  detail::CMapMat<T> wmat(kernel->values.data(), d.o, d.k());
  const std::size_t in_stride = static_cast<std::size_t>(d.c) * d.h * d.w;
  const std::size_t out_stride = static_cast<std::size_t>(d.o) * d.p();
  for (int i = 0; i < n; ++i) {
    detail::im2col(x->values.data() + i * in_stride, d, g, col.data());
    detail::MapMat<T> ymat(y->values.data() + i * out_stride, d.o, d.p());
    ymat.noalias() = wmat * detail::CMapMat<T>(col.data(), d.k(), d.p());
  }

  if (tape && y->requires_grad) {
    tape->record("conv2d", [x, kernel, y, d, g, n, in_stride, out_stride] {
      if (y->grad.empty()) return;
      std::vector<T> col(static_cast<std::size_t>(d.k()) * d.p());
      std::vector<T> dcol(col.size());
      detail::CMapMat<T> wmat(kernel->values.data(), d.o, d.k());
      T* dx = x->requires_grad ? x->ensure_grad().data() : nullptr;
      T* dw = kernel->requires_grad ? kernel->ensure_grad().data() : nullptr;
      for (int i = 0; i < n; ++i) {
        detail::CMapMat<T> dy(y->grad.data() + i * out_stride, d.o, d.p());
        if (dw) {
          detail::im2col(x->values.data() + i * in_stride, d, g, col.data());
          detail::MapMat<T>(dw, d.o, d.k()).noalias() += dy * detail::CMapMat<T>(col.data(), d.k(), d.p()).transpose();
        }
        if (dx) {
          detail::MapMat<T>(dcol.data(), d.k(), d.p()).noalias() = wmat.transpose() * dy;
          detail::col2im_add(dcol.data(), d, g, dx + i * in_stride);
        }
      }
    });
  }
  return y;
}

}  // namespace spectranet::ad
