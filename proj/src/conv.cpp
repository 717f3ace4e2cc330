
#include <string>

#include "gemm.hpp"
#include "stpred/ops.hpp"

// Convolutions over a canonical 3-D spatial layout. 2-D convs are the T=1, kt=1 case.
// A Geometry describes a forward convolution from the "wide" tensor [N,C,T,H,W]
// to the "narrow" tensor [N,O,To,Ho,Wo]; transposed convolution runs it backwards.

namespace stp::ops {

namespace {

struct Geometry {
  Index n = 1, c = 1, t = 1, h = 1, w = 1;  // wide side
  Index o = 1;                              // narrow-side channels
  Index kt = 1, kh = 1, kw = 1;
  Index st = 1, sh = 1, sw = 1;
  Index pt = 0, ph = 0, pw = 0;  // leading pads
  Index to = 1, ho = 1, wo = 1;

  Index rows() const { return c * kt * kh * kw; }
  Index wide_sites() const { return t * h * w; }
  Index narrow_sites() const { return to * ho * wo; }
  Index cols() const { return n * narrow_sites(); }
};

Index conv_extent(const char* op, const char* axis, Index in, Index pad_total, Index k, Index stride) {
  if (stride < 1) throw ShapeError(std::string(op) + ": stride must be positive on axis " + axis);
  if (in + pad_total < k)
    throw ShapeError(std::string(op) + ": axis " + axis + " extent " + std::to_string(in) + " with padding " +
                     std::to_string(pad_total) + " is smaller than kernel " + std::to_string(k));
  return (in + pad_total - k) / stride + 1;
}

// cols[r, j], r = ((c*kt+dt)*kh+dh)*kw+dw, j = ((n*To+to)*Ho+ho)*Wo+wo
template <typename T>
void im2col(const T* x, const Geometry& g, T* cols) {
  const Index ncols = g.cols();
  for (Index c = 0; c < g.c; ++c)
    for (Index dt = 0; dt < g.kt; ++dt)
      for (Index dh = 0; dh < g.kh; ++dh)
        for (Index dw = 0; dw < g.kw; ++dw) {
          T* row = cols + (((c * g.kt + dt) * g.kh + dh) * g.kw + dw) * ncols;
          for (Index b = 0; b < g.n; ++b) {
            const T* xc = x + (b * g.c + c) * g.wide_sites();
            for (Index ot = 0; ot < g.to; ++ot) {
              const Index ti = ot * g.st - g.pt + dt;
              for (Index oh = 0; oh < g.ho; ++oh) {
                T* dst = row + ((b * g.to + ot) * g.ho + oh) * g.wo;
                const Index hi = oh * g.sh - g.ph + dh;
                if (ti < 0 || ti >= g.t || hi < 0 || hi >= g.h) {
                  for (Index ow = 0; ow < g.wo; ++ow) dst[ow] = T(0);
                  continue;
                }
                const T* src = xc + (ti * g.h + hi) * g.w;
                for (Index ow = 0; ow < g.wo; ++ow) {
                  const Index wi = ow * g.sw - g.pw + dw;
                  dst[ow] = (wi >= 0 && wi < g.w) ? src[wi] : T(0);
                }
              }
            }
          }
        }
}

template <typename T>
void col2im(const T* cols, const Geometry& g, T* x) {
  const Index ncols = g.cols();
  for (Index c = 0; c < g.c; ++c)
    for (Index dt = 0; dt < g.kt; ++dt)
      for (Index dh = 0; dh < g.kh; ++dh)
        for (Index dw = 0; dw < g.kw; ++dw) {
          const T* row = cols + (((c * g.kt + dt) * g.kh + dh) * g.kw + dw) * ncols;
          for (Index b = 0; b < g.n; ++b) {
            T* xc = x + (b * g.c + c) * g.wide_sites();
            for (Index ot = 0; ot < g.to; ++ot) {
              const Index ti = ot * g.st - g.pt + dt;
              if (ti < 0 || ti >= g.t) continue;
              for (Index oh = 0; oh < g.ho; ++oh) {
                const Index hi = oh * g.sh - g.ph + dh;
                if (hi < 0 || hi >= g.h) continue;
                const T* src = row + ((b * g.to + ot) * g.ho + oh) * g.wo;
                T* dst = xc + (ti * g.h + hi) * g.w;
                for (Index ow = 0; ow < g.wo; ++ow) {
                  const Index wi = ow * g.sw - g.pw + dw;
                  if (wi >= 0 && wi < g.w) dst[wi] += src[ow];
                }
              }
            }
          }
        }
}

// [N, C, P] <-> [C, N*P]
template <typename T>
void batch_to_channel_major(const T* src, Index n, Index c, Index p, T* dst) {
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch) std::copy_n(src + (b * c + ch) * p, p, dst + ch * n * p + b * p);
}

template <typename T>
void channel_major_to_batch(const T* src, Index n, Index c, Index p, T* dst) {
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch) std::copy_n(src + ch * n * p + b * p, p, dst + (b * c + ch) * p);
}

// Forward convolution wide -> narrow. kernel viewed [O, rows].
template <typename T>
Tensor<T> conv_forward(const char* name, const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                       Geometry geo, Shape out_shape) {
  const Index rows = geo.rows(), ncols = geo.cols(), np = geo.narrow_sites();
  std::vector<T> cols(static_cast<std::size_t>(rows * ncols));
  im2col(x.vec().data(), geo, cols.data());
  std::vector<T> tmp(static_cast<std::size_t>(geo.o * ncols));
  detail::gemm(kernel.vec().data(), geo.o, rows, false, cols.data(), rows, ncols, false, tmp.data(), false);
  std::vector<T> out(tmp.size());
  channel_major_to_batch(tmp.data(), geo.n, geo.o, np, out.data());
  if (bias.defined()) {
    const auto& bd = bias.vec();
    for (Index b = 0; b < geo.n; ++b)
      for (Index o = 0; o < geo.o; ++o) {
        T* p = out.data() + (b * geo.o + o) * np;
        for (Index i = 0; i < np; ++i) p[i] += bd[o];
      }
  }
  std::vector<Tensor<T>> in{x, kernel};
  if (bias.defined()) in.push_back(bias);
  return make_op_result<T>(name, std::move(out_shape), std::move(out), in, [x, kernel, bias, geo](std::span<const T> g) {
    const Index rows = geo.rows(), ncols = geo.cols(), np = geo.narrow_sites();
    std::vector<T> gt(static_cast<std::size_t>(geo.o * ncols));
    batch_to_channel_major(g.data(), geo.n, geo.o, np, gt.data());
    auto sk = grad_slot(kernel);
    auto sx = grad_slot(x);
    if (!sk.empty()) {
      std::vector<T> cols(static_cast<std::size_t>(rows * ncols));
      im2col(x.vec().data(), geo, cols.data());
      detail::gemm(gt.data(), geo.o, ncols, false, cols.data(), rows, ncols, true, sk.data(), true);
    }
    if (bias.defined()) {
      auto sb = grad_slot(bias);
      if (!sb.empty())
        for (Index o = 0; o < geo.o; ++o) {
          T acc = 0;
          for (Index i = 0; i < ncols; ++i) acc += gt[o * ncols + i];
          sb[o] += acc;
        }
    }
    if (!sx.empty()) {
      std::vector<T> dcols(static_cast<std::size_t>(rows * ncols));
      detail::gemm(kernel.vec().data(), geo.o, rows, true, gt.data(), geo.o, ncols, false, dcols.data(), false);
      col2im(dcols.data(), geo, sx.data());
    }
  });
}

// Transposed convolution narrow -> wide. kernel [C_narrow, O_wide, k...] viewed [geo.o, rows].
template <typename T>
Tensor<T> conv_transpose_forward(const char* name, const Tensor<T>& x, const Tensor<T>& kernel,
                                 const Tensor<T>& bias, Geometry geo, Shape out_shape) {
  const Index rows = geo.rows(), ncols = geo.cols(), np = geo.narrow_sites(), wp = geo.wide_sites();
  std::vector<T> xt(static_cast<std::size_t>(geo.o * ncols));
  batch_to_channel_major(x.vec().data(), geo.n, geo.o, np, xt.data());
  std::vector<T> cols(static_cast<std::size_t>(rows * ncols));
  detail::gemm(kernel.vec().data(), geo.o, rows, true, xt.data(), geo.o, ncols, false, cols.data(), false);
  std::vector<T> out(static_cast<std::size_t>(geo.n * geo.c * wp), T(0));
  col2im(cols.data(), geo, out.data());
  if (bias.defined()) {
    const auto& bd = bias.vec();
    for (Index b = 0; b < geo.n; ++b)
      for (Index c = 0; c < geo.c; ++c) {
        T* p = out.data() + (b * geo.c + c) * wp;
        for (Index i = 0; i < wp; ++i) p[i] += bd[c];
      }
  }
  std::vector<Tensor<T>> in{x, kernel};
  if (bias.defined()) in.push_back(bias);
  return make_op_result<T>(name, std::move(out_shape), std::move(out), in, [x, kernel, bias, geo](std::span<const T> g) {
    const Index rows = geo.rows(), ncols = geo.cols(), np = geo.narrow_sites(), wp = geo.wide_sites();
    std::vector<T> gcols(static_cast<std::size_t>(rows * ncols));
    im2col(g.data(), geo, gcols.data());
    auto sx = grad_slot(x);
    auto sk = grad_slot(kernel);
    if (!sx.empty()) {
      std::vector<T> dxt(static_cast<std::size_t>(geo.o * ncols));
      detail::gemm(kernel.vec().data(), geo.o, rows, false, gcols.data(), rows, ncols, false, dxt.data(), false);
      std::vector<T> dx(dxt.size());
      channel_major_to_batch(dxt.data(), geo.n, geo.o, np, dx.data());
      for (std::size_t i = 0; i < dx.size(); ++i) sx[i] += dx[i];
    }
    if (!sk.empty()) {
      std::vector<T> xt(static_cast<std::size_t>(geo.o * ncols));
      batch_to_channel_major(x.vec().data(), geo.n, geo.o, np, xt.data());
      detail::gemm(xt.data(), geo.o, ncols, false, gcols.data(), rows, ncols, true, sk.data(), true);
    }
    if (bias.defined()) {
      auto sb = grad_slot(bias);
      if (!sb.empty())
        for (Index b = 0; b < geo.n; ++b)
          for (Index c = 0; c < geo.c; ++c) {
            const T* p = g.data() + (b * geo.c + c) * wp;
            T acc = 0;
            for (Index i = 0; i < wp; ++i) acc += p[i];
            sb[c] += acc;
          }
    }
  });
}

void check_bias(const char* op, bool defined, Index numel, Index channels) {
  if (defined && numel != channels)
    throw ShapeError(std::string(op) + ": bias has " + std::to_string(numel) + " entries, expected " +
                     std::to_string(channels));
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, Index stride, Index padding) {
  if (x.rank() != 4 || kernel.rank() != 4)
    throw ShapeError("conv2d: expected input [N,C,H,W] and kernel [O,C,kh,kw], got " + shape_str(x.shape()) +
                     " and " + shape_str(kernel.shape()));
  if (x.dim(1) != kernel.dim(1))
    throw ShapeError("conv2d: input channel axis 1 (" + std::to_string(x.dim(1)) + ") differs from kernel axis 1 (" +
                     std::to_string(kernel.dim(1)) + ")");
  if (padding < 0) throw ShapeError("conv2d: negative padding");
  check_bias("conv2d", bias.defined(), bias.defined() ? bias.numel() : 0, kernel.dim(0));
  Geometry g;
  g.n = x.dim(0);
  g.c = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.o = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.sh = g.sw = stride;
  g.ph = g.pw = padding;
  g.ho = conv_extent("conv2d", "H (2)", g.h, 2 * padding, g.kh, stride);
  g.wo = conv_extent("conv2d", "W (3)", g.w, 2 * padding, g.kw, stride);
  return conv_forward<T>("conv2d", x, kernel, bias, g, Shape{g.n, g.o, g.ho, g.wo});
}

template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, Index stride,
                           Index padding) {
  if (x.rank() != 4 || kernel.rank() != 4)
    throw ShapeError("conv2d_transpose: expected input [N,C,H,W] and kernel [C,O,kh,kw], got " +
                     shape_str(x.shape()) + " and " + shape_str(kernel.shape()));
  if (x.dim(1) != kernel.dim(0))
    throw ShapeError("conv2d_transpose: input channel axis 1 (" + std::to_string(x.dim(1)) +
                     ") differs from kernel axis 0 (" + std::to_string(kernel.dim(0)) + ")");
  if (stride < 1 || padding < 0) throw ShapeError("conv2d_transpose: invalid stride/padding");
  check_bias("conv2d_transpose", bias.defined(), bias.defined() ? bias.numel() : 0, kernel.dim(1));
  Geometry g;
  g.n = x.dim(0);
  g.o = x.dim(1);
  g.ho = x.dim(2);
  g.wo = x.dim(3);
  g.c = kernel.dim(1);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.sh = g.sw = stride;
  g.ph = g.pw = padding;
  g.h = (g.ho - 1) * stride - 2 * padding + g.kh;
  g.w = (g.wo - 1) * stride - 2 * padding + g.kw;
  if (g.h < 1 || g.w < 1)
    throw ShapeError("conv2d_transpose: padding " + std::to_string(padding) + " leaves an empty output for " +
                     shape_str(x.shape()));
  return conv_transpose_forward<T>("conv2d_transpose", x, kernel, bias, g, Shape{g.n, g.c, g.h, g.w});
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, const Conv3dOptions& opt) {
  if (x.rank() != 5 || kernel.rank() != 5)
    throw ShapeError("conv3d: expected input [N,C,T,H,W] and kernel [O,C,kt,kh,kw], got " + shape_str(x.shape()) +
                     " and " + shape_str(kernel.shape()));
  if (x.dim(1) != kernel.dim(1))
    throw ShapeError("conv3d: input channel axis 1 (" + std::to_string(x.dim(1)) + ") differs from kernel axis 1 (" +
                     std::to_string(kernel.dim(1)) + ")");
  for (Index p : opt.padding)
    if (p < 0) throw ShapeError("conv3d: negative padding");
  check_bias("conv3d", bias.defined(), bias.defined() ? bias.numel() : 0, kernel.dim(0));
  Geometry g;
  g.n = x.dim(0);
  g.c = x.dim(1);
  g.t = x.dim(2);
  g.h = x.dim(3);
  g.w = x.dim(4);
  g.o = kernel.dim(0);
  g.kt = kernel.dim(2);
  g.kh = kernel.dim(3);
  g.kw = kernel.dim(4);
  g.st = opt.stride[0];
  g.sh = opt.stride[1];
  g.sw = opt.stride[2];
  const Index pt_total = opt.causal_time ? g.kt - 1 : 2 * opt.padding[0];
  g.pt = opt.causal_time ? g.kt - 1 : opt.padding[0];
  g.ph = opt.padding[1];
  g.pw = opt.padding[2];
  g.to = conv_extent("conv3d", "T (2)", g.t, pt_total, g.kt, g.st);
  g.ho = conv_extent("conv3d", "H (3)", g.h, 2 * g.ph, g.kh, g.sh);
  g.wo = conv_extent("conv3d", "W (4)", g.w, 2 * g.pw, g.kw, g.sw);
  return conv_forward<T>("conv3d", x, kernel, bias, g, Shape{g.n, g.o, g.to, g.ho, g.wo});
}

#define STP_CONV(T)                                                                                     \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Index, Index);     \
  template Tensor<T> conv2d_transpose<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Index,   \
                                         Index);                                                        \
  template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Conv3dOptions&);

STP_CONV(float)
STP_CONV(double)

}  // namespace stp::ops
