#include "stpred/ops.hpp"

#include "gemm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace stp::ops {

namespace {

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

int norm_axis(int axis, int rank, const char* op) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank)
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  return a;
}

// outer x len x inner view around one axis
struct AxisView {
  Index outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const Shape& s, int axis) {
  AxisView v;
  for (int i = 0; i < axis; ++i) v.outer *= s[i];
  v.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  const auto& ad = a.vec();
  const auto& bd = b.vec();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] + bd[i];
  std::vector<Tensor<T>> in{a, b};
  return make_op_result<T>("add", a.shape(), std::move(out), in, [a, b](std::span<const T> g) {
    for (auto* t : {&a, &b}) {
      auto s = grad_slot(*t);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  const auto& ad = a.vec();
  const auto& bd = b.vec();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] - bd[i];
  std::vector<Tensor<T>> in{a, b};
  return make_op_result<T>("sub", a.shape(), std::move(out), in, [a, b](std::span<const T> g) {
    auto sa = grad_slot(a);
    for (std::size_t i = 0; i < sa.size(); ++i) sa[i] += g[i];
    auto sb = grad_slot(b);
    for (std::size_t i = 0; i < sb.size(); ++i) sb[i] -= g[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  const auto& ad = a.vec();
  const auto& bd = b.vec();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] * bd[i];
  std::vector<Tensor<T>> in{a, b};
  return make_op_result<T>("mul", a.shape(), std::move(out), in, [a, b](std::span<const T> g) {
    const auto& av = a.vec();
    const auto& bv = b.vec();
    auto sa = grad_slot(a);
    for (std::size_t i = 0; i < sa.size(); ++i) sa[i] += g[i] * bv[i];
    auto sb = grad_slot(b);
    for (std::size_t i = 0; i < sb.size(); ++i) sb[i] += g[i] * av[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  const auto& xd = x.vec();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] * factor;
  std::vector<Tensor<T>> in{x};
  return make_op_result<T>("scale", x.shape(), std::move(out), in, [x, factor](std::span<const T> g) {
    auto s = grad_slot(x);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[i] * factor;
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  const auto& xd = x.vec();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-xd[i]));
  std::vector<Tensor<T>> in{x};
  auto y = std::make_shared<std::vector<T>>(out);
  return make_op_result<T>("sigmoid", x.shape(), std::move(out), in, [x, y](std::span<const T> g) {
    auto s = grad_slot(x);
    const auto& yv = *y;
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[i] * yv[i] * (T(1) - yv[i]);
  });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  const auto& xd = x.vec();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = std::tanh(xd[i]);
  std::vector<Tensor<T>> in{x};
  auto y = std::make_shared<std::vector<T>>(out);
  return make_op_result<T>("tanh", x.shape(), std::move(out), in, [x, y](std::span<const T> g) {
    auto s = grad_slot(x);
    const auto& yv = *y;
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[i] * (T(1) - yv[i] * yv[i]);
  });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T alpha) {
  const auto& xd = x.vec();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] >= T(0) ? xd[i] : alpha * xd[i];
  std::vector<Tensor<T>> in{x};
  return make_op_result<T>("leaky_relu", x.shape(), std::move(out), in, [x, alpha](std::span<const T> g) {
    auto s = grad_slot(x);
    const auto& xv = x.vec();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += xv[i] >= T(0) ? g[i] : alpha * g[i];
  });
}

template <typename T>
Tensor<T> bias_add(const Tensor<T>& x, const Tensor<T>& bias, int axis) {
  const int a = norm_axis(axis, x.rank(), "bias_add");
  if (bias.numel() != x.dim(a))
    throw ShapeError("bias_add: bias has " + std::to_string(bias.numel()) + " entries, axis " +
                     std::to_string(a) + " has extent " + std::to_string(x.dim(a)));
  const AxisView v = axis_view(x.shape(), a);
  const auto& xd = x.vec();
  const auto& bd = bias.vec();
  std::vector<T> out(xd.size());
  for (Index o = 0; o < v.outer; ++o)
    for (Index c = 0; c < v.len; ++c) {
      const Index base = (o * v.len + c) * v.inner;
      for (Index i = 0; i < v.inner; ++i) out[base + i] = xd[base + i] + bd[c];
    }
  std::vector<Tensor<T>> in{x, bias};
  return make_op_result<T>("bias_add", x.shape(), std::move(out), in, [x, bias, v](std::span<const T> g) {
    auto sx = grad_slot(x);
    for (std::size_t i = 0; i < sx.size(); ++i) sx[i] += g[i];
    auto sb = grad_slot(bias);
    if (sb.empty()) return;
    for (Index o = 0; o < v.outer; ++o)
      for (Index c = 0; c < v.len; ++c) {
        const Index base = (o * v.len + c) * v.inner;
        T acc = 0;
        for (Index i = 0; i < v.inner; ++i) acc += g[base + i];
        sb[c] += acc;
      }
  });
}

template <typename T>
Tensor<T> scale_shift(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, int axis) {
  const int a = norm_axis(axis, x.rank(), "scale_shift");
  if (gamma.numel() != x.dim(a) || beta.numel() != x.dim(a))
    throw ShapeError("scale_shift: gamma/beta must have " + std::to_string(x.dim(a)) + " entries");
  const AxisView v = axis_view(x.shape(), a);
  const auto& xd = x.vec();
  const auto& gd = gamma.vec();
  const auto& bd = beta.vec();
  std::vector<T> out(xd.size());
  for (Index o = 0; o < v.outer; ++o)
    for (Index c = 0; c < v.len; ++c) {
      const Index base = (o * v.len + c) * v.inner;
      for (Index i = 0; i < v.inner; ++i) out[base + i] = xd[base + i] * gd[c] + bd[c];
    }
  std::vector<Tensor<T>> in{x, gamma, beta};
  return make_op_result<T>(
      "scale_shift", x.shape(), std::move(out), in, [x, gamma, beta, v](std::span<const T> g) {
        const auto& xv = x.vec();
        const auto& gv = gamma.vec();
        auto sx = grad_slot(x);
        auto sg = grad_slot(gamma);
        auto sb = grad_slot(beta);
        for (Index o = 0; o < v.outer; ++o)
          for (Index c = 0; c < v.len; ++c) {
            const Index base = (o * v.len + c) * v.inner;
            T acc_g = 0, acc_b = 0;
            for (Index i = 0; i < v.inner; ++i) {
              const T gi = g[base + i];
              if (!sx.empty()) sx[base + i] += gi * gv[c];
              acc_g += gi * xv[base + i];
              acc_b += gi;
            }
            if (!sg.empty()) sg[c] += acc_g;
            if (!sb.empty()) sb[c] += acc_b;
          }
      });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, int trailing_axes, T eps) {
  if (trailing_axes < 1 || trailing_axes > x.rank())
    throw ShapeError("layer_norm: trailing_axes " + std::to_string(trailing_axes) + " invalid for rank " +
                     std::to_string(x.rank()));
  if (!(eps > T(0))) throw std::invalid_argument("layer_norm: eps must be positive");
  Index inner = 1;
  for (int i = x.rank() - trailing_axes; i < x.rank(); ++i) inner *= x.dim(i);
  const Index outer = x.numel() / inner;
  const auto& xd = x.vec();
  std::vector<T> out(xd.size());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(outer));
  for (Index o = 0; o < outer; ++o) {
    const T* p = xd.data() + o * inner;
    T m = 0;
    for (Index i = 0; i < inner; ++i) m += p[i];
    m /= T(inner);
    T var = 0;
    for (Index i = 0; i < inner; ++i) var += (p[i] - m) * (p[i] - m);
    var /= T(inner);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[o] = is;
    for (Index i = 0; i < inner; ++i) out[o * inner + i] = (p[i] - m) * is;
  }
  auto y = std::make_shared<std::vector<T>>(out);
  std::vector<Tensor<T>> in{x};
  return make_op_result<T>(
      "layer_norm", x.shape(), std::move(out), in, [x, y, inv_std, inner, outer](std::span<const T> g) {
        auto sx = grad_slot(x);
        if (sx.empty()) return;
        const auto& yv = *y;
        for (Index o = 0; o < outer; ++o) {
          const T* gp = g.data() + o * inner;
          const T* yp = yv.data() + o * inner;
          T mg = 0, mgy = 0;
          for (Index i = 0; i < inner; ++i) {
            mg += gp[i];
            mgy += gp[i] * yp[i];
          }
          mg /= T(inner);
          mgy /= T(inner);
          const T is = (*inv_std)[o];
          for (Index i = 0; i < inner; ++i) sx[o * inner + i] += is * (gp[i] - mg - yp[i] * mgy);
        }
      });
}

namespace {

template <typename T>
Tensor<T> softmax_impl(const char* name, const Tensor<T>& x, int axis, const Tensor<T>* mask) {
  const int a = norm_axis(axis, x.rank(), name);
  const AxisView v = axis_view(x.shape(), a);
  Index mask_rows = 0;
  if (mask != nullptr) {
    if (x.rank() < 2 || a != x.rank() - 1 || mask->rank() != 2 || mask->dim(0) != x.dim(-2) ||
        mask->dim(1) != x.dim(-1))
      throw ShapeError(std::string(name) + ": mask " + shape_str(mask->shape()) +
                       " must match the last two axes of " + shape_str(x.shape()));
    mask_rows = mask->dim(0);
  }
  const auto& xd = x.vec();
  std::vector<T> out(xd.size());
  std::vector<T> row(static_cast<std::size_t>(v.len));
  for (Index o = 0; o < v.outer; ++o)
    for (Index i = 0; i < v.inner; ++i) {
      const T* mrow = mask ? mask->vec().data() + (o % mask_rows) * v.len : nullptr;
      T mx = -std::numeric_limits<T>::infinity();
      for (Index k = 0; k < v.len; ++k) {
        T val = xd[(o * v.len + k) * v.inner + i];
        if (mrow) val += mrow[k];
        row[k] = val;
        mx = std::max(mx, val);
      }
      if (!std::isfinite(mx)) throw NumericalError(std::string(name) + ": row has no finite entry");
      T total = 0;
      for (Index k = 0; k < v.len; ++k) {
        row[k] = std::exp(row[k] - mx);
        total += row[k];
      }
      for (Index k = 0; k < v.len; ++k) out[(o * v.len + k) * v.inner + i] = row[k] / total;
    }
  auto y = std::make_shared<std::vector<T>>(out);
  std::vector<Tensor<T>> in{x};
  return make_op_result<T>(name, x.shape(), std::move(out), in, [x, y, v](std::span<const T> g) {
    auto sx = grad_slot(x);
    if (sx.empty()) return;
    const auto& yv = *y;
    for (Index o = 0; o < v.outer; ++o)
      for (Index i = 0; i < v.inner; ++i) {
        T dot = 0;
        for (Index k = 0; k < v.len; ++k) {
          const Index idx = (o * v.len + k) * v.inner + i;
          dot += g[idx] * yv[idx];
        }
        for (Index k = 0; k < v.len; ++k) {
          const Index idx = (o * v.len + k) * v.inner + i;
          sx[idx] += yv[idx] * (g[idx] - dot);
        }
      }
  });
}

}  // namespace

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  return softmax_impl<T>("softmax", x, axis, nullptr);
}

template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& x, const Tensor<T>& mask) {
  return softmax_impl<T>("masked_softmax", x, -1, &mask);
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a, bool transpose_b) {
  if (a.rank() != b.rank() || (a.rank() != 2 && a.rank() != 3))
    throw ShapeError("matmul: operands must both be rank 2 or rank 3, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const bool batched = a.rank() == 3;
  const Index batch = batched ? a.dim(0) : 1;
  if (batched && b.dim(0) != batch)
    throw ShapeError("matmul: batch extents differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const Index ar = a.dim(-2), ac = a.dim(-1), br = b.dim(-2), bc = b.dim(-1);
  const Index m = transpose_a ? ac : ar;
  const Index k = transpose_a ? ar : ac;
  const Index kb = transpose_b ? bc : br;
  const Index n = transpose_b ? br : bc;
  if (k != kb)
    throw ShapeError("matmul: inner extents differ (" + std::to_string(k) + " vs " + std::to_string(kb) +
                     ") for " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<T> out(static_cast<std::size_t>(batch * m * n));
  for (Index bi = 0; bi < batch; ++bi)
    detail::gemm(a.vec().data() + bi * ar * ac, ar, ac, transpose_a, b.vec().data() + bi * br * bc, br, bc, transpose_b,
                 out.data() + bi * m * n, false);
  Shape shape = batched ? Shape{batch, m, n} : Shape{m, n};
  std::vector<Tensor<T>> in{a, b};
  return make_op_result<T>(
      "matmul", shape, std::move(out), in,
      [a, b, transpose_a, transpose_b, batch, ar, ac, br, bc, m, n](std::span<const T> g) {
        auto sa = grad_slot(a);
        auto sb = grad_slot(b);
        for (Index bi = 0; bi < batch; ++bi) {
          const T* gp = g.data() + bi * m * n;
          const T* ap = a.vec().data() + bi * ar * ac;
          const T* bp = b.vec().data() + bi * br * bc;
          // C = opA(A) opB(B)
          if (!sa.empty()) {
            T* da = sa.data() + bi * ar * ac;
            if (!transpose_a) detail::gemm(gp, m, n, false, bp, br, bc, !transpose_b, da, true);
            else detail::gemm(bp, br, bc, transpose_b, gp, m, n, true, da, true);
          }
          if (!sb.empty()) {
            T* db = sb.data() + bi * br * bc;
            if (!transpose_b) detail::gemm(ap, ar, ac, !transpose_a, gp, m, n, false, db, true);
            else detail::gemm(gp, m, n, true, ap, ar, ac, transpose_a, db, true);
          }
        }
      });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const Shape& s0 = parts[0].shape();
  const int a = norm_axis(axis, static_cast<int>(s0.size()), "concat");
  Shape out_shape = s0;
  out_shape[a] = 0;
  for (const auto& p : parts) {
    if (p.rank() != static_cast<int>(s0.size()))
      throw ShapeError("concat: rank mismatch " + shape_str(s0) + " vs " + shape_str(p.shape()));
    for (int i = 0; i < p.rank(); ++i)
      if (i != a && p.dim(i) != s0[i])
        throw ShapeError("concat: extent mismatch on axis " + std::to_string(i) + ": " + shape_str(s0) + " vs " +
                         shape_str(p.shape()));
    out_shape[a] += p.dim(a);
  }
  const AxisView vo = axis_view(out_shape, a);
  std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const Index len = p.dim(a) * vo.inner;
    const auto& pd = p.vec();
    for (Index o = 0; o < vo.outer; ++o)
      std::copy_n(pd.data() + o * len, len, out.data() + o * vo.len * vo.inner + off * vo.inner);
    off += p.dim(a);
  }
  std::vector<Tensor<T>> in(parts.begin(), parts.end());
  return make_op_result<T>("concat", out_shape, std::move(out), in, [in, offsets, vo, a](std::span<const T> g) {
    for (std::size_t pi = 0; pi < in.size(); ++pi) {
      auto s = grad_slot(in[pi]);
      if (s.empty()) continue;
      const Index len = in[pi].dim(a) * vo.inner;
      for (Index o = 0; o < vo.outer; ++o) {
        const T* src = g.data() + o * vo.len * vo.inner + offsets[pi] * vo.inner;
        T* dst = s.data() + o * len;
        for (Index i = 0; i < len; ++i) dst[i] += src[i];
      }
    }
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, Index begin, Index end) {
  const int a = norm_axis(axis, x.rank(), "slice");
  if (begin < 0 || end > x.dim(a) || begin >= end)
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for axis " +
                     std::to_string(a) + " of " + shape_str(x.shape()));
  const AxisView v = axis_view(x.shape(), a);
  Shape out_shape = x.shape();
  out_shape[a] = end - begin;
  const Index len = (end - begin) * v.inner;
  std::vector<T> out(static_cast<std::size_t>(v.outer * len));
  const auto& xd = x.vec();
  for (Index o = 0; o < v.outer; ++o)
    std::copy_n(xd.data() + (o * v.len + begin) * v.inner, len, out.data() + o * len);
  std::vector<Tensor<T>> in{x};
  return make_op_result<T>("slice", out_shape, std::move(out), in, [x, v, begin, len](std::span<const T> g) {
    auto s = grad_slot(x);
    for (Index o = 0; o < v.outer; ++o) {
      T* dst = s.data() + (o * v.len + begin) * v.inner;
      const T* src = g.data() + o * len;
      for (Index i = 0; i < len; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  std::vector<Tensor<T>> in{x};
  return make_op_result<T>("reshape", std::move(shape), x.vec(), in, [x](std::span<const T> g) {
    auto s = grad_slot(x);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[i];
  });
}

namespace {

std::vector<Index> strides_of(const Shape& s) {
  std::vector<Index> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

// For each output flat index, the input flat index it reads from.
std::vector<Index> permute_map(const Shape& in_shape, std::span<const int> axes, Shape& out_shape) {
  const int r = static_cast<int>(in_shape.size());
  out_shape.resize(r);
  for (int i = 0; i < r; ++i) out_shape[i] = in_shape[axes[i]];
  const auto in_st = strides_of(in_shape);
  std::vector<Index> src_stride(r);
  for (int i = 0; i < r; ++i) src_stride[i] = in_st[axes[i]];
  std::vector<Index> map(static_cast<std::size_t>(numel(in_shape)));
  std::vector<Index> idx(r, 0);
  Index src = 0;
  for (std::size_t f = 0; f < map.size(); ++f) {
    map[f] = src;
    for (int d = r - 1; d >= 0; --d) {
      ++idx[d];
      src += src_stride[d];
      if (idx[d] < out_shape[d]) break;
      src -= src_stride[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  return map;
}

}  // namespace

template <typename T>
Tensor<T> permute(const Tensor<T>& x, std::span<const int> axes) {
  const int r = x.rank();
  if (static_cast<int>(axes.size()) != r) throw ShapeError("permute: axes count differs from rank");
  std::vector<bool> seen(r, false);
  for (int ax : axes) {
    if (ax < 0 || ax >= r || seen[ax]) throw ShapeError("permute: axes are not a permutation");
    seen[ax] = true;
  }
  Shape out_shape;
  auto map = std::make_shared<std::vector<Index>>(permute_map(x.shape(), axes, out_shape));
  const auto& xd = x.vec();
  std::vector<T> out(xd.size());
  for (std::size_t f = 0; f < out.size(); ++f) out[f] = xd[(*map)[f]];
  std::vector<Tensor<T>> in{x};
  return make_op_result<T>("permute", out_shape, std::move(out), in, [x, map](std::span<const T> g) {
    auto s = grad_slot(x);
    for (std::size_t f = 0; f < g.size(); ++f) s[(*map)[f]] += g[f];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.vec()) acc += v;
  std::vector<Tensor<T>> in{x};
  return make_op_result<T>("sum", Shape{}, std::vector<T>{acc}, in, [x](std::span<const T> g) {
    auto s = grad_slot(x);
    for (auto& v : s) v += g[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.vec()) acc += v;
  const T inv = T(1) / T(x.numel());
  std::vector<Tensor<T>> in{x};
  return make_op_result<T>("mean", Shape{}, std::vector<T>{acc * inv}, in, [x, inv](std::span<const T> g) {
    auto s = grad_slot(x);
    for (auto& v : s) v += g[0] * inv;
  });
}

namespace {

// Maps each input flat index to its output flat index after dropping `axes`.
std::vector<Index> reduce_map(const Shape& in_shape, std::span<const int> axes, Shape& out_shape) {
  const int r = static_cast<int>(in_shape.size());
  std::vector<bool> drop(r, false);
  for (int ax : axes) {
    const int a = norm_axis(ax, r, "reduce");
    if (drop[a]) throw ShapeError("reduce: repeated axis");
    drop[a] = true;
  }
  out_shape.clear();
  for (int i = 0; i < r; ++i)
    if (!drop[i]) out_shape.push_back(in_shape[i]);
  const auto out_st = strides_of(out_shape);
  std::vector<Index> keep_stride(r, 0);
  for (int i = 0, j = 0; i < r; ++i)
    if (!drop[i]) keep_stride[i] = out_st[j++];
  std::vector<Index> map(static_cast<std::size_t>(numel(in_shape)));
  std::vector<Index> idx(r, 0);
  Index dst = 0;
  for (std::size_t f = 0; f < map.size(); ++f) {
    map[f] = dst;
    for (int d = r - 1; d >= 0; --d) {
      ++idx[d];
      dst += keep_stride[d];
      if (idx[d] < in_shape[d]) break;
      dst -= keep_stride[d] * in_shape[d];
      idx[d] = 0;
    }
  }
  return map;
}

template <typename T>
Tensor<T> reduce_axes(const char* name, const Tensor<T>& x, std::span<const int> axes, bool average) {
  Shape out_shape;
  auto map = std::make_shared<std::vector<Index>>(reduce_map(x.shape(), axes, out_shape));
  const Index out_n = numel(out_shape);
  const T factor = average ? T(out_n) / T(x.numel()) : T(1);
  std::vector<T> out(static_cast<std::size_t>(out_n), T(0));
  const auto& xd = x.vec();
  for (std::size_t f = 0; f < xd.size(); ++f) out[(*map)[f]] += xd[f];
  if (average)
    for (auto& v : out) v *= factor;
  std::vector<Tensor<T>> in{x};
  return make_op_result<T>(name, out_shape, std::move(out), in, [x, map, factor](std::span<const T> g) {
    auto s = grad_slot(x);
    for (std::size_t f = 0; f < s.size(); ++f) s[f] += g[(*map)[f]] * factor;
  });
}

}  // namespace

template <typename T>
Tensor<T> sum(const Tensor<T>& x, std::span<const int> axes) {
  return reduce_axes<T>("sum_axes", x, axes, false);
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::span<const int> axes) {
  return reduce_axes<T>("mean_axes", x, axes, true);
}

template <typename T>
Tensor<T> stop_gradient(const Tensor<T>& x) {
  return x.detach();
}

template <typename T>
Tensor<T> embed_grid(const Tensor<T>& table, std::span<const std::int32_t> indices, Index n, Index h, Index w) {
  if (table.rank() != 2) throw ShapeError("embed_grid: table must be [K,D], got " + shape_str(table.shape()));
  const Index k = table.dim(0), d = table.dim(1), sites = h * w;
  if (static_cast<Index>(indices.size()) != n * sites)
    throw ShapeError("embed_grid: " + std::to_string(indices.size()) + " indices for a " + std::to_string(n) +
                     "x" + std::to_string(h) + "x" + std::to_string(w) + " grid");
  const auto& td = table.vec();
  std::vector<T> out(static_cast<std::size_t>(n * d * sites));
  auto idx = std::make_shared<std::vector<std::int32_t>>(indices.begin(), indices.end());
  for (Index b = 0; b < n; ++b)
    for (Index s = 0; s < sites; ++s) {
      const Index row = (*idx)[b * sites + s];
      if (row < 0 || row >= k) throw ShapeError("embed_grid: index " + std::to_string(row) + " out of range");
      for (Index c = 0; c < d; ++c) out[(b * d + c) * sites + s] = td[row * d + c];
    }
  std::vector<Tensor<T>> in{table};
  return make_op_result<T>("embed_grid", Shape{n, d, h, w}, std::move(out), in,
                           [table, idx, n, d, sites](std::span<const T> g) {
                             auto st = grad_slot(table);
                             for (Index b = 0; b < n; ++b)
                               for (Index s = 0; s < sites; ++s) {
                                 const Index row = (*idx)[b * sites + s];
                                 for (Index c = 0; c < d; ++c) st[row * d + c] += g[(b * d + c) * sites + s];
                               }
                           });
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
  const auto diff = sub(a, b);
  return mean(mul(diff, diff));
}

#define STP_OPS(T)                                                                                  \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                                 \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                                  \
  template Tensor<T> tanh<T>(const Tensor<T>&);                                                     \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                                            \
  template Tensor<T> bias_add<T>(const Tensor<T>&, const Tensor<T>&, int);                          \
  template Tensor<T> scale_shift<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int);     \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, int, T);                                       \
  template Tensor<T> softmax<T>(const Tensor<T>&, int);                                             \
  template Tensor<T> masked_softmax<T>(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&, bool, bool);                     \
  template Tensor<T> concat<T>(std::span<const Tensor<T>>, int);                                    \
  template Tensor<T> slice<T>(const Tensor<T>&, int, Index, Index);                                 \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                           \
  template Tensor<T> permute<T>(const Tensor<T>&, std::span<const int>);                            \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                      \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                     \
  template Tensor<T> sum<T>(const Tensor<T>&, std::span<const int>);                                \
  template Tensor<T> mean<T>(const Tensor<T>&, std::span<const int>);                               \
  template Tensor<T> stop_gradient<T>(const Tensor<T>&);                                            \
  template Tensor<T> embed_grid<T>(const Tensor<T>&, std::span<const std::int32_t>, Index, Index, Index); \
  template Tensor<T> mse_loss<T>(const Tensor<T>&, const Tensor<T>&);

STP_OPS(float)
STP_OPS(double)

}  // namespace stp::ops
