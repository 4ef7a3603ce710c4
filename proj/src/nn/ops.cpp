#include "objcomp/nn/ops.hpp"

#include <algorithm>

#include <Eigen/Dense>
#include <cmath>

#include "objcomp/errors.hpp"

namespace objcomp::nn {
namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<Mat<T>>;
template <typename T>
using CMapM = Eigen::Map<const Mat<T>>;
template <typename T>
using StridedM = Eigen::Map<Mat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CStridedM = Eigen::Map<const Mat<T>, 0, Eigen::OuterStride<>>;

void require_rank(const Shape& s, int rank, const char* what) {
  if (static_cast<int>(s.size()) != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_string(s));
  }
}

template <typename T>
Tensor<T>& grad_of(const Var<T>& v) {
  return v->grad_buffer();
}

// Unfolds output rows [r0, r1) of one image [C, H, W] into columns
// [C*k*k, (r1-r0)*Wo].
template <typename T>
void im2col(const T* x, int channels, int height, int width, int k, int stride, int pad, int r0, int r1, int out_w,
            T* col) {
  const int tile = (r1 - r0) * out_w;
  for (int c = 0; c < channels; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * height * width;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = col + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * tile;
        for (int oh = r0; oh < r1; ++oh) {
          const int ih = oh * stride - pad + ki;
          T* dst = row + (oh - r0) * out_w;
          if (ih < 0 || ih >= height) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ih) * width;
          if (stride == 1) {
            const int lo = std::max(0, pad - kj), hi = std::min(out_w, width + pad - kj);
            std::fill(dst, dst + std::max(lo, 0), T(0));
            if (hi > lo) std::copy(src + lo - pad + kj, src + hi - pad + kj, dst + lo);
            if (hi < out_w) std::fill(dst + std::max(hi, 0), dst + out_w, T(0));
          } else {
            for (int ow = 0; ow < out_w; ++ow) {
              const int iw = ow * stride - pad + kj;
              dst[ow] = (iw >= 0 && iw < width) ? src[iw] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int channels, int height, int width, int k, int stride, int pad, int r0, int r1, int out_w,
            T* x) {
  const int tile = (r1 - r0) * out_w;
  for (int c = 0; c < channels; ++c) {
    T* plane = x + static_cast<std::size_t>(c) * height * width;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = col + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * tile;
        for (int oh = r0; oh < r1; ++oh) {
          const int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= height) continue;
          T* dst = plane + static_cast<std::size_t>(ih) * width;
          const T* src = row + (oh - r0) * out_w;
          if (stride == 1) {
            const int lo = std::max(0, pad - kj), hi = std::min(out_w, width + pad - kj);
            for (int ow = lo; ow < hi; ++ow) dst[ow - pad + kj] += src[ow];
            continue;
          }
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * stride - pad + kj;
            if (iw >= 0 && iw < width) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

// Output rows per im2col tile, sized so a tile of columns stays cache-resident.
inline int conv_tile_rows(int ckk, int out_w) {
  const int cols = std::max(64, (1 << 17) / std::max(ckk, 1));
  return std::max(1, cols / std::max(out_w, 1));
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_shape(b->shape(), a->shape(), "add");
  Tensor<T> out = a->value;
  out += b->value;
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad) in->accumulate(self.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_shape(b->shape(), a->shape(), "sub");
  Tensor<T> out = a->value;
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out[i] -= b->value[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad);
    if (self.inputs[1]->requires_grad) {
      Tensor<T>& g = grad_of(self.inputs[1]);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_shape(b->shape(), a->shape(), "mul");
  Tensor<T> out = a->value;
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out[i] *= b->value[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const auto& a = self.inputs[0];
    const auto& b = self.inputs[1];
    if (a->requires_grad) {
      Tensor<T>& g = grad_of(a);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      Tensor<T>& g = grad_of(b);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * a->value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a->value;
  for (auto& v : out.storage()) v *= factor;
  return make_op<T>(std::move(out), {a}, [factor](Node<T>& self) {
    Tensor<T>& g = grad_of(self.inputs[0]);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a->value.reshaped(std::move(shape));
  return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
    Tensor<T>& g = grad_of(self.inputs[0]);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
using ArrayMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using CArrayMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

template <typename T>
Var<T> silu(const Var<T>& x) {
  const auto n = static_cast<Eigen::Index>(x->value.numel());
  Tensor<T> out(x->value.shape());
  CArrayMap<T> in(x->value.data(), n);
  ArrayMap<T>(out.data(), n) = in / (T(1) + (-in).exp());
  return make_op<T>(std::move(out), {x}, [n](Node<T>& self) {
    CArrayMap<T> in(self.inputs[0]->value.data(), n);
    const Eigen::Array<T, Eigen::Dynamic, 1> s = T(1) / (T(1) + (-in).exp());
    ArrayMap<T>(grad_of(self.inputs[0]).data(), n) +=
        CArrayMap<T>(self.grad.data(), n) * s * (T(1) + in * (T(1) - s));
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  const T c = T(0.7978845608028654);  // sqrt(2/pi)
  const T a = T(0.044715);
  const auto n = static_cast<Eigen::Index>(x->value.numel());
  Tensor<T> out(x->value.shape());
  CArrayMap<T> in(x->value.data(), n);
  ArrayMap<T>(out.data(), n) = T(0.5) * in * (T(1) + (c * (in + a * in.cube())).tanh());
  return make_op<T>(std::move(out), {x}, [n, a, c](Node<T>& self) {
    CArrayMap<T> in(self.inputs[0]->value.data(), n);
    const Eigen::Array<T, Eigen::Dynamic, 1> th = (c * (in + a * in.cube())).tanh();
    const auto du = c * (T(1) + T(3) * a * in.square());
    ArrayMap<T>(grad_of(self.inputs[0]).data(), n) +=
        CArrayMap<T>(self.grad.data(), n) * (T(0.5) * (T(1) + th) + T(0.5) * in * (T(1) - th.square()) * du);
  });
}

// ---------------------------------------------------------------------------
// Dense maps
// ---------------------------------------------------------------------------

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  require_rank(weight->shape(), 2, "linear weight");
  const int out_f = weight->shape()[0];
  const int in_f = weight->shape()[1];
  if (x->value.rank() < 1 || x->shape().back() != in_f) {
    throw ShapeError("linear: input " + shape_string(x->shape()) + " incompatible with weight " +
                     shape_string(weight->shape()));
  }
  if (bias) check_shape(bias->shape(), Shape{out_f}, "linear bias");
  const int rows = static_cast<int>(x->value.numel() / in_f);
  Shape out_shape = x->shape();
  out_shape.back() = out_f;
  Tensor<T> out(out_shape);
  MapM<T> y(out.data(), rows, out_f);
  y.noalias() = CMapM<T>(x->value.data(), rows, in_f) * CMapM<T>(weight->value.data(), out_f, in_f).transpose();
  if (bias) y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias->value.data(), out_f);

  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(bias);
  return make_op<T>(std::move(out), std::move(inputs), [rows, in_f, out_f](Node<T>& self) {
    const auto& x = self.inputs[0];
    const auto& w = self.inputs[1];
    CMapM<T> gy(self.grad.data(), rows, out_f);
    if (x->requires_grad) {
      MapM<T>(grad_of(x).data(), rows, in_f).noalias() += gy * CMapM<T>(w->value.data(), out_f, in_f);
    }
    if (w->requires_grad) {
      MapM<T>(grad_of(w).data(), out_f, in_f).noalias() += gy.transpose() * CMapM<T>(x->value.data(), rows, in_f);
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(grad_of(self.inputs[2]).data(), out_f) += gy.colwise().sum();
    }
  });
}

template <typename T>
Var<T> token_mix(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias) {
  require_rank(x->shape(), 3, "token_mix input");
  require_rank(kernel->shape(), 2, "token_mix kernel");
  const int n = x->shape()[0], len_in = x->shape()[1], d = x->shape()[2];
  const int len_out = kernel->shape()[0];
  if (kernel->shape()[1] != len_in) {
    throw ShapeError("token_mix: kernel " + shape_string(kernel->shape()) + " incompatible with input " +
                     shape_string(x->shape()));
  }
  check_shape(bias->shape(), Shape{len_out}, "token_mix bias");
  Tensor<T> out({n, len_out, d});
  CMapM<T> k(kernel->value.data(), len_out, len_in);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias->value.data(), len_out);
  for (int i = 0; i < n; ++i) {
    MapM<T> y(out.data() + static_cast<std::size_t>(i) * len_out * d, len_out, d);
    y.noalias() = k * CMapM<T>(x->value.data() + static_cast<std::size_t>(i) * len_in * d, len_in, d);
    y.colwise() += b;
  }
  return make_op<T>(std::move(out), {x, kernel, bias}, [n, len_in, len_out, d](Node<T>& self) {
    const auto& x = self.inputs[0];
    const auto& kv = self.inputs[1];
    CMapM<T> k(kv->value.data(), len_out, len_in);
    for (int i = 0; i < n; ++i) {
      CMapM<T> gy(self.grad.data() + static_cast<std::size_t>(i) * len_out * d, len_out, d);
      if (x->requires_grad) {
        MapM<T>(grad_of(x).data() + static_cast<std::size_t>(i) * len_in * d, len_in, d).noalias() +=
            k.transpose() * gy;
      }
      if (kv->requires_grad) {
        MapM<T>(grad_of(kv).data(), len_out, len_in).noalias() +=
            gy * CMapM<T>(x->value.data() + static_cast<std::size_t>(i) * len_in * d, len_in, d).transpose();
      }
      if (self.inputs[2]->requires_grad) {
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(grad_of(self.inputs[2]).data(), len_out) +=
            gy.rowwise().sum();
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Normalisation
// ---------------------------------------------------------------------------

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const int d = x->shape().back();
  check_shape(gamma->shape(), Shape{d}, "layer_norm gamma");
  check_shape(beta->shape(), Shape{d}, "layer_norm beta");
  const std::size_t rows = x->value.numel() / d;
  Tensor<T> out(x->shape());
  auto xhat = std::make_shared<std::vector<T>>(x->value.numel());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x->value.data() + r * d;
    T mean = 0;
    for (int j = 0; j < d; ++j) mean += in[j];
    mean /= d;
    T var = 0;
    for (int j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= d;
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    T* xh = xhat->data() + r * d;
    T* o = out.data() + r * d;
    for (int j = 0; j < d; ++j) {
      xh[j] = (in[j] - mean) * rs;
      o[j] = xh[j] * gamma->value[j] + beta->value[j];
    }
  }
  return make_op<T>(std::move(out), {x, gamma, beta}, [xhat, rstd, rows, d](Node<T>& self) {
    const auto& x = self.inputs[0];
    const auto& gamma = self.inputs[1];
    const auto& beta = self.inputs[2];
    std::vector<T> dxh(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* gy = self.grad.data() + r * d;
      const T* xh = xhat->data() + r * d;
      if (gamma->requires_grad) {
        Tensor<T>& gg = grad_of(gamma);
        for (int j = 0; j < d; ++j) gg[j] += gy[j] * xh[j];
      }
      if (beta->requires_grad) {
        Tensor<T>& gb = grad_of(beta);
        for (int j = 0; j < d; ++j) gb[j] += gy[j];
      }
      if (x->requires_grad) {
        T mean_d = 0, mean_dx = 0;
        for (int j = 0; j < d; ++j) {
          dxh[j] = gy[j] * gamma->value[j];
          mean_d += dxh[j];
          mean_dx += dxh[j] * xh[j];
        }
        mean_d /= d;
        mean_dx /= d;
        T* gx = grad_of(x).data() + r * d;
        const T rs = (*rstd)[r];
        for (int j = 0; j < d; ++j) gx[j] += rs * (dxh[j] - mean_d - xh[j] * mean_dx);
      }
    }
  });
}

template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, int groups, T eps) {
  require_rank(x->shape(), 4, "group_norm input");
  const int n = x->shape()[0], c = x->shape()[1], hw = x->shape()[2] * x->shape()[3];
  if (groups <= 0 || c % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(groups) + " groups do not divide " + std::to_string(c) +
                     " channels");
  }
  check_shape(gamma->shape(), Shape{c}, "group_norm gamma");
  check_shape(beta->shape(), Shape{c}, "group_norm beta");
  const int cpg = c / groups;
  const std::size_t group_size = static_cast<std::size_t>(cpg) * hw;
  Tensor<T> out(x->shape());
  auto xhat = std::make_shared<std::vector<T>>(x->value.numel());
  auto rstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n) * groups);
  for (int i = 0; i < n; ++i) {
    for (int g = 0; g < groups; ++g) {
      const std::size_t base = (static_cast<std::size_t>(i) * c + g * cpg) * hw;
      const T* in = x->value.data() + base;
      T mean = 0;
      for (std::size_t j = 0; j < group_size; ++j) mean += in[j];
      mean /= static_cast<T>(group_size);
      T var = 0;
      for (std::size_t j = 0; j < group_size; ++j) var += (in[j] - mean) * (in[j] - mean);
      var /= static_cast<T>(group_size);
      const T rs = T(1) / std::sqrt(var + eps);
      (*rstd)[static_cast<std::size_t>(i) * groups + g] = rs;
      T* xh = xhat->data() + base;
      T* o = out.data() + base;
      for (int ch = 0; ch < cpg; ++ch) {
        const T ga = gamma->value[g * cpg + ch];
        const T be = beta->value[g * cpg + ch];
        for (int p = 0; p < hw; ++p) {
          const std::size_t j = static_cast<std::size_t>(ch) * hw + p;
          xh[j] = (in[j] - mean) * rs;
          o[j] = xh[j] * ga + be;
        }
      }
    }
  }
  return make_op<T>(std::move(out), {x, gamma, beta}, [xhat, rstd, n, c, hw, groups, cpg, group_size](Node<T>& self) {
    const auto& x = self.inputs[0];
    const auto& gamma = self.inputs[1];
    const auto& beta = self.inputs[2];
    std::vector<T> dxh(group_size);
    for (int i = 0; i < n; ++i) {
      for (int g = 0; g < groups; ++g) {
        const std::size_t base = (static_cast<std::size_t>(i) * c + g * cpg) * hw;
        const T* gy = self.grad.data() + base;
        const T* xh = xhat->data() + base;
        for (int ch = 0; ch < cpg; ++ch) {
          const int cc = g * cpg + ch;
          T sg = 0, sb = 0;
          for (int p = 0; p < hw; ++p) {
            const std::size_t j = static_cast<std::size_t>(ch) * hw + p;
            sg += gy[j] * xh[j];
            sb += gy[j];
            dxh[j] = gy[j] * gamma->value[cc];
          }
          if (gamma->requires_grad) grad_of(gamma)[cc] += sg;
          if (beta->requires_grad) grad_of(beta)[cc] += sb;
        }
        if (x->requires_grad) {
          T mean_d = 0, mean_dx = 0;
          for (std::size_t j = 0; j < group_size; ++j) {
            mean_d += dxh[j];
            mean_dx += dxh[j] * xh[j];
          }
          mean_d /= static_cast<T>(group_size);
          mean_dx /= static_cast<T>(group_size);
          const T rs = (*rstd)[static_cast<std::size_t>(i) * groups + g];
          T* gx = grad_of(x).data() + base;
          for (std::size_t j = 0; j < group_size; ++j) gx[j] += rs * (dxh[j] - mean_d - xh[j] * mean_dx);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution and spatial reshaping
// ---------------------------------------------------------------------------

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding) {
  require_rank(x->shape(), 4, "conv2d input");
  require_rank(weight->shape(), 4, "conv2d weight");
  const int n = x->shape()[0], cin = x->shape()[1], h = x->shape()[2], w = x->shape()[3];
  const int cout = weight->shape()[0], k = weight->shape()[2];
  if (weight->shape()[1] != cin || weight->shape()[3] != k) {
    throw ShapeError("conv2d: weight " + shape_string(weight->shape()) + " incompatible with input " +
                     shape_string(x->shape()));
  }
  if (bias) check_shape(bias->shape(), Shape{cout}, "conv2d bias");
  const int oh = (h + 2 * padding - k) / stride + 1;
  const int ow = (w + 2 * padding - k) / stride + 1;
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: empty output for input " + shape_string(x->shape()));
  const int ckk = cin * k * k;
  const int ohw = oh * ow;
  const bool pointwise = (k == 1 && stride == 1 && padding == 0);

  Tensor<T> out({n, cout, oh, ow});
  const int tile_rows = std::min(oh, conv_tile_rows(ckk, ow));
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(ckk) * tile_rows * ow);
  CMapM<T> wm(weight->value.data(), cout, ckk);
  for (int i = 0; i < n; ++i) {
    const T* xi = x->value.data() + static_cast<std::size_t>(i) * cin * h * w;
    T* yi = out.data() + static_cast<std::size_t>(i) * cout * ohw;
    if (pointwise) {
      MapM<T>(yi, cout, ohw).noalias() = wm * CMapM<T>(xi, ckk, ohw);
    } else {
      for (int r0 = 0; r0 < oh; r0 += tile_rows) {
        const int r1 = std::min(oh, r0 + tile_rows);
        const int cols = (r1 - r0) * ow;
        im2col(xi, cin, h, w, k, stride, padding, r0, r1, ow, col.data());
        StridedM<T>(yi + r0 * ow, cout, cols, Eigen::OuterStride<>(ohw)).noalias() = wm * CMapM<T>(col.data(), ckk, cols);
      }
    }
    if (bias) {
      MapM<T>(yi, cout, ohw).colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias->value.data(), cout);
    }
  }

  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(bias);
  return make_op<T>(
      std::move(out), std::move(inputs),
      [n, cin, h, w, cout, k, stride, padding, oh, ow, ckk, ohw, pointwise, tile_rows](Node<T>& self) {
        const auto& x = self.inputs[0];
        const auto& wt = self.inputs[1];
        CMapM<T> wm(wt->value.data(), cout, ckk);
        const std::size_t tile_len = pointwise ? 0 : static_cast<std::size_t>(ckk) * tile_rows * ow;
        std::vector<T> col(tile_len), dcol(tile_len);
        // Stride-1 input gradients are a convolution of the output gradient
        // with the flipped, transposed kernel.
        const bool flipped = !pointwise && stride == 1 && padding <= k - 1 && x->requires_grad;
        const int okk = cout * k * k;
        const int flip_rows = flipped ? std::min(h, conv_tile_rows(okk, w)) : 0;
        Mat<T> wflip;
        std::vector<T> gcol;
        if (flipped) {
          wflip.resize(cin, okk);
          for (int o = 0; o < cout; ++o)
            for (int c = 0; c < cin; ++c)
              for (int ki = 0; ki < k; ++ki)
                for (int kj = 0; kj < k; ++kj)
                  wflip(c, (o * k + (k - 1 - ki)) * k + (k - 1 - kj)) =
                      wt->value[((static_cast<std::size_t>(o) * cin + c) * k + ki) * k + kj];
          gcol.resize(static_cast<std::size_t>(okk) * flip_rows * w);
        }
        for (int i = 0; i < n; ++i) {
          const T* gyi = self.grad.data() + static_cast<std::size_t>(i) * cout * ohw;
          const std::size_t xoff = static_cast<std::size_t>(i) * cin * h * w;
          if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
            Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(grad_of(self.inputs[2]).data(), cout) +=
                CMapM<T>(gyi, cout, ohw).rowwise().sum();
          }
          if (pointwise) {
            CMapM<T> gy(gyi, cout, ohw);
            if (wt->requires_grad) {
              MapM<T>(grad_of(wt).data(), cout, ckk).noalias() +=
                  gy * CMapM<T>(x->value.data() + xoff, ckk, ohw).transpose();
            }
            if (x->requires_grad) MapM<T>(grad_of(x).data() + xoff, cin, ohw).noalias() += wm.transpose() * gy;
            continue;
          }
          for (int r0 = 0; r0 < oh; r0 += tile_rows) {
            const int r1 = std::min(oh, r0 + tile_rows);
            const int cols = (r1 - r0) * ow;
            CStridedM<T> gy(gyi + r0 * ow, cout, cols, Eigen::OuterStride<>(ohw));
            if (wt->requires_grad) {
              im2col(x->value.data() + xoff, cin, h, w, k, stride, padding, r0, r1, ow, col.data());
              MapM<T>(grad_of(wt).data(), cout, ckk).noalias() += gy * CMapM<T>(col.data(), ckk, cols).transpose();
            }
            if (x->requires_grad && !flipped) {
              MapM<T>(dcol.data(), ckk, cols).noalias() = wm.transpose() * gy;
              col2im(dcol.data(), cin, h, w, k, stride, padding, r0, r1, ow, grad_of(x).data() + xoff);
            }
          }
          if (flipped) {
            T* gx = grad_of(x).data() + xoff;
            for (int r0 = 0; r0 < h; r0 += flip_rows) {
              const int r1 = std::min(h, r0 + flip_rows);
              const int cols = (r1 - r0) * w;
              im2col(gyi, cout, oh, ow, k, 1, k - 1 - padding, r0, r1, w, gcol.data());
              StridedM<T>(gx + r0 * w, cin, cols, Eigen::OuterStride<>(h * w)).noalias() +=
                  wflip * CMapM<T>(gcol.data(), okk, cols);
            }
          }
        }
      });
}

template <typename T>
Var<T> upsample_nearest2(const Var<T>& x) {
  require_rank(x->shape(), 4, "upsample input");
  const int n = x->shape()[0], c = x->shape()[1], h = x->shape()[2], w = x->shape()[3];
  Tensor<T> out({n, c, 2 * h, 2 * w});
  const std::size_t planes = static_cast<std::size_t>(n) * c;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x->value.data() + p * h * w;
    T* dst = out.data() + p * 4 * h * w;
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < 2 * w; ++j) dst[i * 2 * w + j] = src[(i / 2) * w + j / 2];
  }
  return make_op<T>(std::move(out), {x}, [planes, h, w](Node<T>& self) {
    Tensor<T>& g = grad_of(self.inputs[0]);
    for (std::size_t p = 0; p < planes; ++p) {
      const T* src = self.grad.data() + p * 4 * h * w;
      T* dst = g.data() + p * h * w;
      for (int i = 0; i < 2 * h; ++i)
        for (int j = 0; j < 2 * w; ++j) dst[(i / 2) * w + j / 2] += src[i * 2 * w + j];
    }
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  require_rank(a->shape(), 4, "concat input");
  require_rank(b->shape(), 4, "concat input");
  const int n = a->shape()[0], ca = a->shape()[1], cb = b->shape()[1];
  const int hw = a->shape()[2] * a->shape()[3];
  if (b->shape()[0] != n || b->shape()[2] != a->shape()[2] || b->shape()[3] != a->shape()[3]) {
    throw ShapeError("concat_channels: " + shape_string(a->shape()) + " vs " + shape_string(b->shape()));
  }
  Tensor<T> out({n, ca + cb, a->shape()[2], a->shape()[3]});
  const std::size_t sa = static_cast<std::size_t>(ca) * hw, sb = static_cast<std::size_t>(cb) * hw;
  for (int i = 0; i < n; ++i) {
    std::copy_n(a->value.data() + i * sa, sa, out.data() + i * (sa + sb));
    std::copy_n(b->value.data() + i * sb, sb, out.data() + i * (sa + sb) + sa);
  }
  return make_op<T>(std::move(out), {a, b}, [n, sa, sb](Node<T>& self) {
    for (int i = 0; i < n; ++i) {
      const T* g = self.grad.data() + i * (sa + sb);
      if (self.inputs[0]->requires_grad) {
        T* ga = grad_of(self.inputs[0]).data() + i * sa;
        for (std::size_t j = 0; j < sa; ++j) ga[j] += g[j];
      }
      if (self.inputs[1]->requires_grad) {
        T* gb = grad_of(self.inputs[1]).data() + i * sb;
        for (std::size_t j = 0; j < sb; ++j) gb[j] += g[sa + j];
      }
    }
  });
}

template <typename T>
Var<T> to_tokens(const Var<T>& x) {
  require_rank(x->shape(), 4, "to_tokens input");
  const int n = x->shape()[0], c = x->shape()[1], hw = x->shape()[2] * x->shape()[3];
  Tensor<T> out({n, hw, c});
  for (int i = 0; i < n; ++i) {
    MapM<T>(out.data() + static_cast<std::size_t>(i) * hw * c, hw, c) =
        CMapM<T>(x->value.data() + static_cast<std::size_t>(i) * hw * c, c, hw).transpose();
  }
  return make_op<T>(std::move(out), {x}, [n, c, hw](Node<T>& self) {
    Tensor<T>& g = grad_of(self.inputs[0]);
    for (int i = 0; i < n; ++i) {
      MapM<T>(g.data() + static_cast<std::size_t>(i) * hw * c, c, hw) +=
          CMapM<T>(self.grad.data() + static_cast<std::size_t>(i) * hw * c, hw, c).transpose();
    }
  });
}

template <typename T>
Var<T> from_tokens(const Var<T>& x, int height, int width) {
  require_rank(x->shape(), 3, "from_tokens input");
  const int n = x->shape()[0], hw = x->shape()[1], c = x->shape()[2];
  if (hw != height * width) throw ShapeError("from_tokens: token count does not match spatial size");
  Tensor<T> out({n, c, height, width});
  for (int i = 0; i < n; ++i) {
    MapM<T>(out.data() + static_cast<std::size_t>(i) * hw * c, c, hw) =
        CMapM<T>(x->value.data() + static_cast<std::size_t>(i) * hw * c, hw, c).transpose();
  }
  return make_op<T>(std::move(out), {x}, [n, c, hw](Node<T>& self) {
    Tensor<T>& g = grad_of(self.inputs[0]);
    for (int i = 0; i < n; ++i) {
      MapM<T>(g.data() + static_cast<std::size_t>(i) * hw * c, hw, c) +=
          CMapM<T>(self.grad.data() + static_cast<std::size_t>(i) * hw * c, c, hw).transpose();
    }
  });
}

template <typename T>
Var<T> add_channel_vector(const Var<T>& x, const Var<T>& v) {
  require_rank(x->shape(), 4, "add_channel_vector input");
  const int n = x->shape()[0], c = x->shape()[1], hw = x->shape()[2] * x->shape()[3];
  check_shape(v->shape(), Shape{n, c}, "add_channel_vector vector");
  Tensor<T> out = x->value;
  for (int i = 0; i < n * c; ++i) {
    T* p = out.data() + static_cast<std::size_t>(i) * hw;
    const T add = v->value[i];
    for (int j = 0; j < hw; ++j) p[j] += add;
  }
  return make_op<T>(std::move(out), {x, v}, [n, c, hw](Node<T>& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad);
    if (self.inputs[1]->requires_grad) {
      Tensor<T>& g = grad_of(self.inputs[1]);
      for (int i = 0; i < n * c; ++i) {
        const T* p = self.grad.data() + static_cast<std::size_t>(i) * hw;
        T s = 0;
        for (int j = 0; j < hw; ++j) s += p[j];
        g[i] += s;
      }
    }
  });
}

template <typename T>
Var<T> add_positional(const Var<T>& x, const Var<T>& p) {
  require_rank(x->shape(), 3, "add_positional input");
  const int n = x->shape()[0], l = x->shape()[1], d = x->shape()[2];
  check_shape(p->shape(), Shape{l, d}, "add_positional table");
  Tensor<T> out = x->value;
  const std::size_t ld = static_cast<std::size_t>(l) * d;
  for (int i = 0; i < n; ++i)
    for (std::size_t j = 0; j < ld; ++j) out[i * ld + j] += p->value[j];
  return make_op<T>(std::move(out), {x, p}, [n, ld](Node<T>& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad);
    if (self.inputs[1]->requires_grad) {
      Tensor<T>& g = grad_of(self.inputs[1]);
      for (int i = 0; i < n; ++i)
        for (std::size_t j = 0; j < ld; ++j) g[j] += self.grad[i * ld + j];
    }
  });
}

template <typename T>
Var<T> prepend_token(const Var<T>& x, const Var<T>& token) {
  require_rank(x->shape(), 3, "prepend_token input");
  const int n = x->shape()[0], l = x->shape()[1], d = x->shape()[2];
  check_shape(token->shape(), Shape{d}, "prepend_token token");
  Tensor<T> out({n, l + 1, d});
  const std::size_t in_stride = static_cast<std::size_t>(l) * d, out_stride = in_stride + d;
  for (int i = 0; i < n; ++i) {
    std::copy_n(token->value.data(), d, out.data() + i * out_stride);
    std::copy_n(x->value.data() + i * in_stride, in_stride, out.data() + i * out_stride + d);
  }
  return make_op<T>(std::move(out), {x, token}, [n, d, in_stride, out_stride](Node<T>& self) {
    for (int i = 0; i < n; ++i) {
      const T* g = self.grad.data() + i * out_stride;
      if (self.inputs[1]->requires_grad) {
        Tensor<T>& gt = grad_of(self.inputs[1]);
        for (int j = 0; j < d; ++j) gt[j] += g[j];
      }
      if (self.inputs[0]->requires_grad) {
        T* gx = grad_of(self.inputs[0]).data() + i * in_stride;
        for (std::size_t j = 0; j < in_stride; ++j) gx[j] += g[d + j];
      }
    }
  });
}

template <typename T>
Var<T> select_token(const Var<T>& x, int index) {
  require_rank(x->shape(), 3, "select_token input");
  const int n = x->shape()[0], l = x->shape()[1], d = x->shape()[2];
  if (index < 0 || index >= l) throw ShapeError("select_token: index out of range");
  Tensor<T> out({n, d});
  for (int i = 0; i < n; ++i)
    std::copy_n(x->value.data() + (static_cast<std::size_t>(i) * l + index) * d, d, out.data() + i * d);
  return make_op<T>(std::move(out), {x}, [n, l, d, index](Node<T>& self) {
    Tensor<T>& g = grad_of(self.inputs[0]);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) g[(static_cast<std::size_t>(i) * l + index) * d + j] += self.grad[i * d + j];
  });
}

template <typename T>
Var<T> patchify(const Var<T>& x, int patch) {
  require_rank(x->shape(), 4, "patchify input");
  const int n = x->shape()[0], c = x->shape()[1], h = x->shape()[2], w = x->shape()[3];
  if (patch <= 0 || h % patch || w % patch) {
    throw ShapeError("patchify: image " + shape_string(x->shape()) + " not divisible by patch " +
                     std::to_string(patch));
  }
  const int gh = h / patch, gw = w / patch, pd = c * patch * patch;
  Tensor<T> out({n, gh * gw, pd});
  // Index map from output element to input element, reused by backward.
  auto index = std::make_shared<std::vector<std::size_t>>(out.numel());
  std::size_t o = 0;
  for (int i = 0; i < n; ++i)
    for (int py = 0; py < gh; ++py)
      for (int px = 0; px < gw; ++px)
        for (int ch = 0; ch < c; ++ch)
          for (int y = 0; y < patch; ++y)
            for (int xx = 0; xx < patch; ++xx) {
              const std::size_t src =
                  ((static_cast<std::size_t>(i) * c + ch) * h + py * patch + y) * w + px * patch + xx;
              (*index)[o] = src;
              out[o++] = x->value[src];
            }
  return make_op<T>(std::move(out), {x}, [index](Node<T>& self) {
    Tensor<T>& g = grad_of(self.inputs[0]);
    for (std::size_t j = 0; j < index->size(); ++j) g[(*index)[j]] += self.grad[j];
  });
}

template <typename T>
Var<T> embedding(const Var<T>& table, const std::vector<int>& ids, int batch, int length) {
  require_rank(table->shape(), 2, "embedding table");
  const int vocab = table->shape()[0], d = table->shape()[1];
  if (static_cast<int>(ids.size()) != batch * length) throw ShapeError("embedding: id count mismatch");
  Tensor<T> out({batch, length, d});
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 0 || ids[j] >= vocab) throw ShapeError("embedding: id out of range");
    std::copy_n(table->value.data() + static_cast<std::size_t>(ids[j]) * d, d, out.data() + j * d);
  }
  return make_op<T>(std::move(out), {table}, [ids, d](Node<T>& self) {
    Tensor<T>& g = grad_of(self.inputs[0]);
    for (std::size_t j = 0; j < ids.size(); ++j)
      for (int k = 0; k < d; ++k) g[static_cast<std::size_t>(ids[j]) * d + k] += self.grad[j * d + k];
  });
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void check_attention_shapes(const Shape& q, const Shape& k, int heads) {
  require_rank(q, 3, "attention query");
  require_rank(k, 3, "attention key");
  if (q[0] != k[0] || q[2] != k[2]) {
    throw ShapeError("attention: query " + shape_string(q) + " incompatible with key " + shape_string(k));
  }
  if (heads <= 0 || q[2] % heads != 0) {
    throw ShapeError("attention: " + std::to_string(heads) + " heads do not divide dimension " +
                     std::to_string(q[2]));
  }
}

template <typename T>
void softmax_rows(Mat<T>& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const T m = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - m).exp();
    s.row(r) /= s.row(r).sum();
  }
}

}  // namespace

template <typename T>
Tensor<T> attention_probabilities(const Tensor<T>& q, const Tensor<T>& k, int heads) {
  check_attention_shapes<T>(q.shape(), k.shape(), heads);
  const int n = q.dim(0), lq = q.dim(1), lk = k.dim(1), d = q.dim(2), dh = d / heads;
  const T sc = T(1) / std::sqrt(static_cast<T>(dh));
  Tensor<T> probs({n, heads, lq, lk});
  for (int i = 0; i < n; ++i) {
    for (int hh = 0; hh < heads; ++hh) {
      CStridedM<T> qh(q.data() + static_cast<std::size_t>(i) * lq * d + hh * dh, lq, dh, Eigen::OuterStride<>(d));
      CStridedM<T> kh(k.data() + static_cast<std::size_t>(i) * lk * d + hh * dh, lk, dh, Eigen::OuterStride<>(d));
      Mat<T> s = (qh * kh.transpose()) * sc;
      softmax_rows(s);
      MapM<T>(probs.data() + (static_cast<std::size_t>(i) * heads + hh) * lq * lk, lq, lk) = s;
    }
  }
  return probs;
}

template <typename T>
Var<T> multi_head_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads) {
  check_attention_shapes<T>(q->shape(), k->shape(), heads);
  check_shape(v->shape(), k->shape(), "attention value");
  const int n = q->shape()[0], lq = q->shape()[1], lk = k->shape()[1], d = q->shape()[2];
  const int dh = d / heads;
  const T sc = T(1) / std::sqrt(static_cast<T>(dh));
  auto probs = std::make_shared<Tensor<T>>(attention_probabilities(q->value, k->value, heads));
  Tensor<T> out({n, lq, d});
  for (int i = 0; i < n; ++i) {
    for (int hh = 0; hh < heads; ++hh) {
      CMapM<T> p(probs->data() + (static_cast<std::size_t>(i) * heads + hh) * lq * lk, lq, lk);
      CStridedM<T> vh(v->value.data() + static_cast<std::size_t>(i) * lk * d + hh * dh, lk, dh,
                      Eigen::OuterStride<>(d));
      StridedM<T> oh(out.data() + static_cast<std::size_t>(i) * lq * d + hh * dh, lq, dh, Eigen::OuterStride<>(d));
      oh.noalias() = p * vh;
    }
  }
  return make_op<T>(std::move(out), {q, k, v}, [probs, n, lq, lk, d, dh, heads, sc](Node<T>& self) {
    const auto& q = self.inputs[0];
    const auto& k = self.inputs[1];
    const auto& v = self.inputs[2];
    Mat<T> dp, ds;
    for (int i = 0; i < n; ++i) {
      const std::size_t qoff = static_cast<std::size_t>(i) * lq * d;
      const std::size_t koff = static_cast<std::size_t>(i) * lk * d;
      for (int hh = 0; hh < heads; ++hh) {
        CMapM<T> p(probs->data() + (static_cast<std::size_t>(i) * heads + hh) * lq * lk, lq, lk);
        CStridedM<T> go(self.grad.data() + qoff + hh * dh, lq, dh, Eigen::OuterStride<>(d));
        CStridedM<T> qh(q->value.data() + qoff + hh * dh, lq, dh, Eigen::OuterStride<>(d));
        CStridedM<T> kh(k->value.data() + koff + hh * dh, lk, dh, Eigen::OuterStride<>(d));
        CStridedM<T> vh(v->value.data() + koff + hh * dh, lk, dh, Eigen::OuterStride<>(d));
        if (v->requires_grad) {
          StridedM<T>(grad_of(v).data() + koff + hh * dh, lk, dh, Eigen::OuterStride<>(d)).noalias() +=
              p.transpose() * go;
        }
        if (!q->requires_grad && !k->requires_grad) continue;
        dp.noalias() = go * vh.transpose();
        const Eigen::Matrix<T, Eigen::Dynamic, 1> row_dot = (dp.array() * p.array()).rowwise().sum();
        ds = (p.array() * (dp.colwise() - row_dot).array()) * sc;
        if (q->requires_grad) {
          StridedM<T>(grad_of(q).data() + qoff + hh * dh, lq, dh, Eigen::OuterStride<>(d)).noalias() += ds * kh;
        }
        if (k->requires_grad) {
          StridedM<T>(grad_of(k).data() + koff + hh * dh, lk, dh, Eigen::OuterStride<>(d)).noalias() +=
              ds.transpose() * qh;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

template <typename T>
Var<T> mse_loss(const Var<T>& a, const Var<T>& b) {
  check_shape(b->shape(), a->shape(), "mse_loss");
  const std::size_t n = a->value.numel();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T diff = a->value[i] - b->value[i];
    acc += diff * diff;
  }
  Tensor<T> out({1}, acc / static_cast<T>(n));
  return make_op<T>(std::move(out), {a, b}, [n](Node<T>& self) {
    const T g = self.grad[0] * T(2) / static_cast<T>(n);
    const auto& a = self.inputs[0];
    const auto& b = self.inputs[1];
    if (a->requires_grad) {
      Tensor<T>& ga = grad_of(a);
      for (std::size_t i = 0; i < n; ++i) ga[i] += g * (a->value[i] - b->value[i]);
    }
    if (b->requires_grad) {
      Tensor<T>& gb = grad_of(b);
      for (std::size_t i = 0; i < n; ++i) gb[i] -= g * (a->value[i] - b->value[i]);
    }
  });
}

template <typename T>
Var<T> l1_loss(const Var<T>& a, const Var<T>& b) {
  check_shape(b->shape(), a->shape(), "l1_loss");
  const std::size_t n = a->value.numel();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(a->value[i] - b->value[i]);
  Tensor<T> out({1}, acc / static_cast<T>(n));
  return make_op<T>(std::move(out), {a, b}, [n](Node<T>& self) {
    const T g = self.grad[0] / static_cast<T>(n);
    const auto& a = self.inputs[0];
    const auto& b = self.inputs[1];
    for (std::size_t i = 0; i < n; ++i) {
      const T diff = a->value[i] - b->value[i];
      const T s = diff > 0 ? T(1) : (diff < 0 ? T(-1) : T(0));
      if (a->requires_grad) grad_of(a)[i] += g * s;
      if (b->requires_grad) grad_of(b)[i] -= g * s;
    }
  });
}

template <typename T>
Var<T> mean_square(const Var<T>& a) {
  const std::size_t n = a->value.numel();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a->value[i] * a->value[i];
  Tensor<T> out({1}, acc / static_cast<T>(n));
  return make_op<T>(std::move(out), {a}, [n](Node<T>& self) {
    const T g = self.grad[0] * T(2) / static_cast<T>(n);
    Tensor<T>& ga = grad_of(self.inputs[0]);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g * self.inputs[0]->value[i];
  });
}

#define OBJCOMP_OPS(T)                                                                               \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                              \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                              \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                              \
  template Var<T> scale<T>(const Var<T>&, T);                                                        \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                                  \
  template Var<T> silu<T>(const Var<T>&);                                                            \
  template Var<T> gelu<T>(const Var<T>&);                                                            \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                            \
  template Var<T> token_mix<T>(const Var<T>&, const Var<T>&, const Var<T>&);                         \
  template Var<T> layer_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, T);                     \
  template Var<T> group_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, T);                \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                  \
  template Var<T> upsample_nearest2<T>(const Var<T>&);                                               \
  template Var<T> concat_channels<T>(const Var<T>&, const Var<T>&);                                  \
  template Var<T> to_tokens<T>(const Var<T>&);                                                       \
  template Var<T> from_tokens<T>(const Var<T>&, int, int);                                           \
  template Var<T> add_channel_vector<T>(const Var<T>&, const Var<T>&);                               \
  template Var<T> add_positional<T>(const Var<T>&, const Var<T>&);                                   \
  template Var<T> prepend_token<T>(const Var<T>&, const Var<T>&);                                    \
  template Var<T> select_token<T>(const Var<T>&, int);                                               \
  template Var<T> patchify<T>(const Var<T>&, int);                                                   \
  template Var<T> embedding<T>(const Var<T>&, const std::vector<int>&, int, int);                    \
  template Var<T> multi_head_attention<T>(const Var<T>&, const Var<T>&, const Var<T>&, int);         \
  template Tensor<T> attention_probabilities<T>(const Tensor<T>&, const Tensor<T>&, int);            \
  template Var<T> mse_loss<T>(const Var<T>&, const Var<T>&);                                         \
  template Var<T> l1_loss<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> mean_square<T>(const Var<T>&);

OBJCOMP_OPS(float)
OBJCOMP_OPS(double)

}  // namespace objcomp::nn
