#include "san/dense_ops.hpp"

#include <algorithm>
#include <Eigen/Core>
#include <cmath>

#include "san/errors.hpp"

namespace san {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ContractError(msg);
}

template <class T>
void im2col(const Tensor<T>& x, int k, int stride, int pad, int out_h, int out_w, Tensor<T>& cols) {
  const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  T* dst = cols.data();
  for (int c = 0; c < cin; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + out_w, T(0));
            dst += out_w;
            continue;
          }
          const T* row = x.data() + (std::size_t(c) * h + iy) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride + kx - pad;
            *dst++ = (ix >= 0 && ix < w) ? row[ix] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const Tensor<T>& cols, int k, int stride, int pad, int out_h, int out_w, Tensor<T>& dx) {
  const int cin = dx.dim(0), h = dx.dim(1), w = dx.dim(2);
  const T* src = cols.data();
  for (int c = 0; c < cin; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            src += out_w;
            continue;
          }
          T* row = dx.data() + (std::size_t(c) * h + iy) * w;
          for (int ox = 0; ox < out_w; ++ox, ++src) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) row[ix] += *src;
          }
        }
      }
    }
  }
}

}  // namespace

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad) {
  const Tensor<T>& in = x->value;
  const Tensor<T>& wt = weight->value;
  require(in.rank() == 3, "conv2d input must be [C, H, W], got " + shape_str(in.shape()));
  require(wt.rank() == 4 && wt.dim(2) == wt.dim(3), "conv2d weight must be [Cout, Cin, k, k]");
  require(wt.dim(1) == in.dim(0), "conv2d channel mismatch: input " + shape_str(in.shape()) + ", weight " +
                                      shape_str(wt.shape()));
  require(stride >= 1 && pad >= 0, "conv2d stride must be >= 1 and pad >= 0");
  const int cout = wt.dim(0), cin = wt.dim(1), k = wt.dim(2);
  if (bias) require(bias->value.numel() == std::size_t(cout), "conv2d bias length mismatch");
  const int out_h = (in.dim(1) + 2 * pad - k) / stride + 1;
  const int out_w = (in.dim(2) + 2 * pad - k) / stride + 1;
  require(out_h > 0 && out_w > 0, "conv2d output would be empty");
  const int rows = cin * k * k, hw = out_h * out_w;

  auto cols = std::make_shared<Tensor<T>>(Shape{rows, hw});
  im2col(in, k, stride, pad, out_h, out_w, *cols);

  Tensor<T> out({cout, out_h, out_w});
  MapMat<T> o(out.data(), cout, hw);
  o.noalias() = CMapMat<T>(wt.data(), cout, rows) * CMapMat<T>(cols->data(), rows, hw);
  if (bias) {
    for (int c = 0; c < cout; ++c) o.row(c).array() += bias->value[c];
  }

  std::vector<Var<T>> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_result<T>(std::move(out), std::move(parents), "conv2d",
                        [cols, k, stride, pad, out_h, out_w, cout, rows, hw](Node<T>& self) {
                          auto& px = self.parents[0];
                          auto& pw = self.parents[1];
                          CMapMat<T> dout(self.grad.data(), cout, hw);
                          if (pw->requires_grad) {
                            MapMat<T>(pw->grad_buffer().data(), cout, rows).noalias() +=
                                dout * CMapMat<T>(cols->data(), rows, hw).transpose();
                          }
                          if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
                            Tensor<T>& gb = self.parents[2]->grad_buffer();
                            for (int c = 0; c < cout; ++c) gb[c] += dout.row(c).sum();
                          }
                          if (px->requires_grad) {
                            Tensor<T> dcols({rows, hw});
                            MapMat<T>(dcols.data(), rows, hw).noalias() =
                                CMapMat<T>(pw->value.data(), cout, rows).transpose() * dout;
                            col2im_add(dcols, k, stride, pad, out_h, out_w, px->grad_buffer());
                          }
                        });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x->value;
  for (auto& v : out.span()) v = v > T(0) ? v : T(0);
  return make_result<T>(std::move(out), {x}, "relu", [](Node<T>& self) {
    auto& p = self.parents[0];
    Tensor<T>& g = p->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (p->value[i] > T(0)) g[i] += self.grad[i];
    }
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a->value.shape() == b->value.shape(),
          "add shape mismatch " + shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
  Tensor<T> out = a->value;
  out.add_(b->value);
  return make_result<T>(std::move(out), {a, b}, "add", [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->accumulate(self.grad);
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& x, T factor) {
  Tensor<T> out = x->value;
  out.scale_(factor);
  return make_result<T>(std::move(out), {x}, "scale", [factor](Node<T>& self) {
    Tensor<T>& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += factor * self.grad[i];
  });
}

template <class T>
Var<T> sum(const Var<T>& x) {
  T s = 0;
  for (T v : x->value.span()) s += v;
  return make_result<T>(Tensor<T>({1}, std::vector<T>{s}), {x}, "sum", [](Node<T>& self) {
    Tensor<T>& g = self.parents[0]->grad_buffer();
    const T up = self.grad[0];
    for (auto& v : g.span()) v += up;
  });
}

template <class T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights) {
  require(weights.shape() == x->value.shape(), "weighted_sum shape mismatch");
  T s = 0;
  for (std::size_t i = 0; i < weights.numel(); ++i) s += x->value[i] * weights[i];
  return make_result<T>(Tensor<T>({1}, std::vector<T>{s}), {x}, "weighted_sum", [weights](Node<T>& self) {
    Tensor<T>& g = self.parents[0]->grad_buffer();
    const T up = self.grad[0];
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += up * weights[i];
  });
}

template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& x = a->value;
  const Tensor<T>& y = b->value;
  require(x.rank() == 3 && y.rank() == 3 && x.dim(1) == y.dim(1) && x.dim(2) == y.dim(2),
          "concat_channels spatial mismatch " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  Tensor<T> out({x.dim(0) + y.dim(0), x.dim(1), x.dim(2)});
  std::copy(x.data(), x.data() + x.numel(), out.data());
  std::copy(y.data(), y.data() + y.numel(), out.data() + x.numel());
  const std::size_t split = x.numel();
  return make_result<T>(std::move(out), {a, b}, "concat", [split](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      Tensor<T>& g = pa->grad_buffer();
      for (std::size_t i = 0; i < split; ++i) g[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      Tensor<T>& g = pb->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[split + i];
    }
  });
}

template <class T>
Var<T> upsample2x(const Var<T>& x) {
  const Tensor<T>& in = x->value;
  require(in.rank() == 3, "upsample2x expects [C, H, W]");
  const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
  Tensor<T> out({c, 2 * h, 2 * w});
  for (int k = 0; k < c; ++k)
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx) out.at(k, y, xx) = in.at(k, y / 2, xx / 2);
  return make_result<T>(std::move(out), {x}, "upsample2x", [c, h, w](Node<T>& self) {
    Tensor<T>& g = self.parents[0]->grad_buffer();
    for (int k = 0; k < c; ++k)
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx) g.at(k, y / 2, xx / 2) += self.grad.at(k, y, xx);
  });
}

template <class T>
Var<T> channel_affine(const Var<T>& x, const Var<T>& scale_v, const Var<T>& shift_v) {
  const Tensor<T>& in = x->value;
  require(in.rank() == 3, "channel_affine expects [C, H, W]");
  const int c = in.dim(0);
  const std::size_t plane = std::size_t(in.dim(1)) * in.dim(2);
  if (scale_v) require(scale_v->value.numel() == std::size_t(c), "channel_affine scale length mismatch");
  if (shift_v) require(shift_v->value.numel() == std::size_t(c), "channel_affine shift length mismatch");
  Tensor<T> out(in.shape());
  for (int k = 0; k < c; ++k) {
    const T a = scale_v ? scale_v->value[k] : T(1);
    const T b = shift_v ? shift_v->value[k] : T(0);
    for (std::size_t i = 0; i < plane; ++i) out[k * plane + i] = a * in[k * plane + i] + b;
  }
  std::vector<Var<T>> parents{x, scale_v, shift_v};
  return make_result<T>(std::move(out), std::move(parents), "channel_affine", [c, plane](Node<T>& self) {
    auto& px = self.parents[0];
    auto& ps = self.parents[1];
    auto& pb = self.parents[2];
    for (int k = 0; k < c; ++k) {
      const T* g = self.grad.data() + k * plane;
      if (px->requires_grad) {
        T* gx = px->grad_buffer().data() + k * plane;
        const T a = ps ? ps->value[k] : T(1);
        for (std::size_t i = 0; i < plane; ++i) gx[i] += a * g[i];
      }
      if (ps && ps->requires_grad) {
        const T* xv = px->value.data() + k * plane;
        T acc = 0;
        for (std::size_t i = 0; i < plane; ++i) acc += g[i] * xv[i];
        ps->grad_buffer()[k] += acc;
      }
      if (pb && pb->requires_grad) {
        T acc = 0;
        for (std::size_t i = 0; i < plane; ++i) acc += g[i];
        pb->grad_buffer()[k] += acc;
      }
    }
  });
}

template <class T>
Var<T> inverse_depth_head(const Var<T>& logits, T d_min, T d_max) {
  require(d_min > T(0) && d_max > d_min, "inverse_depth_head needs 0 < d_min < d_max");
  const T lo = T(1) / d_max, span = T(1) / d_min - T(1) / d_max;
  Tensor<T> out(logits->value.shape());
  auto sig = std::make_shared<Tensor<T>>(logits->value.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const T z = logits->value[i];
    T s = z >= T(0) ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
    // Saturated sigmoids would land exactly on d_min or d_max; keep the range open.
    // A clamped entry stores s = 0 in the cache so its gradient vanishes.
    const T eps = T(1e-6);
    const bool clamped = s < eps || s > T(1) - eps;
    s = std::clamp(s, eps, T(1) - eps);
    (*sig)[i] = clamped ? T(0) : s;
    out[i] = T(1) / (s * span + lo);
  }
  return make_result<T>(std::move(out), {logits}, "inverse_depth_head", [sig, span](Node<T>& self) {
    Tensor<T>& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const T d = self.value[i];
      const T s = (*sig)[i];
      // dd/dz = -d^2 * span * s (1 - s)
      g[i] += self.grad[i] * (-d * d * span * s * (T(1) - s));
    }
  });
}

#define SAN_INSTANTIATE(T)                                                                  \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);            \
  template Var<T> relu(const Var<T>&);                                                      \
  template Var<T> add(const Var<T>&, const Var<T>&);                                        \
  template Var<T> scale(const Var<T>&, T);                                                  \
  template Var<T> sum(const Var<T>&);                                                       \
  template Var<T> weighted_sum(const Var<T>&, const Tensor<T>&);                            \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);                            \
  template Var<T> upsample2x(const Var<T>&);                                                \
  template Var<T> channel_affine(const Var<T>&, const Var<T>&, const Var<T>&);              \
  template Var<T> inverse_depth_head(const Var<T>&, T, T);
SAN_INSTANTIATE(float)
SAN_INSTANTIATE(double)
#undef SAN_INSTANTIATE

}  // namespace san
