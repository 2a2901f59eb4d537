#include "san/sparse_ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <unordered_map>

#include "san/dense_ops.hpp"
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
void gather_rows(const T* src, int cols, const std::vector<std::int32_t>& idx, RowMat<T>& dst) {
  dst.resize(Eigen::Index(idx.size()), cols);
  for (std::size_t p = 0; p < idx.size(); ++p) {
    std::copy(src + std::size_t(idx[p]) * cols, src + std::size_t(idx[p] + 1) * cols, dst.data() + p * cols);
  }
}

template <class T>
void scatter_add_rows(const RowMat<T>& src, const std::vector<std::int32_t>& idx, T* dst) {
  const Eigen::Index cols = src.cols();
  for (std::size_t p = 0; p < idx.size(); ++p) {
    T* row = dst + std::size_t(idx[p]) * cols;
    const T* s = src.data() + p * cols;
    for (Eigen::Index c = 0; c < cols; ++c) row[c] += s[c];
  }
}

}  // namespace

template <class T>
SparseVar<T> sparse_leaf(const SparseTensor<T>& s, bool requires_grad) {
  s.validate();
  return {std::make_shared<const std::vector<Coord>>(s.coords), make_leaf(s.feats, requires_grad), s.width,
          s.height, s.batch};
}

template <class T>
SparseTensor<T> to_sparse_tensor(const SparseVar<T>& s) {
  return SparseTensor<T>(*s.coords, s.feats->value, s.width, s.height, s.batch);
}

template <class T>
SparseVar<T> sparse_conv2d(const SparseVar<T>& x, const Var<T>& weight, const Var<T>& bias, const KernelMap& km) {
  const Tensor<T>& w = weight->value;
  const std::size_t offsets = km.num_offsets();
  require(km.num_inputs == x.size() && km.in_width == x.width && km.in_height == x.height,
          "kernel map was built for " + std::to_string(km.num_inputs) + " inputs on " +
              std::to_string(km.in_width) + "x" + std::to_string(km.in_height) + ", tensor has " +
              std::to_string(x.size()) + " on " + std::to_string(x.width) + "x" + std::to_string(x.height));
  require(w.rank() == 3 && std::size_t(w.dim(0)) == offsets,
          "sparse conv weight must be [k*k, Cin, Cout], got " + shape_str(w.shape()));
  require(x.feats->value.rank() == 2 && x.feats->value.dim(1) == w.dim(1),
          "sparse conv channel mismatch: features " + shape_str(x.feats->value.shape()) + ", weight " +
              shape_str(w.shape()));
  const int cin = w.dim(1), cout = w.dim(2);
  if (bias) require(bias->value.numel() == std::size_t(cout), "sparse conv bias length mismatch");
  const int n_out = int(km.out_coords.size());

  Tensor<T> out({n_out, cout});
  if (bias) {
    for (int j = 0; j < n_out; ++j) std::copy(bias->value.data(), bias->value.data() + cout, out.data() + j * cout);
  }
  RowMat<T> gathered, product;
  for (std::size_t o = 0; o < offsets; ++o) {
    if (km.in_index[o].empty()) continue;
    gather_rows(x.feats->value.data(), cin, km.in_index[o], gathered);
    product.noalias() = gathered * CMapMat<T>(w.data() + o * cin * cout, cin, cout);
    scatter_add_rows(product, km.out_index[o], out.data());
  }

  // The closure owns a copy of the pair lists so the caller's map may go away.
  auto pairs = std::make_shared<KernelMap>(km);
  std::vector<Var<T>> parents{x.feats, weight};
  if (bias) parents.push_back(bias);
  Var<T> feats = make_result<T>(
      std::move(out), std::move(parents), "sparse_conv2d", [pairs, cin, cout, n_out](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          Tensor<T>& gb = self.parents[2]->grad_buffer();
          for (int j = 0; j < n_out; ++j)
            for (int c = 0; c < cout; ++c) gb[c] += self.grad.at(j, c);
        }
        RowMat<T> gathered, dgathered, dx_rows;
        for (std::size_t o = 0; o < pairs->num_offsets(); ++o) {
          if (pairs->in_index[o].empty()) continue;
          gather_rows(self.grad.data(), cout, pairs->out_index[o], dgathered);
          if (pw->requires_grad) {
            gather_rows(px->value.data(), cin, pairs->in_index[o], gathered);
            MapMat<T>(pw->grad_buffer().data() + o * cin * cout, cin, cout).noalias() +=
                gathered.transpose() * dgathered;
          }
          if (px->requires_grad) {
            dx_rows.noalias() = dgathered * CMapMat<T>(pw->value.data() + o * cin * cout, cin, cout).transpose();
            scatter_add_rows(dx_rows, pairs->in_index[o], px->grad_buffer().data());
          }
        }
      });
  auto coords = km.stride == 1 ? x.coords : std::make_shared<const std::vector<Coord>>(km.out_coords);
  return {std::move(coords), std::move(feats), km.out_width, km.out_height, x.batch};
}

template <class T>
SparseVar<T> sparse_batch_norm(const SparseVar<T>& x, const Var<T>& gamma, const Var<T>& beta,
                               Tensor<T>& running_mean, Tensor<T>& running_var, BatchNormMode mode,
                               const BatchNormOptions& opts, bool* skipped) {
  const Tensor<T>& in = x.feats->value;
  require(in.rank() == 2, "sparse batch norm expects [N, Q] features");
  const int n = in.dim(0), q = in.dim(1);
  require(gamma->value.numel() == std::size_t(q) && beta->value.numel() == std::size_t(q) &&
              running_mean.numel() == std::size_t(q) && running_var.numel() == std::size_t(q),
          "sparse batch norm parameter length mismatch");
  if (skipped) *skipped = false;
  if (n == 0) {
    if (skipped) *skipped = mode == BatchNormMode::Train;
    return x;
  }

  const T eps = T(opts.eps);
  auto xhat = std::make_shared<Tensor<T>>(in.shape());
  auto inv_std = std::make_shared<std::vector<T>>(q);
  Tensor<T> out(in.shape());
  for (int c = 0; c < q; ++c) {
    T mean, var;
    if (mode == BatchNormMode::Train) {
      T s = 0;
      for (int i = 0; i < n; ++i) s += in.at(i, c);
      mean = s / T(n);
      T ss = 0;
      for (int i = 0; i < n; ++i) {
        const T d = in.at(i, c) - mean;
        ss += d * d;
      }
      var = ss / T(n);
      const T unbiased = n > 1 ? ss / T(n - 1) : var;
      const T m = T(opts.momentum);
      running_mean[c] = (T(1) - m) * running_mean[c] + m * mean;
      running_var[c] = (T(1) - m) * running_var[c] + m * unbiased;
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[c] = is;
    for (int i = 0; i < n; ++i) {
      const T h = (in.at(i, c) - mean) * is;
      xhat->at(i, c) = h;
      out.at(i, c) = gamma->value[c] * h + beta->value[c];
    }
  }

  const bool train = mode == BatchNormMode::Train;
  Var<T> feats = make_result<T>(
      std::move(out), {x.feats, gamma, beta}, "sparse_batch_norm", [xhat, inv_std, n, q, train](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        for (int c = 0; c < q; ++c) {
          T sum_dy = 0, sum_dy_xhat = 0;
          for (int i = 0; i < n; ++i) {
            const T dy = self.grad.at(i, c);
            sum_dy += dy;
            sum_dy_xhat += dy * xhat->at(i, c);
          }
          if (pg->requires_grad) pg->grad_buffer()[c] += sum_dy_xhat;
          if (pb->requires_grad) pb->grad_buffer()[c] += sum_dy;
          if (!px->requires_grad) continue;
          Tensor<T>& gx = px->grad_buffer();
          const T scale_c = pg->value[c] * (*inv_std)[c];
          if (train) {
            for (int i = 0; i < n; ++i) {
              gx.at(i, c) += scale_c / T(n) *
                             (T(n) * self.grad.at(i, c) - sum_dy - xhat->at(i, c) * sum_dy_xhat);
            }
          } else {
            for (int i = 0; i < n; ++i) gx.at(i, c) += scale_c * self.grad.at(i, c);
          }
        }
      });
  return {x.coords, std::move(feats), x.width, x.height, x.batch};
}

template <class T>
SparseVar<T> sparse_relu(const SparseVar<T>& x) {
  return {x.coords, relu(x.feats), x.width, x.height, x.batch};
}

template <class T>
SparseVar<T> sparse_add(const SparseVar<T>& a, const SparseVar<T>& b) {
  require(a.coords == b.coords || *a.coords == *b.coords, "sparse_add requires identical coordinate lists");
  require(a.width == b.width && a.height == b.height, "sparse_add raster mismatch");
  return {a.coords, add(a.feats, b.feats), a.width, a.height, a.batch};
}

template <class T>
SparseVar<T> sparse_max_pool(const SparseVar<T>& x) {
  const Tensor<T>& in = x.feats->value;
  const int q = in.dim(1);
  auto out_coords = std::make_shared<const std::vector<Coord>>(downsample_coords(*x.coords));
  std::unordered_map<std::uint64_t, std::int32_t> cell;
  cell.reserve(out_coords->size() * 2);
  for (std::size_t j = 0; j < out_coords->size(); ++j) cell.emplace(coord_key((*out_coords)[j]), std::int32_t(j));

  const int n_out = int(out_coords->size());
  Tensor<T> out({n_out, q});
  auto argmax = std::make_shared<std::vector<std::int32_t>>(std::size_t(n_out) * q, -1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Coord& c = (*x.coords)[i];
    const std::int32_t j = cell.at(coord_key({c.u / 2, c.v / 2, c.s}));
    for (int k = 0; k < q; ++k) {
      std::int32_t& best = (*argmax)[std::size_t(j) * q + k];
      if (best < 0 || in.at(int(i), k) > in.at(best, k)) {
        best = std::int32_t(i);
        out.at(j, k) = in.at(int(i), k);
      }
    }
  }
  Var<T> feats = make_result<T>(std::move(out), {x.feats}, "sparse_max_pool", [argmax, q](Node<T>& self) {
    Tensor<T>& g = self.parents[0]->grad_buffer();
    for (std::size_t idx = 0; idx < argmax->size(); ++idx) {
      g.at((*argmax)[idx], int(idx % q)) += self.grad[idx];
    }
  });
  return {std::move(out_coords), std::move(feats), (x.width + 1) / 2, (x.height + 1) / 2, x.batch};
}

template <class T>
Var<T> densify(const SparseVar<T>& x, int sample) {
  require(sample >= 0 && sample < x.batch, "densify sample index out of range");
  const Tensor<T>& f = x.feats->value;
  const int q = f.dim(1);
  Tensor<T> out({q, x.height, x.width});
  for (std::size_t n = 0; n < x.size(); ++n) {
    const Coord& c = (*x.coords)[n];
    if (c.s != sample) continue;
    require(c.u >= 0 && c.u < x.width && c.v >= 0 && c.v < x.height, "densify coordinate out of bounds");
    for (int k = 0; k < q; ++k) out.at(k, c.v, c.u) = f.at(int(n), k);
  }
  auto coords = x.coords;
  return make_result<T>(std::move(out), {x.feats}, "densify", [coords, q, sample](Node<T>& self) {
    Tensor<T>& g = self.parents[0]->grad_buffer();
    for (std::size_t n = 0; n < coords->size(); ++n) {
      const Coord& c = (*coords)[n];
      if (c.s != sample) continue;
      for (int k = 0; k < q; ++k) g.at(int(n), k) += self.grad.at(k, c.v, c.u);
    }
  });
}

#define SAN_INSTANTIATE(T)                                                                                    \
  template struct SparseVar<T>;                                                                               \
  template SparseVar<T> sparse_leaf(const SparseTensor<T>&, bool);                                            \
  template SparseTensor<T> to_sparse_tensor(const SparseVar<T>&);                                             \
  template SparseVar<T> sparse_conv2d(const SparseVar<T>&, const Var<T>&, const Var<T>&, const KernelMap&);   \
  template SparseVar<T> sparse_batch_norm(const SparseVar<T>&, const Var<T>&, const Var<T>&, Tensor<T>&,      \
                                          Tensor<T>&, BatchNormMode, const BatchNormOptions&, bool*);         \
  template SparseVar<T> sparse_relu(const SparseVar<T>&);                                                     \
  template SparseVar<T> sparse_add(const SparseVar<T>&, const SparseVar<T>&);                                 \
  template SparseVar<T> sparse_max_pool(const SparseVar<T>&);                                                 \
  template Var<T> densify(const SparseVar<T>&, int);
SAN_INSTANTIATE(float)
SAN_INSTANTIATE(double)
#undef SAN_INSTANTIATE

}  // namespace san
