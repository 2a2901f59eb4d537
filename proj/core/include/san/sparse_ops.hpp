#pragma once

#include <memory>
#include <vector>

#include "san/autograd.hpp"
#include "san/kernel_map.hpp"
#include "san/sparse_tensor.hpp"

namespace san {

/// Sparse tensor inside the graph: fixed coordinates plus differentiable
/// [N, Q] features.
template <class T>
struct SparseVar {
  std::shared_ptr<const std::vector<Coord>> coords;
  Var<T> feats;
  int width = 0;
  int height = 0;
  int batch = 1;

  std::size_t size() const noexcept { return coords ? coords->size() : 0; }
  int channels() const { return feats->value.dim(1); }
};

template <class T>
SparseVar<T> sparse_leaf(const SparseTensor<T>& s, bool requires_grad = false);

template <class T>
SparseTensor<T> to_sparse_tensor(const SparseVar<T>& s);

/// out[j] = bias + sum over offsets o and pairs (i, j) of feats[i] * weight[o].
/// `weight` is [k*k, Cin, Cout]; `bias` is [Cout] or null. Throws
/// ContractError when the kernel map was not built for `x`.
template <class T>
SparseVar<T> sparse_conv2d(const SparseVar<T>& x, const Var<T>& weight, const Var<T>& bias, const KernelMap& km);

enum class BatchNormMode { Train, Eval };

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Per-channel normalization over the N present rows only. Train mode uses
/// batch statistics and updates the running estimates; eval mode uses the
/// running estimates. An empty input in train mode passes through unchanged,
/// leaves the running statistics alone, and sets `*skipped` if given.
template <class T>
SparseVar<T> sparse_batch_norm(const SparseVar<T>& x, const Var<T>& gamma, const Var<T>& beta,
                               Tensor<T>& running_mean, Tensor<T>& running_var, BatchNormMode mode,
                               const BatchNormOptions& opts = {}, bool* skipped = nullptr);

template <class T>
SparseVar<T> sparse_relu(const SparseVar<T>& x);

/// Feature sum of two tensors on the same coordinate list.
template <class T>
SparseVar<T> sparse_add(const SparseVar<T>& a, const SparseVar<T>& b);

/// 2x2 / stride 2 max pooling over present coordinates only. Output
/// coordinates are the unique floor(c / 2) cells in canonical order.
template <class T>
SparseVar<T> sparse_max_pool(const SparseVar<T>& x);

/// Differentiable scatter of the rows of batch entry `sample` into a zero
/// [Q, H, W] map.
template <class T>
Var<T> densify(const SparseVar<T>& x, int sample = 0);

}  // namespace san
