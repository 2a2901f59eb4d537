#pragma once

#include <string>
#include <vector>

#include "san/param_store.hpp"
#include "san/rng.hpp"
#include "san/sparse_ops.hpp"
#include "san/sparse_tensor.hpp"

namespace san {

struct SanConfig {
  /// Output channels of each SRB; must equal the RGB encoder skip widths.
  std::vector<int> widths{16, 32, 64, 128};
  /// Number of parallel SRB branches (1-3). Branch b holds b conv blocks.
  int branches = 3;
  /// Whether skip augmentation carries the learnable per-channel w_i, b_i.
  bool use_wb = true;
  int in_channels = 1;
  BatchNormOptions bn{};

  int scales() const noexcept { return int(widths.size()); }
};

/// Parameter names under the SAN prefix.
std::string srb_prefix(int scale);
std::string skip_weight_name(int scale);
std::string skip_bias_name(int scale);

/// Registers SRB conv/BN parameters, BN running statistics, and (if enabled)
/// the skip modulation vectors w_i = 1, b_i = 0.
template <class T>
void init_san_params(ParamStore<T>& store, const SanConfig& cfg, Rng& rng);

/// Sparse Residual Block: 2x max pooling, then `branches` parallel chains of
/// 1, 2, ... (conv3x3 + BN + ReLU) blocks on the pooled coordinates, summed.
template <class T>
SparseVar<T> srb_forward(const SparseVar<T>& x, ParamStore<T>& store, const std::string& prefix, int branches,
                         BatchNormMode mode, const BatchNormOptions& bn = {});

/// Runs the SRB chain on the sparsified depth map and densifies each scale.
/// Scale i has spatial extent (H / 2^i, W / 2^i). An all-invalid input gives
/// exact zeros everywhere. Throws ContractError if H or W is not divisible
/// by 2^S.
template <class T>
std::vector<Var<T>> san_encode(const DepthMap<T>& sparse_depth, ParamStore<T>& store, const SanConfig& cfg,
                               BatchNormMode mode);

/// Encodes several depth maps as one batched sparse tensor (batch index =
/// position in `maps`), so batch normalization in train mode pools its
/// statistics over every sample. Returns per-sample, per-scale features.
template <class T>
std::vector<std::vector<Var<T>>> san_encode_batch(const std::vector<const DepthMap<T>*>& maps, ParamStore<T>& store,
                                                  const SanConfig& cfg, BatchNormMode mode);

/// K~ = w * K + b + P with per-channel w, b. A null w/b acts as 1/0.
template <class T>
Var<T> augment_skip(const Var<T>& skip, const Var<T>& sparse_features, const Var<T>& w, const Var<T>& b);

}  // namespace san
