#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "san/autograd.hpp"
#include "san/param_store.hpp"
#include "san/san.hpp"
#include "san/sparse_tensor.hpp"

namespace san {

struct DepthNetConfig {
  /// Encoder widths; one skip connection per entry, each at half the
  /// resolution of the previous one.
  std::vector<int> widths{16, 32, 64, 128};
  int srb_branches = 3;
  bool use_wb = true;
  double d_min = 0.1;
  double d_max = 100.0;
  BatchNormOptions bn{};

  int scales() const noexcept { return int(widths.size()); }
  SanConfig san() const { return SanConfig{widths, srb_branches, use_wb, 1, bn}; }
  void validate() const;
};

inline constexpr const char* kEncoderPrefix = "rgb.enc";
inline constexpr const char* kDecoderPrefix = "rgb.dec";
inline constexpr const char* kSanPrefix = "san.";

/// Compact encoder-decoder depth network with a sparse auxiliary branch.
///
/// Encoder block i: conv3x3/2 + ReLU, conv3x3 + ReLU, emitting skip K_i.
/// Decoder: start at K_S, then for i = S-1..1 upsample, concatenate K_i,
/// conv3x3 + ReLU; finally upsample to full resolution, conv3x3 + ReLU,
/// conv3x3 to one logit channel and the bounded inverse-depth head.
///
/// Prediction reads only `rgb.*` parameters. Completion additionally runs the
/// SAN on the sparse depth and replaces each K_i by w_i K_i + b_i + P_i.
template <class T>
class DepthNet {
 public:
  explicit DepthNet(DepthNetConfig cfg);

  const DepthNetConfig& config() const noexcept { return cfg_; }

  /// Registers every parameter (RGB and SAN) with a seeded initialization.
  void init_params(ParamStore<T>& store, std::uint64_t seed) const;

  std::vector<Var<T>> encode(ParamStore<T>& store, const Var<T>& image) const;
  Var<T> decode(ParamStore<T>& store, const std::vector<Var<T>>& skips) const;
  std::vector<Var<T>> augment(ParamStore<T>& store, const std::vector<Var<T>>& skips,
                              const std::vector<Var<T>>& sparse_features) const;

  /// Differentiable prediction output [1, H, W].
  Var<T> forward_prediction(ParamStore<T>& store, const ImageTensor<T>& image) const;
  /// Differentiable completion output; identical to prediction when the
  /// sparse map has no valid pixel.
  Var<T> forward_completion(ParamStore<T>& store, const ImageTensor<T>& image, const DepthMap<T>& sparse,
                            BatchNormMode mode) const;

  struct Outputs {
    Var<T> prediction;
    Var<T> completion;
  };
  /// Both heads sharing one encoder pass (training).
  Outputs forward_both(ParamStore<T>& store, const ImageTensor<T>& image, const DepthMap<T>& sparse,
                       BatchNormMode mode) const;
  /// forward_both over several samples. The SAN encodes all non-empty sparse
  /// maps as one batch, so train-mode batch statistics span the samples.
  std::vector<Outputs> forward_both_batch(ParamStore<T>& store, const std::vector<const ImageTensor<T>*>& images,
                                          const std::vector<const DepthMap<T>*>& sparse, BatchNormMode mode) const;

  /// Inference without graph recording; BN uses running statistics.
  DepthMap<T> predict(ParamStore<T>& store, const ImageTensor<T>& image) const;
  DepthMap<T> complete(ParamStore<T>& store, const ImageTensor<T>& image, const DepthMap<T>& sparse) const;

  /// Throws ContractError unless the image is [3, H, W] with H, W divisible by 2^S.
  void check_image(const ImageTensor<T>& image) const;

 private:
  DepthNetConfig cfg_;
};

extern template class DepthNet<float>;
extern template class DepthNet<double>;

}  // namespace san
