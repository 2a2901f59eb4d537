#pragma once

#include "san/autograd.hpp"

namespace san {

// Differentiable dense ops over single-sample [C, H, W] feature maps.

/// Zero-padded cross-correlation. `weight` is [Cout, Cin, k, k]; `bias` is
/// [Cout] or null.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad);

template <class T>
Var<T> relu(const Var<T>& x);

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b);

/// Multiplies every element by a constant.
template <class T>
Var<T> scale(const Var<T>& x, T factor);

template <class T>
Var<T> sum(const Var<T>& x);

/// Sum of x * weights for a constant weight tensor of the same shape.
template <class T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights);

/// Stacks along the channel axis.
template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

/// Nearest-neighbour 2x upsampling.
template <class T>
Var<T> upsample2x(const Var<T>& x);

/// Per-channel affine: out[c] = scale[c] * x[c] + shift[c]. Either of
/// `scale`/`shift` may be null (treated as 1 / 0).
template <class T>
Var<T> channel_affine(const Var<T>& x, const Var<T>& scale, const Var<T>& shift);

/// Bounded depth from a [1, H, W] logit: d = 1 / (sigmoid(x) (1/d_min - 1/d_max) + 1/d_max).
template <class T>
Var<T> inverse_depth_head(const Var<T>& logits, T d_min, T d_max);

}  // namespace san
