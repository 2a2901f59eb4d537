#pragma once

#include <string>

#include "san/autograd.hpp"
#include "san/sparse_tensor.hpp"

namespace san {

/// Variance weight used for training.
inline constexpr double kDefaultSilogLambda = 0.85;

/// Scale-invariant log loss over pixels where gt > 0:
///   (1/N) sum(delta^2) - (lambda/N^2) (sum delta)^2,  delta = log gt - log pred.
/// Throws EmptyGroundTruthError when no pixel is valid and ContractError if
/// any prediction is not strictly positive or the shapes differ.
template <class T>
Var<T> silog(const DepthMap<T>& gt, const Var<T>& pred, T lambda);

/// Value-only form of silog.
template <class T>
T silog_value(const DepthMap<T>& gt, const DepthMap<T>& pred, T lambda);

/// silog(gt, prediction) + silog(gt, completion).
template <class T>
Var<T> joint_loss(const DepthMap<T>& gt, const Var<T>& prediction, const Var<T>& completion, T lambda);

}  // namespace san
