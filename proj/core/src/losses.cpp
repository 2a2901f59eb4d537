#include "san/losses.hpp"

#include <cmath>
#include <memory>

#include "san/dense_ops.hpp"
#include "san/errors.hpp"

namespace san {

namespace {

template <class T>
void check_inputs(const DepthMap<T>& gt, const DepthMap<T>& pred) {
  if (gt.shape() != pred.shape()) {
    throw ContractError("silog: ground truth " + shape_str(gt.shape()) + " vs prediction " +
                        shape_str(pred.shape()));
  }
  for (T v : pred.span()) {
    if (!(v > T(0))) throw ContractError("silog: prediction must be strictly positive");
  }
}

}  // namespace

template <class T>
T silog_value(const DepthMap<T>& gt, const DepthMap<T>& pred, T lambda) {
  check_inputs(gt, pred);
  T s1 = 0, s2 = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.numel(); ++i) {
    if (!(gt[i] > T(0))) continue;
    const T d = std::log(gt[i]) - std::log(pred[i]);
    s1 += d;
    s2 += d * d;
    ++n;
  }
  if (n == 0) throw EmptyGroundTruthError("silog: ground truth has no valid pixel");
  const T nn = T(n);
  return s2 / nn - lambda * s1 * s1 / (nn * nn);
}

template <class T>
Var<T> silog(const DepthMap<T>& gt, const Var<T>& pred, T lambda) {
  const DepthMap<T>& p = pred->value;
  check_inputs(gt, p);
  auto delta = std::make_shared<Tensor<T>>(gt.shape());
  T s1 = 0, s2 = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.numel(); ++i) {
    if (!(gt[i] > T(0))) continue;
    const T d = std::log(gt[i]) - std::log(p[i]);
    (*delta)[i] = d;
    s1 += d;
    s2 += d * d;
    ++n;
  }
  if (n == 0) throw EmptyGroundTruthError("silog: ground truth has no valid pixel");
  const T nn = T(n);
  const T loss = s2 / nn - lambda * s1 * s1 / (nn * nn);
  auto mask = std::make_shared<std::vector<bool>>(gt.numel());
  for (std::size_t i = 0; i < gt.numel(); ++i) (*mask)[i] = gt[i] > T(0);
  return make_result<T>(Tensor<T>({1}, std::vector<T>{loss}), {pred}, "silog",
                        [delta, mask, s1, nn, lambda](Node<T>& self) {
                          auto& pp = self.parents[0];
                          Tensor<T>& g = pp->grad_buffer();
                          const T up = self.grad[0];
                          const T mean_term = T(2) * lambda * s1 / (nn * nn);
                          for (std::size_t i = 0; i < g.numel(); ++i) {
                            if (!(*mask)[i]) continue;
                            const T dl_ddelta = T(2) * (*delta)[i] / nn - mean_term;
                            g[i] += up * dl_ddelta * (-T(1) / pp->value[i]);
                          }
                        });
}

template <class T>
Var<T> joint_loss(const DepthMap<T>& gt, const Var<T>& prediction, const Var<T>& completion, T lambda) {
  return add(silog(gt, prediction, lambda), silog(gt, completion, lambda));
}

#define SAN_INSTANTIATE(T)                                                      \
  template Var<T> silog(const DepthMap<T>&, const Var<T>&, T);                  \
  template T silog_value(const DepthMap<T>&, const DepthMap<T>&, T);            \
  template Var<T> joint_loss(const DepthMap<T>&, const Var<T>&, const Var<T>&, T);
SAN_INSTANTIATE(float)
SAN_INSTANTIATE(double)
#undef SAN_INSTANTIATE

}  // namespace san
