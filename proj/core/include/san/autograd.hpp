#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "san/tensor.hpp"

namespace san {

/// One value in the computation graph. `backward` reads `grad` and
/// accumulates into the parents' gradients.
template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool has_grad() const noexcept { return !grad.empty(); }
  /// Gradient buffer, zero-allocated on first use.
  Tensor<T>& grad_buffer();
  void accumulate(const Tensor<T>& g);
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

/// Whether new results record their backward closure (thread-local).
bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <class T>
Var<T> make_leaf(Tensor<T> value, bool requires_grad = false);

/// Wraps an op result. The closure and parent links are kept only when
/// recording is enabled and at least one parent requires a gradient.
template <class T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, const char* op,
                   std::function<void(Node<T>&)> backward);

/// Reverse-mode sweep from a scalar root. Leaf gradients accumulate across
/// calls; intermediate gradients are released afterwards.
template <class T>
void backward(const Var<T>& root);

extern template struct Node<float>;
extern template struct Node<double>;

}  // namespace san
