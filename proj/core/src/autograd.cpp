#include "san/autograd.hpp"

#include <unordered_set>

#include "san/errors.hpp"

namespace san {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <class T>
Tensor<T>& Node<T>::grad_buffer() {
  if (grad.empty()) grad = Tensor<T>(value.shape());
  return grad;
}

template <class T>
void Node<T>::accumulate(const Tensor<T>& g) {
  if (grad.empty()) {
    if (g.shape() != value.shape()) {
      throw ContractError(std::string("gradient shape ") + shape_str(g.shape()) + " does not match value " +
                          shape_str(value.shape()) + " at " + op);
    }
    grad = g;
  } else {
    grad.add_(g);
  }
}

template <class T>
Var<T> make_leaf(Tensor<T> value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

template <class T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, const char* op,
                   std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || (p && p->requires_grad);
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return node;
}

template <class T>
void backward(const Var<T>& root) {
  if (!root) throw ContractError("backward on null root");
  if (root->value.numel() != 1) {
    throw ContractError("backward root must be scalar, got shape " + shape_str(root->value.shape()));
  }
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent && parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer().fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && node->has_grad()) node->backward(*node);
  }
  for (Node<T>* node : order) {
    if (node->backward) node->grad = Tensor<T>();
  }
}

template struct Node<float>;
template struct Node<double>;
template Var<float> make_leaf(Tensor<float>, bool);
template Var<double> make_leaf(Tensor<double>, bool);
template Var<float> make_result(Tensor<float>, std::vector<Var<float>>, const char*,
                                std::function<void(Node<float>&)>);
template Var<double> make_result(Tensor<double>, std::vector<Var<double>>, const char*,
                                 std::function<void(Node<double>&)>);
template void backward(const Var<float>&);
template void backward(const Var<double>&);

}  // namespace san
