#include "cdinet/autograd.hpp"

#include <unordered_set>
#include <utility>

namespace cdinet {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

Var make_var(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>(std::move(value));
  node->requires_grad = requires_grad;
  return node;
}

namespace autograd {

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace autograd

void backward(const Var& root) {
  if (!root->requires_grad) {
    throw std::runtime_error("backward() on a node that does not require grad");
  }
  // Iterative postorder DFS: parents end up before their consumers.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next_parent] = stack.back();
    if (next_parent < node->parents.size()) {
      Node* parent = node->parents[next_parent++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn) {
      if (node->grad.empty()) node->ensure_grad();
      node->backward_fn(*node);
      node->backward_fn = nullptr;  // free captured caches
    }
  }
}

}  // namespace cdinet
