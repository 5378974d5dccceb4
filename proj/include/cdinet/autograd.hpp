#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "cdinet/tensor.hpp"

namespace cdinet {

class Node;
using Var = std::shared_ptr<Node>;

/// One value in the computation graph. Ops allocate a Node for their result
/// and, when gradients are enabled and some input needs them, attach a
/// backward closure that scatters this node's grad into its parents.
class Node {
 public:
  Tensor value;
  Tensor grad;  // allocated lazily by ensure_grad()
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  explicit Node(Tensor v) : value(std::move(v)) {}

  Tensor& ensure_grad() {
    if (grad.empty()) grad = Tensor::zeros(value.shape());
    return grad;
  }
  void zero_grad() {
    if (!grad.empty()) grad.fill(0.0);
  }
};

Var make_var(Tensor value, bool requires_grad = false);

/// Reverse-mode pass from `root` (seeded with ones). Backward closures are
/// released as they run, so a graph can be backpropagated once.
void backward(const Var& root);

namespace autograd {

bool grad_enabled();

/// RAII gradient switch; nests. While disabled, ops neither record parents
/// nor build closures, so inference frees intermediates as they go dead.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace autograd
}  // namespace cdinet
