/**
 * Copyright 2026 The iptdet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "iptdet/nn/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace iptdet::nn {

namespace {
thread_local bool grad_enabled = true;
}

bool GradMode::enabled() { return grad_enabled; }
void GradMode::set_enabled(bool on) { grad_enabled = on; }

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::detach() const {
  auto n = std::make_shared<Node>();
  n->value = node_->value;
  return from_node(std::move(n));
}

Var make_result(Matrix value, std::vector<Var> parents, BackwardFn backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (GradMode::enabled()) {
    bool any = false;
    for (const auto& p : parents) {
      any = any || p.requires_grad();
    }
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (auto& p : parents) {
        n->parents.push_back(p.node());
      }
      n->backward = std::move(backward);
    }
  }
  return Var::from_node(std::move(n));
}

namespace {

void topo_visit(Node* n, std::unordered_set<Node*>& seen, std::vector<Node*>& order) {
  // Iterative DFS; graphs from deep encoders would overflow a recursive walk.
  std::vector<std::pair<Node*, std::size_t>> stack;
  if (!seen.insert(n).second) {
    return;
  }
  stack.emplace_back(n, 0);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

}  // namespace

void backward(std::span<const std::pair<Var, Matrix>> seeds) {
  std::unordered_set<Node*> seen;
  std::vector<Node*> order;
  for (const auto& [root, seed] : seeds) {
    if (!root.requires_grad()) {
      continue;
    }
    if (seed.rows() != root.rows() || seed.cols() != root.cols()) {
      throw std::invalid_argument("backward: seed shape does not match root");
    }
    root.node()->accumulate(seed);
    topo_visit(root.node().get(), seen, order);
  }
  // order is post-order (parents before children); walk it reversed.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) {
      n->backward(*n);
      // Intermediate gradients are not needed once propagated.
      n->grad.resize(0, 0);
    }
  }
}

void backward(const Var& scalar_root) {
  std::pair<Var, Matrix> seed{scalar_root, Matrix::Ones(1, 1)};
  backward(std::span<const std::pair<Var, Matrix>>(&seed, 1));
}

}  // namespace iptdet::nn
