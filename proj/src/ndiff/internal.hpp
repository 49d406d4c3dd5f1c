#pragma once

#include <cmath>
#include <string>

#include "ctg/error.hpp"
#include "ctg/ndiff.hpp"

namespace ctg::nd {

namespace detail {

struct TapeState {
  std::vector<std::weak_ptr<Node>> nodes;
  bool consumed = false;
};

struct Node {
  Matrix value;
  Matrix grad;
  std::shared_ptr<TapeState> tape;
  std::size_t order = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
};

}  // namespace detail

using detail::Node;
using detail::TapeState;

// Builds op outputs: figures out which tape (if any) the inputs live on and
// records the output with its backward closure.
struct OpBuilder {
  static Tensor make(const char* op, std::initializer_list<const Tensor*> inputs, Matrix value,
                     std::function<void(Node&)> backward) {
    for (double x : value.data())
      if (!std::isfinite(x)) fail("non_finite", std::string(op) + " produced a non-finite value");
    std::shared_ptr<TapeState> tape;
    for (const auto* t : inputs) {
      require(t->node_ != nullptr, "invalid_argument", std::string(op) + ": empty tensor input");
      const auto& tt = t->node_->tape;
      if (!tt) continue;
      require(!tape || tape == tt, "invalid_argument", std::string(op) + ": inputs live on different tapes");
      tape = tt;
    }
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (tape) {
      require(!tape->consumed, "tape_consumed", std::string(op) + ": cannot record after backward");
      node->grad = Matrix(node->value.rows(), node->value.cols());
      node->tape = tape;
      node->order = tape->nodes.size();
      for (const auto* t : inputs) node->inputs.push_back(t->node_);
      node->backward = std::move(backward);
      tape->nodes.push_back(node);
    }
    return Tensor(std::move(node));
  }

  static const std::shared_ptr<Node>& node(const Tensor& t) { return t.node_; }
};

}  // namespace ctg::nd
