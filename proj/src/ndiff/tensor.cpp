#include <algorithm>
#include <cmath>

#include "internal.hpp"

namespace ctg::nd {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows * cols, "shape_error",
          "matrix data length " + std::to_string(data_.size()) + " does not match " + shape_string());
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::row(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

std::string Matrix::shape_string() const { return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")"; }

const Matrix& Tensor::value() const {
  require(node_ != nullptr, "invalid_argument", "empty tensor handle");
  return node_->value;
}

const Matrix& Tensor::grad() const {
  require(node_ != nullptr, "invalid_argument", "empty tensor handle");
  require(node_->tape != nullptr, "detached", "constant tensors carry no gradient");
  return node_->grad;
}

double Tensor::item() const {
  const auto& v = value();
  require(v.rows() == 1 && v.cols() == 1, "shape_error", "item() on non-scalar " + v.shape_string());
  return v(0, 0);
}

bool Tensor::requires_grad() const { return node_ && node_->tape != nullptr; }
bool Tensor::on_tape() const { return requires_grad(); }

Tensor constant(Matrix m) {
  auto node = std::make_shared<Node>();
  node->value = std::move(m);
  return Tensor(std::move(node));
}

Tape::Tape() : state_(std::make_shared<TapeState>()) {}

Tensor Tape::variable(Matrix value) {
  require(!state_->consumed, "tape_consumed", "cannot record on a tape after backward");
  auto node = std::make_shared<Node>();
  node->grad = Matrix(value.rows(), value.cols());
  node->value = std::move(value);
  node->tape = state_;
  node->order = state_->nodes.size();
  state_->nodes.push_back(node);
  return Tensor(std::move(node));
}

std::size_t Tape::size() const { return state_->nodes.size(); }

namespace {

void run_backward(const std::shared_ptr<Node>& loss) {
  require(loss != nullptr, "invalid_argument", "backward on empty tensor");
  require(loss->tape != nullptr, "detached", "backward called on a tensor that is not on a tape");
  require(loss->value.rows() == 1 && loss->value.cols() == 1, "shape_error",
          "backward requires a 1x1 loss, got " + loss->value.shape_string());
  auto& tape = *loss->tape;
  require(!tape.consumed, "tape_consumed", "backward already ran on this tape; re-record the computation");
  tape.consumed = true;
  loss->grad(0, 0) = 1.0;
  for (std::size_t i = loss->order + 1; i-- > 0;) {
    auto node = tape.nodes[i].lock();
    if (node && node->backward) node->backward(*node);
  }
}

}  // namespace

void Tape::backward(const Tensor& loss) {
  require(loss.node_ && loss.node_->tape == state_, "detached", "loss was not recorded on this tape");
  run_backward(loss.node_);
}

void backward(const Tensor& loss) { run_backward(OpBuilder::node(loss)); }

}  // namespace ctg::nd
