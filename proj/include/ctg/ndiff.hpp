#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ctg/rng.hpp"

namespace ctg::nd {

/// Dense row-major matrix of doubles. Plain value type; model parameters and
/// constants live here, the tape wraps them in Tensor handles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix column(std::span<const double> values);
  static Matrix row(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row_span(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::string shape_string() const;
  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace detail {
struct Node;
struct TapeState;
}  // namespace detail

/// Handle to a value that may participate in reverse-mode differentiation.
///
/// Constants carry no tape. Any primitive whose inputs include a tensor that
/// lives on a tape records its output to that same tape; otherwise it just
/// computes the value. Forward values do not depend on recording.
class Tensor {
 public:
  Tensor() = default;

  const Matrix& value() const;
  /// Gradient accumulated by the last backward pass (zeros before it).
  const Matrix& grad() const;

  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const;
  bool requires_grad() const;
  bool on_tape() const;

 private:
  friend Tensor constant(Matrix);
  friend class Tape;
  friend struct OpBuilder;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

Tensor constant(Matrix m);

/// Ordered record of primitive ops. Creation order is a topological order,
/// so backward is a single reverse sweep.
class Tape {
 public:
  Tape();

  /// Leaf that receives a gradient.
  Tensor variable(Matrix value);

  /// Reverse sweep from a 1x1 loss recorded on this tape. A tape can be swept
  /// once; record again on a fresh tape for another pass.
  void backward(const Tensor& loss);

  std::size_t size() const;

 private:
  std::shared_ptr<detail::TapeState> state_;
};

/// Convenience: backward on whatever tape recorded `loss`.
void backward(const Tensor& loss);

// --- primitives ---------------------------------------------------------------
// Every primitive checks shapes (naming the op and shapes on error) and
// rejects non-finite outputs.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  ///< elementwise
Tensor div(const Tensor& a, const Tensor& b);  ///< elementwise
Tensor scale(const Tensor& a, double s);        ///< scalar multiple
Tensor add_scalar(const Tensor& a, double s);
Tensor transpose(const Tensor& a);
Tensor concat_cols(const Tensor& a, const Tensor& b);
/// out[i] = a[index[i]]
Tensor row_gather(const Tensor& a, std::span<const std::size_t> index);
/// out (out_rows x cols), out[index[i]] += a[i]
Tensor row_scatter_add(const Tensor& a, std::span<const std::size_t> index, std::size_t out_rows);
/// 1 x cols mean over rows.
Tensor mean_rows(const Tensor& a);
/// 1x1 sum of all entries.
Tensor sum(const Tensor& a);
/// n x 1 row sums.
Tensor sum_cols(const Tensor& a);
Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor pow(const Tensor& a, double exponent);
/// Symmetric scatter: n x n matrix with out[u][v] += w[e], out[v][u] += w[e]
/// for every pair e. `w` is E x 1.
Tensor scatter_symmetric(const Tensor& w, std::span<const std::pair<std::size_t, std::size_t>> pairs,
                         std::size_t n);
/// out[r] = sum of w[e] for e in groups[r]; `w` is E x 1, out is |groups| x 1.
Tensor segment_sum(const Tensor& w, std::span<const std::vector<std::size_t>> groups);
/// Mean binary cross-entropy of probabilities against {0,1} labels (1x1).
Tensor binary_cross_entropy(const Tensor& preds, const Tensor& labels);
/// Numerically stable mean BCE on logits (1x1).
Tensor binary_cross_entropy_with_logits(const Tensor& logits, const Tensor& labels);

// --- optimizer ---------------------------------------------------------------

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t t = 0;

  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : config(cfg) {}
};

/// One bias-corrected Adam update. Moment buffers are created on first use.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state);

// --- initialisation ----------------------------------------------------------

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed);
  Matrix glorot(std::size_t rows, std::size_t cols);
  Matrix normal(std::size_t rows, std::size_t cols, double mean, double stddev);

 private:
  Rng rng_;
};

}  // namespace ctg::nd
