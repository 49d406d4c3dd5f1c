#include <algorithm>
#include <cmath>

#include "internal.hpp"

namespace ctg::nd {
namespace {

const Matrix& val(const Tensor& t) { return t.value(); }

void same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail("shape_error", std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

// Gradient of an input, or nullptr when that input is a constant.
Matrix* grad_of(Node& out, std::size_t i) {
  auto& in = *out.inputs[i];
  return in.tape ? &in.grad : nullptr;
}

// c += a * b  (a: n x k, b: k x m)
void gemm_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  const auto n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = &c(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double x = a(i, p);
      if (x == 0.0) continue;
      const double* brow = b.row_span(p).data();
      for (std::size_t j = 0; j < m; ++j) crow[j] += x * brow[j];
    }
  }
}

// c += a * b^T  (a: n x m, b: k x m)
void gemm_abt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  const auto n = a.rows(), m = a.cols(), k = b.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double s = 0.0;
      const double* arow = a.row_span(i).data();
      const double* brow = b.row_span(p).data();
      for (std::size_t j = 0; j < m; ++j) s += arow[j] * brow[j];
      c(i, p) += s;
    }
}

// c += a^T * b  (a: k x n, b: k x m)
void gemm_atb_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  const auto k = a.rows(), n = a.cols(), m = b.cols();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b.row_span(p).data();
    for (std::size_t i = 0; i < n; ++i) {
      const double x = a(p, i);
      if (x == 0.0) continue;
      double* crow = &c(i, 0);
      for (std::size_t j = 0; j < m; ++j) crow[j] += x * brow[j];
    }
  }
}

template <class F>
Matrix map(const Matrix& a, F f) {
  Matrix out(a.rows(), a.cols());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& A = val(a);
  const auto& B = val(b);
  if (A.cols() != B.rows())
    fail("shape_error", "matmul: inner dimensions differ " + A.shape_string() + " x " + B.shape_string());
  Matrix out(A.rows(), B.cols());
  gemm_acc(A, B, out);
  return OpBuilder::make("matmul", {&a, &b}, std::move(out), [](Node& o) {
    const auto& A = o.inputs[0]->value;
    const auto& B = o.inputs[1]->value;
    if (auto* ga = grad_of(o, 0)) gemm_abt_acc(o.grad, B, *ga);
    if (auto* gb = grad_of(o, 1)) gemm_atb_acc(A, o.grad, *gb);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  same_shape("add", val(a), val(b));
  Matrix out = val(a);
  auto d = out.data();
  auto s = val(b).data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  return OpBuilder::make("add", {&a, &b}, std::move(out), [](Node& o) {
    for (std::size_t k = 0; k < 2; ++k)
      if (auto* g = grad_of(o, k))
        for (std::size_t i = 0; i < g->size(); ++i) g->data()[i] += o.grad.data()[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  same_shape("sub", val(a), val(b));
  Matrix out = val(a);
  auto d = out.data();
  auto s = val(b).data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] -= s[i];
  return OpBuilder::make("sub", {&a, &b}, std::move(out), [](Node& o) {
    if (auto* g = grad_of(o, 0))
      for (std::size_t i = 0; i < g->size(); ++i) g->data()[i] += o.grad.data()[i];
    if (auto* g = grad_of(o, 1))
      for (std::size_t i = 0; i < g->size(); ++i) g->data()[i] -= o.grad.data()[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  same_shape("mul", val(a), val(b));
  Matrix out = val(a);
  auto d = out.data();
  auto s = val(b).data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] *= s[i];
  return OpBuilder::make("mul", {&a, &b}, std::move(out), [](Node& o) {
    const auto A = o.inputs[0]->value.data();
    const auto B = o.inputs[1]->value.data();
    const auto G = o.grad.data();
    if (auto* g = grad_of(o, 0))
      for (std::size_t i = 0; i < G.size(); ++i) g->data()[i] += G[i] * B[i];
    if (auto* g = grad_of(o, 1))
      for (std::size_t i = 0; i < G.size(); ++i) g->data()[i] += G[i] * A[i];
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  same_shape("div", val(a), val(b));
  Matrix out = val(a);
  auto d = out.data();
  auto s = val(b).data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] /= s[i];
  return OpBuilder::make("div", {&a, &b}, std::move(out), [](Node& o) {
    const auto A = o.inputs[0]->value.data();
    const auto B = o.inputs[1]->value.data();
    const auto G = o.grad.data();
    if (auto* g = grad_of(o, 0))
      for (std::size_t i = 0; i < G.size(); ++i) g->data()[i] += G[i] / B[i];
    if (auto* g = grad_of(o, 1))
      for (std::size_t i = 0; i < G.size(); ++i) g->data()[i] -= G[i] * A[i] / (B[i] * B[i]);
  });
}

Tensor scale(const Tensor& a, double s) {
  return OpBuilder::make("scale", {&a}, map(val(a), [s](double x) { return s * x; }), [s](Node& o) {
    if (auto* g = grad_of(o, 0))
      for (std::size_t i = 0; i < g->size(); ++i) g->data()[i] += s * o.grad.data()[i];
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  return OpBuilder::make("add_scalar", {&a}, map(val(a), [s](double x) { return x + s; }), [](Node& o) {
    if (auto* g = grad_of(o, 0))
      for (std::size_t i = 0; i < g->size(); ++i) g->data()[i] += o.grad.data()[i];
  });
}

Tensor transpose(const Tensor& a) {
  const auto& A = val(a);
  Matrix out(A.cols(), A.rows());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) out(j, i) = A(i, j);
  return OpBuilder::make("transpose", {&a}, std::move(out), [](Node& o) {
    if (auto* g = grad_of(o, 0))
      for (std::size_t i = 0; i < g->rows(); ++i)
        for (std::size_t j = 0; j < g->cols(); ++j) (*g)(i, j) += o.grad(j, i);
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const auto& A = val(a);
  const auto& B = val(b);
  if (A.rows() != B.rows())
    fail("shape_error", "concat_cols: row counts differ " + A.shape_string() + " vs " + B.shape_string());
  const auto p = A.cols(), q = B.cols();
  Matrix out(A.rows(), p + q);
  for (std::size_t i = 0; i < A.rows(); ++i) {
    std::copy_n(A.row_span(i).data(), p, &out(i, 0));
    if (q) std::copy_n(B.row_span(i).data(), q, out.row_span(i).data() + p);
  }
  return OpBuilder::make("concat_cols", {&a, &b}, std::move(out), [p, q](Node& o) {
    if (auto* g = grad_of(o, 0))
      for (std::size_t i = 0; i < g->rows(); ++i)
        for (std::size_t j = 0; j < p; ++j) (*g)(i, j) += o.grad(i, j);
    if (auto* g = grad_of(o, 1))
      for (std::size_t i = 0; i < g->rows(); ++i)
        for (std::size_t j = 0; j < q; ++j) (*g)(i, j) += o.grad(i, p + j);
  });
}

Tensor row_gather(const Tensor& a, std::span<const std::size_t> index) {
  const auto& A = val(a);
  Matrix out(index.size(), A.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= A.rows())
      fail("shape_error", "row_gather: index " + std::to_string(index[i]) + " out of range for " + A.shape_string());
    std::copy_n(A.row_span(index[i]).data(), A.cols(), out.row_span(i).data());
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return OpBuilder::make("row_gather", {&a}, std::move(out), [idx = std::move(idx)](Node& o) {
    if (auto* g = grad_of(o, 0))
      for (std::size_t i = 0; i < idx.size(); ++i) {
        auto dst = g->row_span(idx[i]);
        auto src = o.grad.row_span(i);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
  });
}

Tensor row_scatter_add(const Tensor& a, std::span<const std::size_t> index, std::size_t out_rows) {
  const auto& A = val(a);
  if (index.size() != A.rows())
    fail("shape_error", "row_scatter_add: " + std::to_string(index.size()) + " indices for " + A.shape_string());
  Matrix out(out_rows, A.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= out_rows)
      fail("shape_error", "row_scatter_add: index " + std::to_string(index[i]) + " >= " + std::to_string(out_rows));
    auto dst = out.row_span(index[i]);
    auto src = A.row_span(i);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return OpBuilder::make("row_scatter_add", {&a}, std::move(out), [idx = std::move(idx)](Node& o) {
    if (auto* g = grad_of(o, 0))
      for (std::size_t i = 0; i < idx.size(); ++i) {
        auto dst = g->row_span(i);
        auto src = o.grad.row_span(idx[i]);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
  });
}

Tensor mean_rows(const Tensor& a) {
  const auto& A = val(a);
  if (A.rows() == 0) fail("shape_error", "mean_rows: empty input " + A.shape_string());
  Matrix out(1, A.cols());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) out(0, j) += A(i, j);
  const double inv = 1.0 / static_cast<double>(A.rows());
  for (auto& x : out.data()) x *= inv;
  return OpBuilder::make("mean_rows", {&a}, std::move(out), [inv](Node& o) {
    if (auto* g = grad_of(o, 0))
      for (std::size_t i = 0; i < g->rows(); ++i)
        for (std::size_t j = 0; j < g->cols(); ++j) (*g)(i, j) += inv * o.grad(0, j);
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : val(a).data()) s += x;
  return OpBuilder::make("sum", {&a}, Matrix(1, 1, s), [](Node& o) {
    if (auto* g = grad_of(o, 0))
      for (auto& x : g->data()) x += o.grad(0, 0);
  });
}

Tensor sum_cols(const Tensor& a) {
  const auto& A = val(a);
  Matrix out(A.rows(), 1);
  for (std::size_t i = 0; i < A.rows(); ++i) {
    double s = 0.0;
    for (double x : A.row_span(i)) s += x;
    out(i, 0) = s;
  }
  return OpBuilder::make("sum_cols", {&a}, std::move(out), [](Node& o) {
    if (auto* g = grad_of(o, 0))
      for (std::size_t i = 0; i < g->rows(); ++i)
        for (auto& x : g->row_span(i)) x += o.grad(i, 0);
  });
}

Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
  const auto& A = val(a);
  if (rows * cols != A.size())
    fail("shape_error", "reshape: cannot view " + A.shape_string() + " as (" + std::to_string(rows) + "x" +
                            std::to_string(cols) + ")");
  Matrix out(rows, cols, std::vector<double>(A.data().begin(), A.data().end()));
  return OpBuilder::make("reshape", {&a}, std::move(out), [](Node& o) {
    if (auto* g = grad_of(o, 0))
      for (std::size_t i = 0; i < g->size(); ++i) g->data()[i] += o.grad.data()[i];
  });
}

Tensor relu(const Tensor& a) {
  return OpBuilder::make("relu", {&a}, map(val(a), [](double x) { return x > 0.0 ? x : 0.0; }), [](Node& o) {
    if (auto* g = grad_of(o, 0)) {
      const auto A = o.inputs[0]->value.data();
      for (std::size_t i = 0; i < A.size(); ++i)
        if (A[i] > 0.0) g->data()[i] += o.grad.data()[i];
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  return OpBuilder::make("sigmoid", {&a}, map(val(a), stable_sigmoid), [](Node& o) {
    if (auto* g = grad_of(o, 0)) {
      const auto S = o.value.data();
      for (std::size_t i = 0; i < S.size(); ++i) g->data()[i] += o.grad.data()[i] * S[i] * (1.0 - S[i]);
    }
  });
}

Tensor log(const Tensor& a) {
  return OpBuilder::make("log", {&a}, map(val(a), [](double x) { return std::log(x); }), [](Node& o) {
    if (auto* g = grad_of(o, 0)) {
      const auto A = o.inputs[0]->value.data();
      for (std::size_t i = 0; i < A.size(); ++i) g->data()[i] += o.grad.data()[i] / A[i];
    }
  });
}

Tensor exp(const Tensor& a) {
  return OpBuilder::make("exp", {&a}, map(val(a), [](double x) { return std::exp(x); }), [](Node& o) {
    if (auto* g = grad_of(o, 0)) {
      const auto E = o.value.data();
      for (std::size_t i = 0; i < E.size(); ++i) g->data()[i] += o.grad.data()[i] * E[i];
    }
  });
}

Tensor pow(const Tensor& a, double exponent) {
  return OpBuilder::make("pow", {&a}, map(val(a), [exponent](double x) { return std::pow(x, exponent); }),
                         [exponent](Node& o) {
                           if (auto* g = grad_of(o, 0)) {
                             const auto A = o.inputs[0]->value.data();
                             for (std::size_t i = 0; i < A.size(); ++i)
                               g->data()[i] += o.grad.data()[i] * exponent * std::pow(A[i], exponent - 1.0);
                           }
                         });
}

Tensor scatter_symmetric(const Tensor& w, std::span<const std::pair<std::size_t, std::size_t>> pairs,
                         std::size_t n) {
  const auto& W = val(w);
  if (W.cols() != 1 || W.rows() != pairs.size())
    fail("shape_error", "scatter_symmetric: weights " + W.shape_string() + " for " + std::to_string(pairs.size()) +
                            " pairs");
  Matrix out(n, n);
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    const auto [u, v] = pairs[e];
    if (u >= n || v >= n) fail("shape_error", "scatter_symmetric: pair index out of range");
    out(u, v) += W(e, 0);
    out(v, u) += W(e, 0);
  }
  std::vector<std::pair<std::size_t, std::size_t>> ps(pairs.begin(), pairs.end());
  return OpBuilder::make("scatter_symmetric", {&w}, std::move(out), [ps = std::move(ps)](Node& o) {
    if (auto* g = grad_of(o, 0))
      for (std::size_t e = 0; e < ps.size(); ++e) (*g)(e, 0) += o.grad(ps[e].first, ps[e].second) + o.grad(ps[e].second, ps[e].first);
  });
}

Tensor segment_sum(const Tensor& w, std::span<const std::vector<std::size_t>> groups) {
  const auto& W = val(w);
  if (W.cols() != 1) fail("shape_error", "segment_sum: weights must be a column, got " + W.shape_string());
  Matrix out(groups.size(), 1);
  for (std::size_t r = 0; r < groups.size(); ++r)
    for (auto e : groups[r]) {
      if (e >= W.rows()) fail("shape_error", "segment_sum: index " + std::to_string(e) + " out of range");
      out(r, 0) += W(e, 0);
    }
  std::vector<std::vector<std::size_t>> gs(groups.begin(), groups.end());
  return OpBuilder::make("segment_sum", {&w}, std::move(out), [gs = std::move(gs)](Node& o) {
    if (auto* g = grad_of(o, 0))
      for (std::size_t r = 0; r < gs.size(); ++r)
        for (auto e : gs[r]) (*g)(e, 0) += o.grad(r, 0);
  });
}

Tensor binary_cross_entropy(const Tensor& preds, const Tensor& labels) {
  const auto& P = val(preds);
  const auto& Y = val(labels);
  same_shape("binary_cross_entropy", P, Y);
  if (P.size() == 0) fail("shape_error", "binary_cross_entropy: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double p = P.data()[i], y = Y.data()[i];
    if (y != 0.0) total -= y * std::log(p);
    if (y != 1.0) total -= (1.0 - y) * std::log(1.0 - p);
  }
  const double inv = 1.0 / static_cast<double>(P.size());
  return OpBuilder::make("binary_cross_entropy", {&preds, &labels}, Matrix(1, 1, total * inv), [inv](Node& o) {
    if (auto* g = grad_of(o, 0)) {
      const auto P = o.inputs[0]->value.data();
      const auto Y = o.inputs[1]->value.data();
      for (std::size_t i = 0; i < P.size(); ++i)
        g->data()[i] += o.grad(0, 0) * inv * (P[i] - Y[i]) / (P[i] * (1.0 - P[i]));
    }
  });
}

Tensor binary_cross_entropy_with_logits(const Tensor& logits, const Tensor& labels) {
  const auto& X = val(logits);
  const auto& Y = val(labels);
  same_shape("binary_cross_entropy_with_logits", X, Y);
  if (X.size() == 0) fail("shape_error", "binary_cross_entropy_with_logits: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double x = X.data()[i], y = Y.data()[i];
    total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  const double inv = 1.0 / static_cast<double>(X.size());
  return OpBuilder::make("binary_cross_entropy_with_logits", {&logits, &labels}, Matrix(1, 1, total * inv),
                         [inv](Node& o) {
                           if (auto* g = grad_of(o, 0)) {
                             const auto X = o.inputs[0]->value.data();
                             const auto Y = o.inputs[1]->value.data();
                             for (std::size_t i = 0; i < X.size(); ++i)
                               g->data()[i] += o.grad(0, 0) * inv * (stable_sigmoid(X[i]) - Y[i]);
                           }
                         });
}

// --- optimizer & init ----------------------------------------------------------

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state) {
  require(params.size() == grads.size(), "shape_error", "adam_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  require(state.m.size() == params.size(), "shape_error", "adam_step: state built for a different parameter list");
  const auto& c = state.config;
  ++state.t;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    same_shape("adam_step", p, grads[k]);
    same_shape("adam_step", p, state.m[k]);
    auto P = p.data();
    auto G = grads[k].data();
    auto M = state.m[k].data();
    auto V = state.v[k].data();
    for (std::size_t i = 0; i < P.size(); ++i) {
      M[i] = c.beta1 * M[i] + (1.0 - c.beta1) * G[i];
      V[i] = c.beta2 * V[i] + (1.0 - c.beta2) * G[i] * G[i];
      const double mhat = M[i] / bc1;
      const double vhat = V[i] / bc2;
      P[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

Initializer::Initializer(std::uint64_t seed) : rng_(derive_seed(seed, {0x1417u})) {}

Matrix Initializer::glorot(std::size_t rows, std::size_t cols) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (auto& x : m.data()) x = rng_.uniform(-limit, limit);
  return m;
}

Matrix Initializer::normal(std::size_t rows, std::size_t cols, double mean, double stddev) {
  Matrix m(rows, cols);
  for (auto& x : m.data()) x = mean + stddev * rng_.normal();
  return m;
}

}  // namespace ctg::nd
