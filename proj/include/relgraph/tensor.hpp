#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "relgraph/common.hpp"

namespace relgraph {

struct TensorImpl;

// Dense 2-D real64 matrix with reverse-mode autodiff. Value semantics:
// copying a Tensor copies a handle to shared storage. Leaves created with
// requires_grad accumulate into .grad on backward(); gradients of
// intermediate results live only for the duration of one backward pass.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(size_t rows, size_t cols);
  static Tensor full(size_t rows, size_t cols, double value);
  static Tensor from_values(size_t rows, size_t cols, std::vector<double> values);
  static Tensor uniform(size_t rows, size_t cols, double lo, double hi, Rng& rng);
  static Tensor identity(size_t n);

  bool defined() const { return impl_ != nullptr; }
  size_t rows() const;
  size_t cols() const;
  size_t size() const { return rows() * cols(); }

  double at(size_t i, size_t j) const;
  double value() const;  // 1x1 only

  const std::vector<double>& values() const;
  // Mutable access to a leaf's storage (parameter updates, finite
  // differences). Calling it on an op result would silently desynchronize
  // the graph, so it is restricted to leaves.
  std::vector<double>& mut_values();

  bool requires_grad() const;
  Tensor& set_requires_grad(bool v);  // leaves only
  bool is_leaf() const;

  // Accumulated gradient; nullptr until the first backward() reaches this
  // leaf. Shaped like values.
  const std::vector<double>* grad() const;
  void zero_grad();

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// ---- ops ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor add_row_bias(const Tensor& a, const Tensor& bias);  // bias is 1 x cols
Tensor scale(const Tensor& a, double c);
Tensor scale_by(const Tensor& a, const Tensor& s);  // s is a 1x1 tensor
Tensor sum(const Tensor& a);   // 1x1
Tensor mean(const Tensor& a);  // 1x1

Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // throws RuntimeFailure on non-positive input
Tensor log_sigmoid(const Tensor& a);  // input clamped to [-30, 30]

// Inverted dropout: survivors scaled by 1/(1-p) during training, identity in
// eval mode. p in [0, 1).
Tensor dropout(const Tensor& a, double p, bool training, Rng& rng);

Tensor row_gather(const Tensor& a, const std::vector<size_t>& rows);
Tensor rows_dot(const Tensor& a, const Tensor& b);        // n x 1
Tensor scale_rows(const Tensor& a, const Tensor& s);      // s is n x 1
Tensor slice_cols(const Tensor& a, size_t begin, size_t end);

// Per-segment softmax over a column vector. offsets has k+1 entries and
// must partition [0, n) into non-empty segments; each segment is
// exp-normalized with max subtraction.
Tensor segment_softmax(const Tensor& scores, const std::vector<size_t>& offsets);

// Sums rows within segments; offsets has k+1 entries partitioning [0, n).
// Empty segments yield zero rows.
Tensor segment_sum_rows(const Tensor& a, const std::vector<size_t>& offsets);

Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
// Picks one entry per row: out[i] = a[i, idx[i]].
Tensor select_cols_per_row(const Tensor& a, const std::vector<size_t>& idx);

// Accumulates gradients of root (must be 1x1) into every reachable leaf
// with requires_grad. Running twice without zero_grad doubles leaf grads.
void backward(const Tensor& root);

// Central-difference gradient oracle. Evaluates f (scalar-valued) while
// perturbing each element of x, compares to the analytic gradient from
// backward(), and returns the max relative error with denominator
// max(|analytic|, |numeric|, 1e-8). skip(i), when given, excludes element i
// (used near ReLU/LeakyReLU kinks).
double grad_check(const std::function<Tensor()>& f, Tensor x, double eps = 1e-5,
                  const std::function<bool(size_t)>& skip = nullptr);

}  // namespace relgraph
