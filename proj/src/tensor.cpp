#include "relgraph/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>
#include <unordered_map>
#include <unordered_set>

namespace relgraph {

struct Node;

struct TensorImpl {
  size_t rows = 0, cols = 0;
  std::vector<double> values;
  bool requires_grad = false;
  std::unique_ptr<std::vector<double>> grad;
  std::unique_ptr<Node> node;  // null for leaves
  std::mutex grad_mu;          // serializes leaf accumulation across graphs
};

namespace {

struct BackCtx;
using BackwardFn = std::function<void(BackCtx&)>;

}  // namespace

struct Node {
  const char* op;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  BackwardFn fn;
};

namespace {

// Per-pass gradient buffers. Leaves flush into TensorImpl::grad at the end;
// intermediates are dropped, so repeated backward() calls accumulate only
// at the leaves.
struct BackCtx {
  const std::vector<double>* out_grad = nullptr;
  Node* node = nullptr;
  std::unordered_map<TensorImpl*, std::vector<double>>* buffers = nullptr;

  const std::vector<double>& g() const { return *out_grad; }

  // Gradient buffer of parent k, or nullptr when that parent does not
  // require grad.
  std::vector<double>* pgrad(size_t k) {
    TensorImpl* p = node->parents[k].get();
    if (!p->requires_grad) return nullptr;
    auto& buf = (*buffers)[p];
    if (buf.empty() && !p->values.empty()) buf.assign(p->values.size(), 0.0);
    return &buf;
  }

  const TensorImpl& parent(size_t k) const { return *node->parents[k]; }
};

Tensor make_op(size_t rows, size_t cols, std::vector<double> vals, const char* op,
               std::vector<Tensor> parents, BackwardFn fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->rows = rows;
  impl->cols = cols;
  impl->values = std::move(vals);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  impl->requires_grad = rg;
  if (rg) {
    impl->node = std::make_unique<Node>();
    impl->node->op = op;
    impl->node->parents.reserve(parents.size());
    for (const auto& p : parents) impl->node->parents.push_back(p.impl());
    impl->node->fn = std::move(fn);
  }
  return Tensor(std::move(impl));
}

void check_defined(const Tensor& t, const char* op) {
  require(t.defined(), std::string(op) + ": undefined tensor");
}

void check_offsets(const std::vector<size_t>& offsets, size_t n, const char* op,
                   bool allow_empty) {
  require(offsets.size() >= 2, std::string(op) + ": offsets need at least two entries");
  require(offsets.front() == 0 && offsets.back() == n,
          std::string(op) + ": offsets must span [0, n)");
  for (size_t k = 1; k < offsets.size(); ++k) {
    require(offsets[k] >= offsets[k - 1], std::string(op) + ": offsets must be monotone");
    if (!allow_empty)
      require(offsets[k] > offsets[k - 1], std::string(op) + ": empty segment");
  }
}

}  // namespace

// ---- Tensor basics ----

Tensor Tensor::zeros(size_t rows, size_t cols) {
  return from_values(rows, cols, std::vector<double>(rows * cols, 0.0));
}

Tensor Tensor::full(size_t rows, size_t cols, double value) {
  return from_values(rows, cols, std::vector<double>(rows * cols, value));
}

Tensor Tensor::from_values(size_t rows, size_t cols, std::vector<double> values) {
  require(values.size() == rows * cols, "Tensor: values length must equal rows*cols");
  auto impl = std::make_shared<TensorImpl>();
  impl->rows = rows;
  impl->cols = cols;
  impl->values = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::uniform(size_t rows, size_t cols, double lo, double hi, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return from_values(rows, cols, std::move(v));
}

Tensor Tensor::identity(size_t n) {
  Tensor t = zeros(n, n);
  for (size_t i = 0; i < n; ++i) t.impl()->values[i * n + i] = 1.0;
  return t;
}

size_t Tensor::rows() const { return impl_ ? impl_->rows : 0; }
size_t Tensor::cols() const { return impl_ ? impl_->cols : 0; }

double Tensor::at(size_t i, size_t j) const {
  require(impl_ && i < impl_->rows && j < impl_->cols, "Tensor::at: index out of range");
  return impl_->values[i * impl_->cols + j];
}

double Tensor::value() const {
  require(impl_ && impl_->rows == 1 && impl_->cols == 1, "Tensor::value: tensor is not 1x1");
  return impl_->values[0];
}

const std::vector<double>& Tensor::values() const {
  check_defined(*this, "values");
  return impl_->values;
}

std::vector<double>& Tensor::mut_values() {
  check_defined(*this, "mut_values");
  require(is_leaf(), "mut_values: only leaf tensors are mutable");
  return impl_->values;
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
  check_defined(*this, "set_requires_grad");
  require(is_leaf(), "set_requires_grad: only valid on leaf tensors");
  impl_->requires_grad = v;
  return *this;
}

bool Tensor::is_leaf() const { return impl_ && !impl_->node; }

const std::vector<double>* Tensor::grad() const {
  return impl_ && impl_->grad ? impl_->grad.get() : nullptr;
}

void Tensor::zero_grad() {
  if (impl_ && impl_->grad) std::fill(impl_->grad->begin(), impl_->grad->end(), 0.0);
}

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  const size_t m = a.rows(), k = a.cols(), n = b.cols();
  require(b.rows() == k, "matmul: inner dimensions mismatch");
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < m; ++i) {
    const double* arow = av.data() + i * k;
    double* orow = out.data() + i * n;
    for (size_t p = 0; p < k; ++p) {
      const double av_ip = arow[p];
      if (av_ip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (size_t j = 0; j < n; ++j) orow[j] += av_ip * brow[j];
    }
  }
  return make_op(m, n, std::move(out), "matmul", {a, b}, [m, k, n](BackCtx& ctx) {
    const auto& g = ctx.g();
    const auto& av = ctx.parent(0).values;
    const auto& bv = ctx.parent(1).values;
    if (auto* da = ctx.pgrad(0)) {  // dA = dC * B^T
      for (size_t i = 0; i < m; ++i)
        for (size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = g.data() + i * n;
          const double* brow = bv.data() + p * n;
          for (size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          (*da)[i * k + p] += acc;
        }
    }
    if (auto* db = ctx.pgrad(1)) {  // dB = A^T * dC
      for (size_t i = 0; i < m; ++i) {
        const double* arow = av.data() + i * k;
        const double* grow = g.data() + i * n;
        for (size_t p = 0; p < k; ++p) {
          const double a_ip = arow[p];
          if (a_ip == 0.0) continue;
          double* drow = db->data() + p * n;
          for (size_t j = 0; j < n; ++j) drow[j] += a_ip * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  check_defined(a, "transpose");
  const size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto& av = a.values();
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_op(n, m, std::move(out), "transpose", {a}, [m, n](BackCtx& ctx) {
    if (auto* da = ctx.pgrad(0)) {
      const auto& g = ctx.g();
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) (*da)[i * n + j] += g[j * m + i];
    }
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  check_defined(a, "concat_cols");
  check_defined(b, "concat_cols");
  const size_t m = a.rows(), p = a.cols(), q = b.cols();
  require(b.rows() == m, "concat_cols: row counts differ");
  std::vector<double> out(m * (p + q));
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < m; ++i) {
    std::copy_n(av.data() + i * p, p, out.data() + i * (p + q));
    std::copy_n(bv.data() + i * q, q, out.data() + i * (p + q) + p);
  }
  return make_op(m, p + q, std::move(out), "concat_cols", {a, b}, [m, p, q](BackCtx& ctx) {
    const auto& g = ctx.g();
    if (auto* da = ctx.pgrad(0))
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < p; ++j) (*da)[i * p + j] += g[i * (p + q) + j];
    if (auto* db = ctx.pgrad(1))
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < q; ++j) (*db)[i * q + j] += g[i * (p + q) + p + j];
  });
}

namespace {

Tensor binary_same_shape(const Tensor& a, const Tensor& b, const char* op,
                         double (*fwd)(double, double), int kind) {
  check_defined(a, op);
  check_defined(b, op);
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(op) + ": shape mismatch");
  const size_t n = a.size();
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = fwd(a.values()[i], b.values()[i]);
  return make_op(a.rows(), a.cols(), std::move(out), op, {a, b}, [n, kind](BackCtx& ctx) {
    const auto& g = ctx.g();
    auto* da = ctx.pgrad(0);
    auto* db = ctx.pgrad(1);
    const auto& av = ctx.parent(0).values;
    const auto& bv = ctx.parent(1).values;
    for (size_t i = 0; i < n; ++i) {
      switch (kind) {
        case 0:  // add
          if (da) (*da)[i] += g[i];
          if (db) (*db)[i] += g[i];
          break;
        case 1:  // sub
          if (da) (*da)[i] += g[i];
          if (db) (*db)[i] -= g[i];
          break;
        case 2:  // mul
          if (da) (*da)[i] += g[i] * bv[i];
          if (db) (*db)[i] += g[i] * av[i];
          break;
      }
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_same_shape(a, b, "add", [](double x, double y) { return x + y; }, 0);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_same_shape(a, b, "sub", [](double x, double y) { return x - y; }, 1);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_same_shape(a, b, "mul", [](double x, double y) { return x * y; }, 2);
}

Tensor add_row_bias(const Tensor& a, const Tensor& bias) {
  check_defined(a, "add_row_bias");
  check_defined(bias, "add_row_bias");
  require(bias.rows() == 1 && bias.cols() == a.cols(),
          "add_row_bias: bias must be 1 x cols");
  const size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out[i * n + j] = a.values()[i * n + j] + bias.values()[j];
  return make_op(m, n, std::move(out), "add_row_bias", {a, bias}, [m, n](BackCtx& ctx) {
    const auto& g = ctx.g();
    if (auto* da = ctx.pgrad(0))
      for (size_t i = 0; i < m * n; ++i) (*da)[i] += g[i];
    if (auto* db = ctx.pgrad(1))
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) (*db)[j] += g[i * n + j];
  });
}

Tensor scale(const Tensor& a, double c) {
  check_defined(a, "scale");
  const size_t n = a.size();
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = a.values()[i] * c;
  return make_op(a.rows(), a.cols(), std::move(out), "scale", {a}, [n, c](BackCtx& ctx) {
    if (auto* da = ctx.pgrad(0)) {
      const auto& g = ctx.g();
      for (size_t i = 0; i < n; ++i) (*da)[i] += g[i] * c;
    }
  });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  check_defined(a, "scale_by");
  check_defined(s, "scale_by");
  require(s.rows() == 1 && s.cols() == 1, "scale_by: scale must be 1x1");
  const size_t n = a.size();
  const double sv = s.values()[0];
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = a.values()[i] * sv;
  return make_op(a.rows(), a.cols(), std::move(out), "scale_by", {a, s}, [n](BackCtx& ctx) {
    const auto& g = ctx.g();
    const auto& av = ctx.parent(0).values;
    const double sv = ctx.parent(1).values[0];
    if (auto* da = ctx.pgrad(0))
      for (size_t i = 0; i < n; ++i) (*da)[i] += g[i] * sv;
    if (auto* ds = ctx.pgrad(1)) {
      double acc = 0.0;
      for (size_t i = 0; i < n; ++i) acc += g[i] * av[i];
      (*ds)[0] += acc;
    }
  });
}

Tensor sum(const Tensor& a) {
  check_defined(a, "sum");
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  const size_t n = a.size();
  return make_op(1, 1, {acc}, "sum", {a}, [n](BackCtx& ctx) {
    if (auto* da = ctx.pgrad(0)) {
      const double g = ctx.g()[0];
      for (size_t i = 0; i < n; ++i) (*da)[i] += g;
    }
  });
}

Tensor mean(const Tensor& a) {
  check_defined(a, "mean");
  require(a.size() > 0, "mean: empty tensor");
  return scale(sum(a), 1.0 / double(a.size()));
}

namespace {

Tensor unary_elem(const Tensor& a, const char* op, const std::function<double(double)>& fwd,
                  const std::function<double(double, double)>& dfdx_from_x_and_y) {
  check_defined(a, op);
  const size_t n = a.size();
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = fwd(a.values()[i]);
  std::vector<double> saved = out;
  return make_op(a.rows(), a.cols(), std::move(out), op, {a},
                 [n, saved = std::move(saved), dfdx_from_x_and_y](BackCtx& ctx) {
                   if (auto* da = ctx.pgrad(0)) {
                     const auto& g = ctx.g();
                     const auto& x = ctx.parent(0).values;
                     for (size_t i = 0; i < n; ++i)
                       (*da)[i] += g[i] * dfdx_from_x_and_y(x[i], saved[i]);
                   }
                 });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor relu(const Tensor& a) {
  // subgradient at 0 is 0
  return unary_elem(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  require(slope > 0.0 && slope < 1.0, "leaky_relu: slope must be in (0,1)");
  // subgradient at 0 is the negative-branch slope
  return unary_elem(a, "leaky_relu",
                    [slope](double x) { return x > 0.0 ? x : slope * x; },
                    [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_elem(a, "sigmoid", stable_sigmoid,
                    [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary_elem(a, "exp", [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  check_defined(a, "log");
  for (double v : a.values())
    if (v <= 0.0) throw RuntimeFailure("log: non-positive input");
  return unary_elem(a, "log", [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

Tensor log_sigmoid(const Tensor& a) {
  // input clamped to [-30, 30]; the clamp has zero gradient outside
  return unary_elem(a, "log_sigmoid",
                    [](double x) {
                      const double xc = std::clamp(x, -30.0, 30.0);
                      return xc >= 0.0 ? -std::log1p(std::exp(-xc))
                                       : xc - std::log1p(std::exp(xc));
                    },
                    [](double x, double) {
                      if (x < -30.0 || x > 30.0) return 0.0;
                      return 1.0 - stable_sigmoid(x);
                    });
}

Tensor dropout(const Tensor& a, double p, bool training, Rng& rng) {
  check_defined(a, "dropout");
  require(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
  if (!training || p == 0.0) return a;
  const size_t n = a.size();
  const double inv_keep = 1.0 / (1.0 - p);
  std::vector<uint8_t> keep(n);
  for (size_t i = 0; i < n; ++i) keep[i] = rng.uniform01() >= p ? 1 : 0;
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = keep[i] ? a.values()[i] * inv_keep : 0.0;
  return make_op(a.rows(), a.cols(), std::move(out), "dropout", {a},
                 [n, inv_keep, keep = std::move(keep)](BackCtx& ctx) {
                   if (auto* da = ctx.pgrad(0)) {
                     const auto& g = ctx.g();
                     for (size_t i = 0; i < n; ++i)
                       if (keep[i]) (*da)[i] += g[i] * inv_keep;
                   }
                 });
}

Tensor row_gather(const Tensor& a, const std::vector<size_t>& rows) {
  check_defined(a, "row_gather");
  const size_t m = a.rows(), d = a.cols(), k = rows.size();
  for (size_t r : rows) require(r < m, "row_gather: row index out of range");
  std::vector<double> out(k * d);
  for (size_t i = 0; i < k; ++i)
    std::copy_n(a.values().data() + rows[i] * d, d, out.data() + i * d);
  return make_op(k, d, std::move(out), "row_gather", {a}, [d, rows](BackCtx& ctx) {
    if (auto* da = ctx.pgrad(0)) {
      const auto& g = ctx.g();
      for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < d; ++j) (*da)[rows[i] * d + j] += g[i * d + j];
    }
  });
}

Tensor rows_dot(const Tensor& a, const Tensor& b) {
  check_defined(a, "rows_dot");
  check_defined(b, "rows_dot");
  require(a.rows() == b.rows() && a.cols() == b.cols(), "rows_dot: shape mismatch");
  const size_t m = a.rows(), d = a.cols();
  std::vector<double> out(m, 0.0);
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < d; ++j) out[i] += a.values()[i * d + j] * b.values()[i * d + j];
  return make_op(m, 1, std::move(out), "rows_dot", {a, b}, [m, d](BackCtx& ctx) {
    const auto& g = ctx.g();
    const auto& av = ctx.parent(0).values;
    const auto& bv = ctx.parent(1).values;
    if (auto* da = ctx.pgrad(0))
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < d; ++j) (*da)[i * d + j] += g[i] * bv[i * d + j];
    if (auto* db = ctx.pgrad(1))
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < d; ++j) (*db)[i * d + j] += g[i] * av[i * d + j];
  });
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
  check_defined(a, "scale_rows");
  check_defined(s, "scale_rows");
  require(s.rows() == a.rows() && s.cols() == 1, "scale_rows: scale must be rows x 1");
  const size_t m = a.rows(), d = a.cols();
  std::vector<double> out(m * d);
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < d; ++j) out[i * d + j] = a.values()[i * d + j] * s.values()[i];
  return make_op(m, d, std::move(out), "scale_rows", {a, s}, [m, d](BackCtx& ctx) {
    const auto& g = ctx.g();
    const auto& av = ctx.parent(0).values;
    const auto& sv = ctx.parent(1).values;
    if (auto* da = ctx.pgrad(0))
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < d; ++j) (*da)[i * d + j] += g[i * d + j] * sv[i];
    if (auto* ds = ctx.pgrad(1))
      for (size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (size_t j = 0; j < d; ++j) acc += g[i * d + j] * av[i * d + j];
        (*ds)[i] += acc;
      }
  });
}

Tensor slice_cols(const Tensor& a, size_t begin, size_t end) {
  check_defined(a, "slice_cols");
  require(begin <= end && end <= a.cols(), "slice_cols: range out of bounds");
  const size_t m = a.rows(), n = a.cols(), w = end - begin;
  std::vector<double> out(m * w);
  for (size_t i = 0; i < m; ++i)
    std::copy_n(a.values().data() + i * n + begin, w, out.data() + i * w);
  return make_op(m, w, std::move(out), "slice_cols", {a}, [m, n, w, begin](BackCtx& ctx) {
    if (auto* da = ctx.pgrad(0)) {
      const auto& g = ctx.g();
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < w; ++j) (*da)[i * n + begin + j] += g[i * w + j];
    }
  });
}

Tensor segment_softmax(const Tensor& scores, const std::vector<size_t>& offsets) {
  check_defined(scores, "segment_softmax");
  require(scores.cols() == 1, "segment_softmax: scores must be a column vector");
  const size_t n = scores.rows();
  check_offsets(offsets, n, "segment_softmax", /*allow_empty=*/false);
  std::vector<double> out(n);
  const auto& x = scores.values();
  for (size_t k = 0; k + 1 < offsets.size(); ++k) {
    const size_t b = offsets[k], e = offsets[k + 1];
    double m = x[b];
    for (size_t i = b + 1; i < e; ++i) m = std::max(m, x[i]);
    double denom = 0.0;
    for (size_t i = b; i < e; ++i) {
      out[i] = std::exp(x[i] - m);
      denom += out[i];
    }
    for (size_t i = b; i < e; ++i) out[i] /= denom;
  }
  std::vector<double> alpha = out;
  return make_op(n, 1, std::move(out), "segment_softmax", {scores},
                 [offsets, alpha = std::move(alpha)](BackCtx& ctx) {
                   if (auto* dx = ctx.pgrad(0)) {
                     const auto& g = ctx.g();
                     for (size_t k = 0; k + 1 < offsets.size(); ++k) {
                       const size_t b = offsets[k], e = offsets[k + 1];
                       double dot = 0.0;
                       for (size_t i = b; i < e; ++i) dot += g[i] * alpha[i];
                       for (size_t i = b; i < e; ++i)
                         (*dx)[i] += alpha[i] * (g[i] - dot);
                     }
                   }
                 });
}

Tensor segment_sum_rows(const Tensor& a, const std::vector<size_t>& offsets) {
  check_defined(a, "segment_sum_rows");
  const size_t n = a.rows(), d = a.cols();
  check_offsets(offsets, n, "segment_sum_rows", /*allow_empty=*/true);
  const size_t k = offsets.size() - 1;
  std::vector<double> out(k * d, 0.0);
  for (size_t s = 0; s < k; ++s)
    for (size_t i = offsets[s]; i < offsets[s + 1]; ++i)
      for (size_t j = 0; j < d; ++j) out[s * d + j] += a.values()[i * d + j];
  return make_op(k, d, std::move(out), "segment_sum_rows", {a}, [d, offsets](BackCtx& ctx) {
    if (auto* da = ctx.pgrad(0)) {
      const auto& g = ctx.g();
      for (size_t s = 0; s + 1 < offsets.size(); ++s)
        for (size_t i = offsets[s]; i < offsets[s + 1]; ++i)
          for (size_t j = 0; j < d; ++j) (*da)[i * d + j] += g[s * d + j];
    }
  });
}

Tensor softmax_rows(const Tensor& a) {
  check_defined(a, "softmax_rows");
  require(a.cols() > 0, "softmax_rows: empty rows");
  const size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (size_t i = 0; i < m; ++i) {
    const double* x = a.values().data() + i * n;
    double mx = x[0];
    for (size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double denom = 0.0;
    for (size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(x[j] - mx);
      denom += out[i * n + j];
    }
    for (size_t j = 0; j < n; ++j) out[i * n + j] /= denom;
  }
  std::vector<double> alpha = out;
  return make_op(m, n, std::move(out), "softmax_rows", {a},
                 [m, n, alpha = std::move(alpha)](BackCtx& ctx) {
                   if (auto* da = ctx.pgrad(0)) {
                     const auto& g = ctx.g();
                     for (size_t i = 0; i < m; ++i) {
                       double dot = 0.0;
                       for (size_t j = 0; j < n; ++j) dot += g[i * n + j] * alpha[i * n + j];
                       for (size_t j = 0; j < n; ++j)
                         (*da)[i * n + j] += alpha[i * n + j] * (g[i * n + j] - dot);
                     }
                   }
                 });
}

Tensor log_softmax_rows(const Tensor& a) {
  check_defined(a, "log_softmax_rows");
  require(a.cols() > 0, "log_softmax_rows: empty rows");
  const size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (size_t i = 0; i < m; ++i) {
    const double* x = a.values().data() + i * n;
    double mx = x[0];
    for (size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double denom = 0.0;
    for (size_t j = 0; j < n; ++j) denom += std::exp(x[j] - mx);
    const double lse = mx + std::log(denom);
    for (size_t j = 0; j < n; ++j) out[i * n + j] = x[j] - lse;
  }
  std::vector<double> saved = out;
  return make_op(m, n, std::move(out), "log_softmax_rows", {a},
                 [m, n, saved = std::move(saved)](BackCtx& ctx) {
                   if (auto* da = ctx.pgrad(0)) {
                     const auto& g = ctx.g();
                     for (size_t i = 0; i < m; ++i) {
                       double gsum = 0.0;
                       for (size_t j = 0; j < n; ++j) gsum += g[i * n + j];
                       for (size_t j = 0; j < n; ++j)
                         (*da)[i * n + j] += g[i * n + j] - std::exp(saved[i * n + j]) * gsum;
                     }
                   }
                 });
}

Tensor select_cols_per_row(const Tensor& a, const std::vector<size_t>& idx) {
  check_defined(a, "select_cols_per_row");
  const size_t m = a.rows(), n = a.cols();
  require(idx.size() == m, "select_cols_per_row: one index per row required");
  for (size_t j : idx) require(j < n, "select_cols_per_row: column index out of range");
  std::vector<double> out(m);
  for (size_t i = 0; i < m; ++i) out[i] = a.values()[i * n + idx[i]];
  return make_op(m, 1, std::move(out), "select_cols_per_row", {a}, [n, idx](BackCtx& ctx) {
    if (auto* da = ctx.pgrad(0)) {
      const auto& g = ctx.g();
      for (size_t i = 0; i < idx.size(); ++i) (*da)[i * n + idx[i]] += g[i];
    }
  });
}

// ---- backward ----

void backward(const Tensor& root) {
  check_defined(root, "backward");
  require(root.rows() == 1 && root.cols() == 1, "backward: root must be 1x1");
  if (!root.requires_grad()) return;

  // Iterative postorder DFS over parents restricted to grad-requiring
  // impls; reversed postorder puts every consumer before its parents.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  stack.emplace_back(root.impl().get(), 0);
  visited.insert(root.impl().get());
  while (!stack.empty()) {
    auto& [impl, next_parent] = stack.back();
    Node* node = impl->node.get();
    const size_t n_parents = node ? node->parents.size() : 0;
    bool descended = false;
    while (next_parent < n_parents) {
      TensorImpl* p = node->parents[next_parent++].get();
      if (p->requires_grad && visited.insert(p).second) {
        stack.emplace_back(p, 0);
        descended = true;
        break;
      }
    }
    if (!descended && (!node || next_parent >= n_parents)) {
      order.push_back(impl);
      stack.pop_back();
    }
  }

  std::unordered_map<TensorImpl*, std::vector<double>> buffers;
  buffers[root.impl().get()] = {1.0};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* impl = *it;
    if (!impl->node) continue;
    auto found = buffers.find(impl);
    if (found == buffers.end() || found->second.empty()) continue;
    BackCtx ctx;
    ctx.out_grad = &found->second;
    ctx.node = impl->node.get();
    ctx.buffers = &buffers;
    impl->node->fn(ctx);
  }

  // Flush leaf buffers into persistent grads.
  for (TensorImpl* impl : order) {
    if (impl->node || !impl->requires_grad) continue;
    auto found = buffers.find(impl);
    if (found == buffers.end()) continue;
    std::lock_guard<std::mutex> lk(impl->grad_mu);
    if (!impl->grad) impl->grad = std::make_unique<std::vector<double>>(impl->values.size(), 0.0);
    for (size_t i = 0; i < found->second.size(); ++i) (*impl->grad)[i] += found->second[i];
  }
}

double grad_check(const std::function<Tensor()>& f, Tensor x, double eps,
                  const std::function<bool(size_t)>& skip) {
  require(x.requires_grad(), "grad_check: x must require grad");
  x.zero_grad();
  Tensor y = f();
  backward(y);
  std::vector<double> analytic(x.size(), 0.0);
  if (const auto* g = x.grad()) analytic = *g;

  auto& xv = x.mut_values();
  double max_rel = 0.0;
  for (size_t i = 0; i < xv.size(); ++i) {
    if (skip && skip(i)) continue;
    const double saved = xv[i];
    xv[i] = saved + eps;
    const double fp = f().value();
    xv[i] = saved - eps;
    const double fm = f().value();
    xv[i] = saved;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::fabs(analytic[i] - numeric) / denom);
  }
  x.zero_grad();
  return max_rel;
}

}  // namespace relgraph
