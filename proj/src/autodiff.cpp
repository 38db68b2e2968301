#include "xlqa/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "xlqa/errors.hpp"

namespace xlqa::ad {

namespace {

thread_local Tape* g_active_tape = nullptr;

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MutMap = Eigen::Map<RowMatrix>;

MutMap as_matrix(std::vector<double>& v, std::size_t r, std::size_t c) {
  return MutMap(v.data(), static_cast<Eigen::Index>(r),
                static_cast<Eigen::Index>(c));
}

std::size_t rows_of(const Shape& s) {
  return s.size() == 2 ? s[0] : 1;
}

std::size_t cols_of(const Shape& s) {
  if (s.empty()) return 1;
  return s.size() == 2 ? s[1] : s[0];
}

void require_rank(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
  if (t.rank() > 2) {
    throw ShapeError(std::string(op) + ": rank > 2 unsupported, got " +
                     shape_str(t.shape()));
  }
}

bool wants_grad(const TensorImpl* impl) { return impl->requires_grad; }

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu_grad(double x) {
  const double inner = kGeluC * (x + kGeluA * x * x * x);
  const double t = std::tanh(inner);
  return 0.5 * (1.0 + t) +
         0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

}  // namespace

std::size_t num_elements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::vector<double>& TensorImpl::grad_buffer() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  return grad;
}

void TensorImpl::accumulate(std::size_t i, double g) {
  grad_buffer()[i] += g;
}

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const auto n = num_elements(shape);
  return from(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape.size() > 2) {
    throw ShapeError("tensor rank > 2 unsupported: " + shape_str(shape));
  }
  if (num_elements(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.impl_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::size() const { return impl_->values.size(); }
std::size_t Tensor::rows() const { return rows_of(impl_->shape); }
std::size_t Tensor::cols() const { return cols_of(impl_->shape); }

std::span<const double> Tensor::values() const { return impl_->values; }

std::span<double> Tensor::mutable_values() {
  if (!impl_->leaf) throw GraphError("mutable_values on a non-leaf tensor");
  return impl_->values;
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  }
  return impl_->values[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return impl_->values[r * cols() + c];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!impl_->leaf) throw GraphError("set_requires_grad on a non-leaf tensor");
  impl_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return impl_->leaf; }

bool Tensor::attached() const {
  return impl_->node >= 0 && impl_->tape != nullptr;
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.size() == impl_->values.size()) return impl_->grad;
  return std::vector<double>(impl_->values.size(), 0.0);
}

void Tensor::zero_grad() { impl_->grad.assign(impl_->values.size(), 0.0); }

// ---- Tape -----------------------------------------------------------------

Tape::~Tape() { clear(); }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

Tape::Scope::~Scope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) {
  g_active_tape = nullptr;
}

NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

std::int64_t Tape::record(Node node) {
  if (consumed_) {
    throw GraphError("recording onto a tape that already ran backward");
  }
  nodes_.push_back(std::move(node));
  return static_cast<std::int64_t>(nodes_.size()) - 1;
}

void Tape::clear() {
  for (auto& node : nodes_) {
    node.output->node = -1;
    node.output->tape = nullptr;
  }
  nodes_.clear();
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) {
    throw GraphError("backward called twice on the same record");
  }
  if (!loss.defined() || loss.size() != 1) {
    throw GraphError("backward requires a scalar loss, got " +
                     (loss.defined() ? shape_str(loss.shape()) : "undefined"));
  }
  TensorImpl* root = loss.impl();
  if (root->tape != this || root->node < 0) {
    throw GraphError("backward on a loss detached from this record");
  }
  root->grad_buffer()[0] += 1.0;
  for (auto i = static_cast<std::int64_t>(root->node); i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (node.output->grad.empty()) continue;
    node.backward(*node.output);
  }
  consumed_ = true;
  clear();
}

Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs,
                   std::function<void(TensorImpl& out)> backward) {
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  Tape* tape = Tape::active();
  if (tape == nullptr) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) {
    return t.impl()->requires_grad;
  });
  if (!any) return out;
  out.impl_->requires_grad = true;
  out.impl_->leaf = false;
  Tape::Node node;
  node.inputs.reserve(inputs.size());
  for (auto& t : inputs) node.inputs.push_back(t.shared_impl());
  node.output = out.shared_impl();
  node.backward = std::move(backward);
  out.impl_->node = tape->record(std::move(node));
  out.impl_->tape = tape;
  return out;
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, "matmul");
  require_rank(b, "matmul");
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions disagree for " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  as_matrix(out, m, n).noalias() =
      as_matrix(a.impl()->values, m, k) * as_matrix(b.impl()->values, k, n);
  auto* ai = a.impl();
  auto* bi = b.impl();
  return make_result({m, n}, std::move(out), {a, b}, [ai, bi, m, k, n](TensorImpl& o) {
    auto dc = as_matrix(o.grad, m, n);
    if (wants_grad(ai)) {
      as_matrix(ai->grad_buffer(), m, k).noalias() +=
          dc * as_matrix(bi->values, k, n).transpose();
    }
    if (wants_grad(bi)) {
      as_matrix(bi->grad_buffer(), k, n).noalias() +=
          as_matrix(ai->values, m, k).transpose() * dc;
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, "matmul_nt");
  require_rank(b, "matmul_nt");
  const auto m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw ShapeError("matmul_nt: inner dimensions disagree for " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     "^T");
  }
  std::vector<double> out(m * n, 0.0);
  as_matrix(out, m, n).noalias() =
      as_matrix(a.impl()->values, m, k) *
      as_matrix(b.impl()->values, n, k).transpose();
  auto* ai = a.impl();
  auto* bi = b.impl();
  return make_result({m, n}, std::move(out), {a, b}, [ai, bi, m, k, n](TensorImpl& o) {
    auto dc = as_matrix(o.grad, m, n);
    if (wants_grad(ai)) {
      as_matrix(ai->grad_buffer(), m, k).noalias() +=
          dc * as_matrix(bi->values, n, k);
    }
    if (wants_grad(bi)) {
      as_matrix(bi->grad_buffer(), n, k).noalias() +=
          dc.transpose() * as_matrix(ai->values, m, k);
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, "transpose");
  const auto m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  as_matrix(out, n, m) = as_matrix(x.impl()->values, m, n).transpose();
  auto* xi = x.impl();
  return make_result({n, m}, std::move(out), {x}, [xi, m, n](TensorImpl& o) {
    if (!wants_grad(xi)) return;
    as_matrix(xi->grad_buffer(), m, n) += as_matrix(o.grad, n, m).transpose();
  });
}

// ---- elementwise ----------------------------------------------------------

double gelu_value(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

Tensor elementwise(ElementwiseOp op, const Tensor& a) {
  require_rank(a, "elementwise");
  const auto& av = a.impl()->values;
  std::vector<double> out(av.size());
  auto* ai = a.impl();
  switch (op) {
    case ElementwiseOp::negate:
      std::transform(av.begin(), av.end(), out.begin(), [](double v) { return -v; });
      return make_result(a.shape(), std::move(out), {a}, [ai](TensorImpl& o) {
        if (!wants_grad(ai)) return;
        auto& g = ai->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
      });
    case ElementwiseOp::log:
      std::transform(av.begin(), av.end(), out.begin(),
                     [](double v) { return std::log(std::max(v, kLogClamp)); });
      return make_result(a.shape(), std::move(out), {a}, [ai](TensorImpl& o) {
        if (!wants_grad(ai)) return;
        auto& g = ai->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double v = ai->values[i];
          if (v > kLogClamp) g[i] += o.grad[i] / v;
        }
      });
    case ElementwiseOp::exp:
      std::transform(av.begin(), av.end(), out.begin(),
                     [](double v) { return std::exp(v); });
      return make_result(a.shape(), std::move(out), {a}, [ai](TensorImpl& o) {
        if (!wants_grad(ai)) return;
        auto& g = ai->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * o.values[i];
      });
    case ElementwiseOp::gelu:
      std::transform(av.begin(), av.end(), out.begin(), gelu_value);
      return make_result(a.shape(), std::move(out), {a}, [ai](TensorImpl& o) {
        if (!wants_grad(ai)) return;
        auto& g = ai->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          g[i] += o.grad[i] * gelu_grad(ai->values[i]);
        }
      });
    default:
      throw ShapeError("elementwise: binary op called with one operand");
  }
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  require_rank(a, "elementwise");
  require_rank(b, "elementwise");
  const std::size_t na = a.size(), nb = b.size();
  Shape shape;
  if (a.shape() == b.shape() || (na == nb && na == 1)) {
    shape = a.shape();
  } else if (nb == 1) {
    shape = a.shape();
  } else if (na == 1) {
    shape = b.shape();
  } else {
    throw ShapeError("elementwise: incompatible shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const std::size_t n = num_elements(shape);
  const std::size_t sa = na == 1 ? 0 : 1;  // stride: 0 broadcasts
  const std::size_t sb = nb == 1 ? 0 : 1;
  const auto& av = a.impl()->values;
  const auto& bv = b.impl()->values;
  std::vector<double> out(n);
  switch (op) {
    case ElementwiseOp::add:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i * sa] + bv[i * sb];
      break;
    case ElementwiseOp::subtract:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i * sa] - bv[i * sb];
      break;
    case ElementwiseOp::multiply:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i * sa] * bv[i * sb];
      break;
    default:
      throw ShapeError("elementwise: unary op called with two operands");
  }
  auto* ai = a.impl();
  auto* bi = b.impl();
  return make_result(std::move(shape), std::move(out), {a, b},
                     [op, ai, bi, n, sa, sb](TensorImpl& o) {
    const double sign_b = op == ElementwiseOp::subtract ? -1.0 : 1.0;
    if (wants_grad(ai)) {
      auto& g = ai->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        const double local = op == ElementwiseOp::multiply ? bi->values[i * sb] : 1.0;
        g[i * sa] += o.grad[i] * local;
      }
    }
    if (wants_grad(bi)) {
      auto& g = bi->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        const double local =
            op == ElementwiseOp::multiply ? ai->values[i * sa] : sign_b;
        g[i * sb] += o.grad[i] * local;
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise(ElementwiseOp::add, a, b);
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise(ElementwiseOp::subtract, a, b);
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise(ElementwiseOp::multiply, a, b);
}
Tensor neg(const Tensor& x) { return elementwise(ElementwiseOp::negate, x); }
Tensor log(const Tensor& x) { return elementwise(ElementwiseOp::log, x); }
Tensor exp(const Tensor& x) { return elementwise(ElementwiseOp::exp, x); }
Tensor gelu(const Tensor& x) { return elementwise(ElementwiseOp::gelu, x); }

Tensor scale(const Tensor& x, double factor) {
  const auto& xv = x.impl()->values;
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * factor;
  auto* xi = x.impl();
  return make_result(x.shape(), std::move(out), {x}, [xi, factor](TensorImpl& o) {
    if (!wants_grad(xi)) return;
    auto& g = xi->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * factor;
  });
}

Tensor add_scalar(const Tensor& x, double offset) {
  const auto& xv = x.impl()->values;
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] + offset;
  auto* xi = x.impl();
  return make_result(x.shape(), std::move(out), {x}, [xi](TensorImpl& o) {
    if (!wants_grad(xi)) return;
    auto& g = xi->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  require_rank(x, "add_row");
  const auto m = x.rows(), n = x.cols();
  if (bias.size() != n) {
    throw ShapeError("add_row: bias " + shape_str(bias.shape()) +
                     " does not match columns of " + shape_str(x.shape()));
  }
  std::vector<double> out(x.impl()->values);
  const auto& bv = bias.impl()->values;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bv[c];
  }
  auto* xi = x.impl();
  auto* bi = bias.impl();
  return make_result(x.shape(), std::move(out), {x, bias}, [xi, bi, m, n](TensorImpl& o) {
    if (wants_grad(xi)) {
      auto& g = xi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (wants_grad(bi)) {
      auto& g = bi->grad_buffer();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) g[c] += o.grad[r * n + c];
      }
    }
  });
}

// ---- reductions -----------------------------------------------------------

Tensor reduce(ReduceKind kind, const Tensor& x, int axis) {
  require_rank(x, "reduce");
  const auto m = x.rows(), n = x.cols();
  const auto& xv = x.impl()->values;
  auto* xi = x.impl();
  if (axis == kAllAxes) {
    const double denom = kind == ReduceKind::mean ? static_cast<double>(xv.size()) : 1.0;
    double total = 0.0;
    for (double v : xv) total += v;
    return make_result({}, {total / denom}, {x}, [xi, denom](TensorImpl& o) {
      if (!wants_grad(xi)) return;
      auto& g = xi->grad_buffer();
      const double up = o.grad[0] / denom;
      for (auto& gi : g) gi += up;
    });
  }
  if (axis == 0) {
    const double denom = kind == ReduceKind::mean ? static_cast<double>(m) : 1.0;
    std::vector<double> out(n, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < n; ++c) out[c] += xv[r * n + c];
    }
    for (auto& v : out) v /= denom;
    return make_result({1, n}, std::move(out), {x}, [xi, m, n, denom](TensorImpl& o) {
      if (!wants_grad(xi)) return;
      auto& g = xi->grad_buffer();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) g[r * n + c] += o.grad[c] / denom;
      }
    });
  }
  if (axis == 1) {
    const double denom = kind == ReduceKind::mean ? static_cast<double>(n) : 1.0;
    std::vector<double> out(m, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < n; ++c) out[r] += xv[r * n + c];
      out[r] /= denom;
    }
    return make_result({m, 1}, std::move(out), {x}, [xi, m, n, denom](TensorImpl& o) {
      if (!wants_grad(xi)) return;
      auto& g = xi->grad_buffer();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) g[r * n + c] += o.grad[r] / denom;
      }
    });
  }
  throw ShapeError("reduce: axis " + std::to_string(axis) + " out of range for " +
                   shape_str(x.shape()));
}

Tensor sum(const Tensor& x) { return reduce(ReduceKind::sum, x); }
Tensor mean(const Tensor& x) { return reduce(ReduceKind::mean, x); }

Tensor masked_mean_rows(const Tensor& x, std::span<const double> mask) {
  require_rank(x, "masked_mean_rows");
  // A rank-1 tensor is a column here: one value per masked position.
  const std::size_t m = x.rank() == 1 ? x.size() : x.rows();
  const std::size_t n = x.rank() == 1 ? 1 : x.cols();
  if (mask.size() != m) {
    throw ShapeError("masked_mean_rows: mask length " + std::to_string(mask.size()) +
                     " vs " + std::to_string(m) + " rows");
  }
  double count = 0.0;
  for (double w : mask) count += w != 0.0 ? 1.0 : 0.0;
  if (count == 0.0) throw ShapeError("masked_mean_rows: empty mask");
  const auto& xv = x.impl()->values;
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    if (mask[r] == 0.0) continue;
    for (std::size_t c = 0; c < n; ++c) out[c] += xv[r * n + c];
  }
  for (auto& v : out) v /= count;
  std::vector<double> keep(mask.begin(), mask.end());
  auto* xi = x.impl();
  return make_result({1, n}, std::move(out), {x},
                     [xi, keep = std::move(keep), m, n, count](TensorImpl& o) {
    if (!wants_grad(xi)) return;
    auto& g = xi->grad_buffer();
    for (std::size_t r = 0; r < m; ++r) {
      if (keep[r] == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) g[r * n + c] += o.grad[c] / count;
    }
  });
}

// ---- structure ------------------------------------------------------------

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, "softmax_rows");
  const auto m = x.rows(), n = x.cols();
  if (n == 0) throw ShapeError("softmax_rows: empty rows");
  const auto& xv = x.impl()->values;
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < m; ++r) {
    const double* in = xv.data() + r * n;
    double* y = out.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      y[c] = std::exp(in[c] - mx);
      z += y[c];
    }
    for (std::size_t c = 0; c < n; ++c) y[c] /= z;
  }
  auto* xi = x.impl();
  return make_result(x.shape(), std::move(out), {x}, [xi, m, n](TensorImpl& o) {
    if (!wants_grad(xi)) return;
    auto& g = xi->grad_buffer();
    for (std::size_t r = 0; r < m; ++r) {
      const double* y = o.values.data() + r * n;
      const double* dy = o.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += dy[c] * y[c];
      for (std::size_t c = 0; c < n; ++c) g[r * n + c] += y[c] * (dy[c] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  require_rank(x, "layer_norm");
  const auto m = x.rows(), n = x.cols();
  if (gain.size() != n || bias.size() != n) {
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                     shape_str(bias.shape()) + " vs input " + shape_str(x.shape()));
  }
  const auto& xv = x.impl()->values;
  const auto& gv = gain.impl()->values;
  const auto& bv = bias.impl()->values;
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* in = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += in[c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (in[c] - mu) * inv_std[r];
      xhat[r * n + c] = h;
      out[r * n + c] = h * gv[c] + bv[c];
    }
  }
  auto* xi = x.impl();
  auto* gi = gain.impl();
  auto* bi = bias.impl();
  return make_result(x.shape(), std::move(out), {x, gain, bias},
                     [xi, gi, bi, m, n, xhat = std::move(xhat),
                      inv_std = std::move(inv_std)](TensorImpl& o) {
    const auto& dy = o.grad;
    if (wants_grad(gi)) {
      auto& g = gi->grad_buffer();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) g[c] += dy[r * n + c] * xhat[r * n + c];
      }
    }
    if (wants_grad(bi)) {
      auto& g = bi->grad_buffer();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) g[c] += dy[r * n + c];
      }
    }
    if (wants_grad(xi)) {
      auto& g = xi->grad_buffer();
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t r = 0; r < m; ++r) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
          const double dh = dy[r * n + c] * gi->values[c];
          mean_dh += dh;
          mean_dh_h += dh * xhat[r * n + c];
        }
        mean_dh *= inv_n;
        mean_dh_h *= inv_n;
        for (std::size_t c = 0; c < n; ++c) {
          const double dh = dy[r * n + c] * gi->values[c];
          g[r * n + c] += inv_std[r] * (dh - mean_dh - xhat[r * n + c] * mean_dh_h);
        }
      }
    }
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank(table, "gather_rows");
  const auto v = table.rows(), d = table.cols();
  const auto& tv = table.impl()->values;
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= v) {
      throw IndexError("gather_rows: id " + std::to_string(ids[i]) +
                       " out of range for table with " + std::to_string(v) + " rows");
    }
    std::copy_n(tv.data() + ids[i] * d, d, out.data() + i * d);
  }
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  auto* ti = table.impl();
  return make_result({ids.size(), d}, std::move(out), {table},
                     [ti, rows = std::move(rows), d](TensorImpl& o) {
    if (!wants_grad(ti)) return;
    auto& g = ti->grad_buffer();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t c = 0; c < d; ++c) g[rows[i] * d + c] += o.grad[i * d + c];
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, "slice_rows");
  const auto m = x.rows(), n = x.cols();
  if (begin > end || end > m) {
    throw IndexError("slice_rows: [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") out of range for " + shape_str(x.shape()));
  }
  const auto& xv = x.impl()->values;
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * n),
                          xv.begin() + static_cast<std::ptrdiff_t>(end * n));
  auto* xi = x.impl();
  return make_result({end - begin, n}, std::move(out), {x}, [xi, begin, n](TensorImpl& o) {
    if (!wants_grad(xi)) return;
    auto& g = xi->grad_buffer();
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[begin * n + i] += o.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, "slice_cols");
  const auto m = x.rows(), n = x.cols();
  if (begin > end || end > n) {
    throw IndexError("slice_cols: [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") out of range for " + shape_str(x.shape()));
  }
  const auto w = end - begin;
  const auto& xv = x.impl()->values;
  std::vector<double> out(m * w);
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(xv.data() + r * n + begin, w, out.data() + r * w);
  }
  auto* xi = x.impl();
  return make_result({m, w}, std::move(out), {x}, [xi, m, n, w, begin](TensorImpl& o) {
    if (!wants_grad(xi)) return;
    auto& g = xi->grad_buffer();
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < w; ++c) g[r * n + begin + c] += o.grad[r * w + c];
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const auto n = parts[0].cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    require_rank(p, "concat_rows");
    if (p.cols() != n) {
      throw ShapeError("concat_rows: column mismatch " + shape_str(parts[0].shape()) +
                       " vs " + shape_str(p.shape()));
    }
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  std::vector<TensorImpl*> impls;
  for (const auto& p : parts) {
    out.insert(out.end(), p.impl()->values.begin(), p.impl()->values.end());
    impls.push_back(p.impl());
  }
  return make_result({m, n}, std::move(out), {parts.begin(), parts.end()},
                     [impls = std::move(impls)](TensorImpl& o) {
    std::size_t offset = 0;
    for (auto* p : impls) {
      const auto len = p->values.size();
      if (wants_grad(p)) {
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < len; ++i) g[i] += o.grad[offset + i];
      }
      offset += len;
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const auto m = parts[0].rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    require_rank(p, "concat_cols");
    if (p.rows() != m) {
      throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0].shape()) +
                       " vs " + shape_str(p.shape()));
    }
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::vector<TensorImpl*> impls;
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto w = p.cols();
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(p.impl()->values.data() + r * w, w, out.data() + r * n + offset);
    }
    impls.push_back(p.impl());
    widths.push_back(w);
    offset += w;
  }
  return make_result({m, n}, std::move(out), {parts.begin(), parts.end()},
                     [impls = std::move(impls), widths = std::move(widths), m,
                      n](TensorImpl& o) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < impls.size(); ++k) {
      const auto w = widths[k];
      if (wants_grad(impls[k])) {
        auto& g = impls[k]->grad_buffer();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < w; ++c) g[r * w + c] += o.grad[r * n + off + c];
        }
      }
      off += w;
    }
  });
}

Tensor element(const Tensor& x, std::size_t index) {
  if (index >= x.size()) {
    throw IndexError("element: index " + std::to_string(index) +
                     " out of range for " + shape_str(x.shape()));
  }
  auto* xi = x.impl();
  return make_result({}, {x.impl()->values[index]}, {x}, [xi, index](TensorImpl& o) {
    if (!wants_grad(xi)) return;
    xi->accumulate(index, o.grad[0]);
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine_similarity: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const auto& av = a.impl()->values;
  const auto& bv = b.impl()->values;
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    dot += av[i] * bv[i];
    na2 += av[i] * av[i];
    nb2 += bv[i] * bv[i];
  }
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  if (na <= 1e-12 || nb <= 1e-12) {
    throw NumericError("cosine_similarity: degenerate (zero-norm) representation");
  }
  const double cosine = dot / (na * nb);
  auto* ai = a.impl();
  auto* bi = b.impl();
  return make_result({}, {cosine}, {a, b}, [ai, bi, na, nb, cosine](TensorImpl& o) {
    const double up = o.grad[0];
    const auto n = ai->values.size();
    if (wants_grad(ai)) {
      auto& g = ai->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        g[i] += up * (bi->values[i] / (na * nb) - cosine * ai->values[i] / (na * na));
      }
    }
    if (wants_grad(bi)) {
      auto& g = bi->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        g[i] += up * (ai->values[i] / (na * nb) - cosine * bi->values[i] / (nb * nb));
      }
    }
  });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64* rng) {
  if (rate <= 0.0 || rng == nullptr) return x;
  if (rate >= 1.0) throw ShapeError("dropout: rate must be < 1");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = unit(*rng) < rate ? 0.0 : keep_scale;
  return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

Tensor detach(const Tensor& x) {
  return Tensor::from(x.shape(), std::vector<double>(x.values().begin(), x.values().end()));
}

}  // namespace xlqa::ad
