#pragma once

// Dense 64-bit tensors with a dynamic, per-step computation record and
// reverse-mode differentiation.
//
// Tensors are rank 0, 1 or 2. Operations record themselves onto the tape that
// is active on the calling thread (see Tape::Scope) whenever at least one
// input requires a gradient; with no active tape they only compute values.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace xlqa::ad {

using Shape = std::vector<std::size_t>;

std::size_t num_elements(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool leaf = true;
  std::int64_t node = -1;
  const Tape* tape = nullptr;

  void accumulate(std::size_t i, double g);
  std::vector<double>& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  // Leaf with requires_grad=true.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  // Rows/cols view a rank-1 tensor [n] as a 1 x n row and a scalar as 1 x 1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  // Only valid on leaves; used by optimizers and initializers.
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;
  // True when the tensor is the output of a node on a live tape.
  bool attached() const;

  // Zero-filled when no gradient has reached this tensor.
  std::vector<double> grad() const;
  void zero_grad();

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& shared_impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;

  friend class Tape;
  friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                            std::function<void(TensorImpl&)>);
};

// Builds an op result and, when recording, appends a node whose backward rule
// receives the output impl (with its populated grad buffer).
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs,
                   std::function<void(TensorImpl& out)> backward);

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  // Makes this tape the active record on the current thread for the scope's
  // lifetime. Scopes nest; the previous tape is restored on exit.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active();

  // Reverse topological accumulation into every tensor that requires a
  // gradient. The record is cleared afterward and may not be replayed.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    std::function<void(TensorImpl&)> backward;
  };

  std::int64_t record(Node node);
  void clear();

  std::vector<Node> nodes_;
  bool consumed_ = false;

  friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                            std::function<void(TensorImpl&)>);
};

// Disables recording on the current thread (evaluation, frozen recomputes).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

// ---- elementwise ----------------------------------------------------------

enum class ElementwiseOp { add, subtract, multiply, negate, log, exp, gelu };

// Binary ops accept equal shapes or a size-1 operand on either side.
Tensor elementwise(ElementwiseOp op, const Tensor& a);
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
// Natural log with the argument clamped below at kLogClamp.
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
// tanh approximation.
Tensor gelu(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
// x[m x n] + bias[1 x n] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& bias);

inline constexpr double kLogClamp = 1e-12;

double gelu_value(double x);

// ---- reductions -----------------------------------------------------------

enum class ReduceKind { sum, mean };

inline constexpr int kAllAxes = -1;

// axis = kAllAxes reduces to a scalar; axis 0 reduces rows (result 1 x n);
// axis 1 reduces columns (result m x 1).
Tensor reduce(ReduceKind kind, const Tensor& x, int axis = kAllAxes);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Mean over rows whose mask entry is nonzero; x is m x n (or a length-m
// vector), result is 1 x n.
Tensor masked_mean_rows(const Tensor& x, std::span<const double> mask);

// ---- structure ------------------------------------------------------------

Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
// Scalar view of one element by flat index.
Tensor element(const Tensor& x, std::size_t index);
// Cosine similarity of two equally sized tensors viewed as flat vectors.
// Throws NumericError when either norm is at most 1e-12.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);
// Inverted dropout; identity when rate == 0 or rng is null.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64* rng);
// Value copy cut off from the record.
Tensor detach(const Tensor& x);

}  // namespace xlqa::ad
