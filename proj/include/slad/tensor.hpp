#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace slad {

/// Raised when operand shapes do not fit an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a value becomes NaN or infinite.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles. Most operations treat it as a matrix
/// (rows x cols); a 1-D tensor of length n is a single row.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);
  explicit Tensor(Shape shape, double fill = 0.0);

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool is_scalar() const { return data_.size() == 1; }

  double item() const;
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }
  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols(), cols()); }

  bool all_finite() const;
  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Value-level helpers used by the solver and samplers (no tape involved).
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
Tensor hadamard(const Tensor& a, const Tensor& b);
/// Multiplies row r of `a` by coef[r].
Tensor scale_rows(const Tensor& a, std::span<const double> coef);
double max_abs_diff(const Tensor& a, const Tensor& b);

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

using GradMap = std::map<std::string, Tensor>;

/// Linear record of executed operations. Built fresh for every forward pass;
/// `backward` walks the record in reverse and can run once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Registers a named leaf. Re-registering an existing name returns the
  /// original node. Non-trainable leaves still appear in the gradient map
  /// (always zero).
  Var parameter(const std::string& name, const Tensor& value, bool trainable = true);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var matmul(Var a, Var b);
  /// x W + b with b a single row broadcast over the rows of x W.
  Var affine(Var x, Var w, Var b);
  Var silu(Var a);
  Var sqrt(Var a);
  Var square(Var a);
  /// Column-wise concatenation of matrices with equal row counts.
  Var concat(std::span<const Var> parts);
  Var sum(Var a);
  Var mean(Var a);
  /// Per-row sum, returns rows x 1.
  Var row_sum(Var a);
  /// Frobenius norm.
  Var norm_l2(Var a);
  /// Identity on values, blocks gradient flow.
  Var detach(Var a);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradients of a scalar `loss` w.r.t. every registered parameter.
  GradMap backward(Var loss);

  /// Gradient of `loss` w.r.t. an arbitrary recorded node, after backward.
  const Tensor& grad(Var v) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::function<void(Tape&, std::size_t)> backprop;
  };

  Var push(Tensor value, bool requires_grad, std::function<void(Tape&, std::size_t)> backprop);
  Var push_unary(Var a, Tensor value, std::function<void(Tape&, std::size_t)> backprop);
  void accumulate(std::size_t id, const Tensor& g);
  void check_owner(Var v) const;
  const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> params_;
  bool consumed_ = false;
};

inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
inline Var operator*(double s, Var a) { return a.tape->scale(a, s); }

}  // namespace slad
