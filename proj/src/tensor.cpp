#include "slad/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace slad {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw NonFiniteError(std::string(op) + ": produced a non-finite value");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// C (m x n) += A (m x k) * B (k x n)
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C (m x k) += G (m x n) * B^T, B is k x n
void gemm_acc_bt(const double* g, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  // Transposing B first keeps the inner loop contiguous (and vectorizable).
  std::vector<double> bt(k * n);
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  }
  gemm_acc(g, bt.data(), c, m, n, k);
}

// C (k x n) += A^T * G, A is m x k, G is m x n
void gemm_acc_at(const double* a, const double* g, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * gi[j];
    }
  }
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape_));
  }
  if (product(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) + " values");
  }
}

Tensor::Tensor(Shape shape, double fill) : Tensor(shape, std::vector<double>(product(shape), fill)) {}

std::size_t Tensor::rows() const {
  if (shape_.size() == 2) return shape_[0];
  if (shape_.size() == 1) return 1;
  throw ShapeError("expected a matrix, got " + shape_str(shape_));
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  throw ShapeError("expected a matrix, got " + shape_str(shape_));
}

double Tensor::item() const {
  if (!is_scalar()) throw ShapeError("item() on non-scalar tensor " + shape_str(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor operator*(double s, const Tensor& a) {
  Tensor out = a;
  for (auto& v : out.values()) v *= s;
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor scale_rows(const Tensor& a, std::span<const double> coef) {
  if (coef.size() != a.rows()) {
    throw ShapeError("scale_rows: " + std::to_string(coef.size()) + " coefficients for shape " + shape_str(a.shape()));
  }
  Tensor out = a;
  const std::size_t n = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] *= coef[r];
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

const Tensor& Var::value() const { return tape->value(*this); }

// ---------------------------------------------------------------------------

void Tape::check_owner(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) throw std::logic_error("variable does not belong to this tape");
}

Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&, std::size_t)> backprop) {
  if (consumed_) throw std::logic_error("tape already consumed by backward()");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::push_unary(Var a, Tensor value, std::function<void(Tape&, std::size_t)> backprop) {
  return push(std::move(value), requires_grad(a), std::move(backprop));
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

Var Tape::constant(Tensor value) {
  check_finite(value, "constant");
  return push(std::move(value), false, nullptr);
}

Var Tape::parameter(const std::string& name, const Tensor& value, bool trainable) {
  if (auto it = params_.find(name); it != params_.end()) return Var{this, it->second};
  check_finite(value, "parameter");
  Var v = push(value, trainable, [](Tape&, std::size_t) {});
  params_.emplace(name, v.id);
  return v;
}

Var Tape::add(Var a, Var b) {
  check_owner(a);
  check_owner(b);
  Tensor out = value(a) + value(b);
  check_finite(out, "add");
  return push(std::move(out), requires_grad(a) || requires_grad(b), [a = a.id, b = b.id](Tape& t, std::size_t self) {
    t.accumulate(a, t.out_grad(self));
    t.accumulate(b, t.out_grad(self));
  });
}

Var Tape::sub(Var a, Var b) {
  check_owner(a);
  check_owner(b);
  Tensor out = value(a) - value(b);
  check_finite(out, "sub");
  return push(std::move(out), requires_grad(a) || requires_grad(b), [a = a.id, b = b.id](Tape& t, std::size_t self) {
    t.accumulate(a, t.out_grad(self));
    t.accumulate(b, -1.0 * t.out_grad(self));
  });
}

Var Tape::mul(Var a, Var b) {
  check_owner(a);
  check_owner(b);
  Tensor out = hadamard(value(a), value(b));
  check_finite(out, "mul");
  return push(std::move(out), requires_grad(a) || requires_grad(b), [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.nodes_[a].requires_grad) t.accumulate(a, hadamard(g, t.nodes_[b].value));
    if (t.nodes_[b].requires_grad) t.accumulate(b, hadamard(g, t.nodes_[a].value));
  });
}

Var Tape::scale(Var a, double s) {
  check_owner(a);
  Tensor out = s * value(a);
  check_finite(out, "scale");
  return push_unary(a, std::move(out), [a = a.id, s](Tape& t, std::size_t self) {
    t.accumulate(a, s * t.out_grad(self));
  });
}

Var Tape::add_scalar(Var a, double s) {
  check_owner(a);
  Tensor out = value(a);
  for (auto& v : out.values()) v += s;
  check_finite(out, "add_scalar");
  return push_unary(a, std::move(out), [a = a.id](Tape& t, std::size_t self) { t.accumulate(a, t.out_grad(self)); });
}

Var Tape::matmul(Var a, Var b) {
  check_owner(a);
  check_owner(b);
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.shape().size() != 2 || bv.shape().size() != 2 || av.cols() != bv.rows()) {
    shape_fail("matmul", av.shape(), bv.shape());
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n}, 0.0);
  gemm_acc(av.values().data(), bv.values().data(), out.values().data(), m, k, n);
  check_finite(out, "matmul");
  return push(std::move(out), requires_grad(a) || requires_grad(b),
              [a = a.id, b = b.id, m, k, n](Tape& t, std::size_t self) {
                const Tensor& g = t.out_grad(self);
                if (t.nodes_[a].requires_grad) {
                  Tensor ga({m, k}, 0.0);
                  gemm_acc_bt(g.values().data(), t.nodes_[b].value.values().data(), ga.values().data(), m, k, n);
                  t.accumulate(a, ga);
                }
                if (t.nodes_[b].requires_grad) {
                  Tensor gb({k, n}, 0.0);
                  gemm_acc_at(t.nodes_[a].value.values().data(), g.values().data(), gb.values().data(), m, k, n);
                  t.accumulate(b, gb);
                }
              });
}

Var Tape::affine(Var x, Var w, Var b) {
  check_owner(x);
  check_owner(w);
  check_owner(b);
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  if (xv.shape().size() != 2 || wv.shape().size() != 2 || xv.cols() != wv.rows()) {
    shape_fail("affine", xv.shape(), wv.shape());
  }
  if (bv.size() != wv.cols() || bv.rows() != 1) shape_fail("affine (bias)", wv.shape(), bv.shape());
  const std::size_t m = xv.rows(), k = xv.cols(), n = wv.cols();
  Tensor out({m, n}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = bv[j];
  }
  gemm_acc(xv.values().data(), wv.values().data(), out.values().data(), m, k, n);
  check_finite(out, "affine");
  const bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
  return push(std::move(out), rg, [x = x.id, w = w.id, b = b.id, m, k, n](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.nodes_[x].requires_grad) {
      Tensor gx({m, k}, 0.0);
      gemm_acc_bt(g.values().data(), t.nodes_[w].value.values().data(), gx.values().data(), m, k, n);
      t.accumulate(x, gx);
    }
    if (t.nodes_[w].requires_grad) {
      Tensor gw({k, n}, 0.0);
      gemm_acc_at(t.nodes_[x].value.values().data(), g.values().data(), gw.values().data(), m, k, n);
      t.accumulate(w, gw);
    }
    if (t.nodes_[b].requires_grad) {
      Tensor gb(t.nodes_[b].value.shape(), 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
      t.accumulate(b, gb);
    }
  });
}

Var Tape::silu(Var a) {
  check_owner(a);
  Tensor out = value(a);
  for (auto& v : out.values()) v = v * sigmoid(v);
  check_finite(out, "silu");
  return push_unary(a, std::move(out), [a = a.id](Tape& t, std::size_t self) {
    const Tensor& x = t.nodes_[a].value;
    Tensor g = t.out_grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = sigmoid(x[i]);
      g[i] *= s * (1.0 + x[i] * (1.0 - s));
    }
    t.accumulate(a, g);
  });
}

Var Tape::sqrt(Var a) {
  check_owner(a);
  Tensor out = value(a);
  for (auto& v : out.values()) {
    if (v < 0.0) throw NonFiniteError("sqrt: negative argument");
    v = std::sqrt(v);
  }
  return push_unary(a, out, [a = a.id, out](Tape& t, std::size_t self) {
    Tensor g = t.out_grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 0.5 / out[i];
    check_finite(g, "sqrt (backward)");
    t.accumulate(a, g);
  });
}

Var Tape::square(Var a) {
  check_owner(a);
  Tensor out = hadamard(value(a), value(a));
  check_finite(out, "square");
  return push_unary(a, std::move(out), [a = a.id](Tape& t, std::size_t self) {
    t.accumulate(a, 2.0 * hadamard(t.out_grad(self), t.nodes_[a].value));
  });
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;
  const std::size_t m = value(parts[0]).rows();
  std::size_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    check_owner(p);
    const Tensor& v = value(p);
    if (v.shape().size() != 2 || v.rows() != m) shape_fail("concat", value(parts[0]).shape(), v.shape());
    ids.push_back(p.id);
    widths.push_back(v.cols());
    total += v.cols();
    rg = rg || requires_grad(p);
  }
  Tensor out({m, total}, 0.0);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = value(parts[p]);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < widths[p]; ++j) out[i * total + offset + j] = v[i * widths[p] + j];
    }
    offset += widths[p];
  }
  return push(std::move(out), rg, [ids, widths, m, total](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    std::size_t off = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (t.nodes_[ids[p]].requires_grad) {
        Tensor gp({m, widths[p]}, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < widths[p]; ++j) gp[i * widths[p] + j] = g[i * total + off + j];
        }
        t.accumulate(ids[p], gp);
      }
      off += widths[p];
    }
  });
}

Var Tape::sum(Var a) {
  check_owner(a);
  const Tensor& av = value(a);
  double s = 0.0;
  for (double v : av.values()) s += v;
  return push_unary(a, Tensor::scalar(s), [a = a.id, shape = av.shape()](Tape& t, std::size_t self) {
    t.accumulate(a, Tensor(shape, t.out_grad(self).item()));
  });
}

Var Tape::mean(Var a) {
  check_owner(a);
  const double n = static_cast<double>(value(a).size());
  return scale(sum(a), 1.0 / n);
}

Var Tape::row_sum(Var a) {
  check_owner(a);
  const Tensor& av = value(a);
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({m, 1}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += av[i * n + j];
    out[i] = s;
  }
  return push_unary(a, std::move(out), [a = a.id, m, n, shape = av.shape()](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor ga(shape, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] = g[i];
    }
    t.accumulate(a, ga);
  });
}

Var Tape::norm_l2(Var a) {
  check_owner(a);
  const Tensor& av = value(a);
  double s = 0.0;
  for (double v : av.values()) s += v * v;
  const double norm = std::sqrt(s);
  return push_unary(a, Tensor::scalar(norm), [a = a.id, norm](Tape& t, std::size_t self) {
    const Tensor& x = t.nodes_[a].value;
    if (norm == 0.0) throw NonFiniteError("norm_l2: gradient undefined at zero");
    t.accumulate(a, (t.out_grad(self).item() / norm) * x);
  });
}

Var Tape::detach(Var a) {
  check_owner(a);
  return push(value(a), false, nullptr);
}

GradMap Tape::backward(Var loss) {
  check_owner(loss);
  if (consumed_) throw std::logic_error("tape already consumed by backward()");
  if (!value(loss).is_scalar()) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(value(loss).shape()));
  }
  consumed_ = true;
  accumulate(loss.id, Tensor(value(loss).shape(), 1.0));
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.has_grad || !n.backprop) continue;
    n.backprop(*this, id);
  }
  GradMap grads;
  for (const auto& [name, id] : params_) {
    const Node& n = nodes_[id];
    grads.emplace(name, n.has_grad ? n.grad : Tensor(n.value.shape(), 0.0));
  }
  return grads;
}

const Tensor& Tape::grad(Var v) const {
  check_owner(v);
  if (!consumed_) throw std::logic_error("grad() requires a completed backward()");
  const Node& n = nodes_[v.id];
  if (!n.has_grad) throw std::logic_error("node received no gradient");
  return n.grad;
}

}  // namespace slad
