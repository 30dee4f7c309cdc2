#include "attnpool/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "attnpool/kernels.hpp"

namespace attnpool::ad {

const Matrix& Var::value() const {
  if (!tape_) throw std::logic_error("Var: unbound handle");
  return tape_->value(id_);
}

Matrix Var::grad() const {
  if (!tape_) throw std::logic_error("Var: unbound handle");
  return tape_->grad(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(std::shared_ptr<const Matrix> value) {
  Node n;
  n.shared = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = recording_;
  return push(std::move(n));
}

Var Tape::parameter(const Matrix& value) {
  Node n;
  n.external = &value;
  n.requires_grad = recording_;
  return push(std::move(n));
}

const Matrix& Tape::value(std::size_t id) const { return node_value(nodes_.at(id)); }

Matrix Tape::grad(std::size_t id) const {
  const Node& n = nodes_.at(id);
  if (n.has_grad) return n.grad;
  const Matrix& v = node_value(n);
  return Matrix(v.rows(), v.cols());
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(fn));
}

Var Tape::record(Matrix value, std::span<const Var> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (recording_) {
    for (const Var& p : parents) {
      if (p.tape() != this) throw std::invalid_argument("autodiff: operands live on different tapes");
      if (nodes_[p.id()].requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  return push(std::move(n));
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss is not on this tape");
  const Matrix& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1)
    throw std::invalid_argument("backward: loss must be 1x1, got " + lv.shape_string());
  if (backward_done_) throw std::logic_error("backward: already run on this tape; call reset_grads()");
  backward_done_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  accumulate(loss, Matrix::scalar(1.0));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, n.grad, node_value(n));
  }
}

void Tape::reset_grads() {
  for (Node& n : nodes_) {
    n.grad = Matrix();
    n.has_grad = false;
  }
  backward_done_ = false;
}

// ---------------------------------------------------------------------------
// Operations

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("autodiff: unbound operand");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("autodiff: operands live on different tapes");
  return tape_of(a);
}

struct Broadcast {
  std::size_t rows, cols;
};

Broadcast broadcast_shape(const Matrix& a, const Matrix& b, const char* op) {
  auto dim = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw std::invalid_argument(std::string(op) + ": shapes " + a.shape_string() + " and " +
                                b.shape_string() + " do not broadcast");
  };
  return {dim(a.rows(), b.rows()), dim(a.cols(), b.cols())};
}

inline double at_bcast(const Matrix& m, std::size_t r, std::size_t c) {
  return m(m.rows() == 1 ? 0 : r, m.cols() == 1 ? 0 : c);
}

/// Sums a full-shape gradient down to the (possibly broadcast) shape of m.
Matrix reduce_to(const Matrix& g, const Matrix& m) {
  if (g.same_shape(m)) return g;
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c)
      out(m.rows() == 1 ? 0 : r, m.cols() == 1 ? 0 : c) += g(r, c);
  return out;
}

template <typename F>
Matrix broadcast_apply(const Matrix& a, const Matrix& b, Broadcast s, F f) {
  Matrix out(s.rows, s.cols);
  if (a.same_shape(b)) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t c = 0; c < s.cols; ++c) out(r, c) = f(at_bcast(a, r, c), at_bcast(b, r, c));
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  Matrix out = kernels::matmul_nn(a.value(), b.value());
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g, const Matrix&) {
    if (a.requires_grad()) tp.accumulate(a, kernels::matmul_nt(g, b.value()));
    if (b.requires_grad()) tp.accumulate(b, kernels::matmul_tn(a.value(), g));
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Broadcast s = broadcast_shape(a.value(), b.value(), "add");
  Matrix out = broadcast_apply(a.value(), b.value(), s, [](double x, double y) { return x + y; });
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g, const Matrix&) {
    if (a.requires_grad()) tp.accumulate(a, reduce_to(g, a.value()));
    if (b.requires_grad()) tp.accumulate(b, reduce_to(g, b.value()));
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Broadcast s = broadcast_shape(a.value(), b.value(), "sub");
  Matrix out = broadcast_apply(a.value(), b.value(), s, [](double x, double y) { return x - y; });
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g, const Matrix&) {
    if (a.requires_grad()) tp.accumulate(a, reduce_to(g, a.value()));
    if (b.requires_grad()) {
      Matrix gb = reduce_to(g, b.value());
      for (double& x : gb.values()) x = -x;
      tp.accumulate(b, gb);
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Broadcast s = broadcast_shape(a.value(), b.value(), "mul");
  Matrix out = broadcast_apply(a.value(), b.value(), s, [](double x, double y) { return x * y; });
  return t.record(std::move(out), {a, b}, [a, b, s](Tape& tp, const Matrix& g, const Matrix&) {
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (a.requires_grad()) {
      Matrix full = broadcast_apply(g, bv, s, [](double x, double y) { return x * y; });
      tp.accumulate(a, reduce_to(full, av));
    }
    if (b.requires_grad()) {
      Matrix full = broadcast_apply(g, av, s, [](double x, double y) { return x * y; });
      tp.accumulate(b, reduce_to(full, bv));
    }
  });
}

Var scale(Var a, double factor) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (double& x : out.values()) x *= factor;
  return t.record(std::move(out), {a}, [a, factor](Tape& tp, const Matrix& g, const Matrix&) {
    Matrix ga = g;
    for (double& x : ga.values()) x *= factor;
    tp.accumulate(a, ga);
  });
}

Var add_scalar(Var a, double offset) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (double& x : out.values()) x += offset;
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g, const Matrix&) { tp.accumulate(a, g); });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (double& x : out.values()) x = x < 0.0 ? 0.0 : x;  // NaN passes through
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g, const Matrix&) {
    const Matrix& x = a.value();
    Matrix ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = x[i] > 0.0 ? g[i] : 0.0;
    tp.accumulate(a, ga);
  });
}

Var log(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (double& x : out.values()) {
    if (!(x > 0.0)) throw std::domain_error("log: non-positive input " + std::to_string(x) + "; clamp first");
    x = std::log(x);
  }
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g, const Matrix&) {
    const Matrix& x = a.value();
    Matrix ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] / x[i];
    tp.accumulate(a, ga);
  });
}

Var clamp_min(Var a, double floor) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (double& x : out.values()) x = x > floor ? x : floor;
  return t.record(std::move(out), {a}, [a, floor](Tape& tp, const Matrix& g, const Matrix&) {
    const Matrix& x = a.value();
    Matrix ga(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = x[i] > floor ? g[i] : 0.0;
    tp.accumulate(a, ga);
  });
}

namespace {
void require_nonempty(const Matrix& m, const char* op) {
  if (m.empty()) throw std::invalid_argument(std::string(op) + ": empty tensor " + m.shape_string());
}
}  // namespace

Var sum(Var a) {
  Tape& t = tape_of(a);
  require_nonempty(a.value(), "sum");
  double s = 0.0;
  for (double x : a.value().values()) s += x;
  return t.record(Matrix::scalar(s), {a}, [a](Tape& tp, const Matrix& g, const Matrix&) {
    tp.accumulate(a, Matrix(a.rows(), a.cols(), g[0]));
  });
}

Var mean(Var a) {
  Tape& t = tape_of(a);
  require_nonempty(a.value(), "mean");
  double s = 0.0;
  for (double x : a.value().values()) s += x;
  const double n = static_cast<double>(a.value().size());
  return t.record(Matrix::scalar(s / n), {a}, [a, n](Tape& tp, const Matrix& g, const Matrix&) {
    tp.accumulate(a, Matrix(a.rows(), a.cols(), g[0] / n));
  });
}

Var max_over_rows(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  require_nonempty(x, "max_over_rows");
  Matrix out(1, x.cols());
  std::vector<std::size_t> arg(x.cols(), 0);
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double best = x(0, c);
    for (std::size_t r = 1; r < x.rows(); ++r)
      if (x(r, c) > best) {
        best = x(r, c);
        arg[c] = r;
      }
    out(0, c) = best;
  }
  return t.record(std::move(out), {a}, [a, arg = std::move(arg)](Tape& tp, const Matrix& g, const Matrix&) {
    Matrix ga(a.rows(), a.cols());
    for (std::size_t c = 0; c < arg.size(); ++c) ga(arg[c], c) = g(0, c);
    tp.accumulate(a, ga);
  });
}

Var sum_over_rows(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  require_nonempty(x, "sum_over_rows");
  Matrix out(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) += x(r, c);
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g, const Matrix&) {
    Matrix ga(a.rows(), a.cols());
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) = g(0, c);
    tp.accumulate(a, ga);
  });
}

Var softmax_vector(Var v) {
  Tape& t = tape_of(v);
  const Matrix& x = v.value();
  if (x.cols() != 1 || x.rows() == 0)
    throw std::invalid_argument("softmax_vector: expected n×1 with n ≥ 1, got " + x.shape_string());
  const double top = *std::max_element(x.values().begin(), x.values().end());
  Matrix out(x.rows(), 1);
  double z = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    out[i] = std::exp(x[i] - top);
    z += out[i];
  }
  for (double& e : out.values()) e /= z;
  return t.record(std::move(out), {v}, [v](Tape& tp, const Matrix& g, const Matrix& s) {
    double dot = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) dot += g[i] * s[i];
    Matrix gv(s.rows(), 1);
    for (std::size_t i = 0; i < s.size(); ++i) gv[i] = s[i] * (g[i] - dot);
    tp.accumulate(v, gv);
  });
}

Var select_rows(Var a, std::span<const std::size_t> indices) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= x.rows())
      throw std::out_of_range("select_rows: index " + std::to_string(indices[k]) + " out of range for " +
                              x.shape_string());
    if (k > 0 && indices[k] <= indices[k - 1])
      throw std::invalid_argument("select_rows: indices must be strictly ascending (duplicate or unordered at " +
                                  std::to_string(k) + ")");
  }
  Matrix out(indices.size(), x.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    auto src = x.row(indices[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return t.record(std::move(out), {a}, [a, idx = std::move(idx)](Tape& tp, const Matrix& g, const Matrix&) {
    Matrix ga(a.rows(), a.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto src = g.row(k);
      std::copy(src.begin(), src.end(), ga.row(idx[k]).begin());
    }
    tp.accumulate(a, ga);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  Tape& t = tape_of(parts[0]);
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::invalid_argument("autodiff: operands live on different tapes");
    if (p.rows() != rows)
      throw std::invalid_argument("concat_cols: row mismatch " + p.value().shape_string() + " vs " +
                                  std::to_string(rows) + " rows");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, offset + c) = v(r, c);
    offset += v.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [inputs](Tape& tp, const Matrix& g, const Matrix&) {
    std::size_t off = 0;
    for (const Var& p : inputs) {
      const std::size_t w = p.cols();
      if (p.requires_grad()) {
        Matrix gp(g.rows(), w);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) gp(r, c) = g(r, off + c);
        tp.accumulate(p, gp);
      }
      off += w;
    }
  });
}

}  // namespace attnpool::ad
