#pragma once

// Define-by-run reverse-mode differentiation over dense matrices. A Tape is
// built fresh for every forward pass; Var is a cheap handle to one recorded
// node. Tapes are single-threaded objects; independent tapes may live on
// different threads.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "attnpool/matrix.hpp"

namespace attnpool::ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  /// Gradient after backward(); zeros if the node was not reached.
  Matrix grad() const;
  bool requires_grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn =
      std::function<void(Tape&, const Matrix& out_grad, const Matrix& out_value)>;

  /// With record = false the tape only evaluates (inference mode).
  explicit Tape(bool record = true) : recording_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var constant(std::shared_ptr<const Matrix> value);
  Var variable(Matrix value);
  /// Leaf bound to caller-owned storage, which must outlive the tape.
  Var parameter(const Matrix& value);

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  /// Populates gradients of every requires-grad node reachable from loss.
  /// A second call without reset_grads() is rejected.
  void backward(Var loss);
  void reset_grads();

  const Matrix& value(std::size_t id) const;
  Matrix grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  // Op-implementation interface.
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(Matrix value, std::span<const Var> parents, BackwardFn fn);
  void accumulate(Var v, const Matrix& g);

 private:
  struct Node {
    Matrix value;
    std::shared_ptr<const Matrix> shared;
    const Matrix* external = nullptr;
    Matrix grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
  };
  const Matrix& node_value(const Node& n) const {
    return n.external ? *n.external : (n.shared ? *n.shared : n.value);
  }
  Var push(Node node);

  std::vector<Node> nodes_;
  bool recording_;
  bool backward_done_ = false;
};

// Operations. Binary elementwise ops broadcast an operand whose row or
// column count is 1 against the other operand.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var relu(Var a);
/// Rejects non-positive inputs; clamp first.
Var log(Var a);
Var clamp_min(Var a, double floor);

Var sum(Var a);
Var mean(Var a);
/// Column-wise max; gradient goes to the first (lowest-row) argmax.
Var max_over_rows(Var a);
Var sum_over_rows(Var a);

/// Softmax over an n×1 column, stabilised by subtracting the maximum.
Var softmax_vector(Var v);
/// Gathers rows; indices must be strictly ascending and in range.
Var select_rows(Var a, std::span<const std::size_t> indices);
Var concat_cols(std::span<const Var> parts);

}  // namespace attnpool::ad
