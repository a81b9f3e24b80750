#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "seqrec/tensor.hpp"

namespace seqrec::numerics {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// tape that produced it is alive and has not been cleared.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

// Leaf gradients produced by Tape::backward, keyed by leaf id.
class Gradients {
 public:
  const Tensor& operator[](Var leaf) const;
  const Tensor& at(std::size_t leaf_id) const;
  bool contains(Var leaf) const { return by_leaf_.contains(leaf.id); }
  std::size_t size() const { return by_leaf_.size(); }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> by_leaf_;
};

// Records primitive applications in creation order. Node ids are a
// topological order by construction, so backward is a single reverse sweep.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  // Leaf that references storage owned by the caller; it must outlive the tape's use.
  Var borrow(const Tensor& value, bool requires_grad = false);

  // Used by primitives. The backward rule is dropped when no input needs a gradient.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return *nodes_[id]->value; }
  bool requires_grad(std::size_t id) const { return nodes_[id]->requires_grad; }

  // Gradient flowing into node `id` during backward (valid inside a BackwardFn).
  const Tensor& grad(std::size_t id) const { return nodes_[id]->grad; }
  // Accumulation buffer for node `id`, zero-initialised on first use.
  Tensor& grad_accumulator(std::size_t id);

  // Reverse sweep from a scalar loss; returns gradients for every leaf created
  // with requires_grad and clears the tape.
  Gradients backward(Var loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* value = nullptr;
    Tensor grad;
    bool requires_grad = false;
    bool is_leaf = false;
    BackwardFn backward;
  };

  Var push(std::unique_ptr<Node> node);

  std::vector<std::unique_ptr<Node>> nodes_;
};

// ---- primitives -----------------------------------------------------------
// All matrix primitives accept rank-1 tensors as single rows where noted.

Var matmul(Var a, Var b);                       // [m x k] * [k x p]
Var matmul_transposed(Var a, Var b);            // [m x k] * [p x k]^T
// a * b[begin:begin+count]^T without materialising the row slice.
Var matmul_transposed_rows(Var a, Var b, std::size_t begin, std::size_t count);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var neg(Var x);
Var add_row_vector(Var x, Var bias);            // [m x n] + [n]

Var softmax(Var x, std::size_t axis);
Var log_softmax(Var x, std::size_t axis);
Var layer_norm(Var x, Var gain, Var shift, double epsilon);  // normalises the last axis
Var gelu(Var x);                                // tanh approximation
Var log_sigmoid(Var x);
Var dropout(Var x, double rate, bool train, std::mt19937_64& rng);

Var gather_rows(Var table, std::span<const std::size_t> rows);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var pick(Var x, std::span<const std::size_t> column_per_row);  // -> [rows]

Var sum(Var x);
Var mean(Var x);

inline constexpr double kLayerNormEpsilon = 1e-12;

double gelu_value(double x);

}  // namespace seqrec::numerics
