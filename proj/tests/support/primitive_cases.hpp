#pragma once

#include <functional>
#include <random>
#include <vector>

#include "seqrec/autodiff.hpp"
#include "seqrec/grad_check.hpp"

namespace seqrec::testing {

inline numerics::Tensor random_normal(numerics::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  numerics::Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (double& v : t.data()) v = n(rng);
  return t;
}

// Contracts an arbitrary output against fixed random weights so every output
// coordinate contributes a distinct gradient.
inline numerics::Var contract(numerics::Tape& tape, numerics::Var out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const numerics::Var w = tape.leaf(random_normal(out.value().shape(), rng));
  return numerics::sum(numerics::mul(out, w));
}

struct PrimitiveCase {
  const char* name;
  numerics::Shape shape;
  std::function<numerics::Var(numerics::Tape&, numerics::Var, std::mt19937_64&)> build;
};

// One entry per differentiable op (and per differentiated argument).
inline std::vector<PrimitiveCase> primitive_cases() {
  using namespace seqrec::numerics;
  return {
      {"matmul", {3, 4}, [](Tape& t, Var x, auto& r) { return matmul(x, t.leaf(random_normal({4, 2}, r))); }},
      {"matmul rhs", {4, 2}, [](Tape& t, Var x, auto& r) { return matmul(t.leaf(random_normal({3, 4}, r)), x); }},
      {"matmul_transposed", {3, 4},
       [](Tape& t, Var x, auto& r) { return matmul_transposed(x, t.leaf(random_normal({5, 4}, r))); }},
      {"matmul_transposed rhs", {5, 4},
       [](Tape& t, Var x, auto& r) { return matmul_transposed(t.leaf(random_normal({3, 4}, r)), x); }},
      {"matmul_transposed_rows", {7, 4},
       [](Tape& t, Var x, auto& r) { return matmul_transposed_rows(t.leaf(random_normal({2, 4}, r)), x, 2, 4); }},
      {"add", {3, 3}, [](Tape& t, Var x, auto& r) { return add(x, t.leaf(random_normal({3, 3}, r))); }},
      {"sub", {3, 3}, [](Tape& t, Var x, auto& r) { return sub(t.leaf(random_normal({3, 3}, r)), x); }},
      {"mul", {3, 3}, [](Tape& t, Var x, auto& r) { return mul(x, t.leaf(random_normal({3, 3}, r))); }},
      {"mul self", {3, 3}, [](Tape&, Var x, auto&) { return mul(x, x); }},
      {"scale", {2, 5}, [](Tape&, Var x, auto&) { return scale(x, -1.7); }},
      {"add_row_vector", {4}, [](Tape& t, Var b, auto& r) { return add_row_vector(t.leaf(random_normal({3, 4}, r)), b); }},
      {"softmax rows", {3, 5}, [](Tape&, Var x, auto&) { return softmax(x, 1); }},
      {"softmax cols", {3, 5}, [](Tape&, Var x, auto&) { return softmax(x, 0); }},
      {"log_softmax", {3, 5}, [](Tape&, Var x, auto&) { return log_softmax(x, 1); }},
      {"layer_norm x", {3, 6},
       [](Tape& t, Var x, auto& r) {
         return layer_norm(x, t.leaf(random_normal({6}, r)), t.leaf(random_normal({6}, r)), kLayerNormEpsilon);
       }},
      {"layer_norm gain", {6},
       [](Tape& t, Var g, auto& r) {
         return layer_norm(t.leaf(random_normal({3, 6}, r)), g, t.leaf(random_normal({6}, r)), kLayerNormEpsilon);
       }},
      {"layer_norm shift", {6},
       [](Tape& t, Var s, auto& r) {
         return layer_norm(t.leaf(random_normal({3, 6}, r)), t.leaf(random_normal({6}, r)), s, kLayerNormEpsilon);
       }},
      {"gelu", {4, 4}, [](Tape&, Var x, auto&) { return gelu(x); }},
      {"log_sigmoid", {4, 4}, [](Tape&, Var x, auto&) { return log_sigmoid(scale(x, 3.0)); }},
      {"dropout", {4, 4},
       [](Tape&, Var x, auto& r) {
         std::mt19937_64 mask_rng(r());
         return dropout(x, 0.3, true, mask_rng);
       }},
      {"gather_rows", {5, 3},
       [](Tape&, Var x, auto&) {
         const std::size_t rows[] = {4, 0, 4, 2};
         return gather_rows(x, rows);
       }},
      {"slice_cols", {3, 6}, [](Tape&, Var x, auto&) { return slice_cols(x, 2, 3); }},
      {"concat_cols", {3, 2},
       [](Tape& t, Var x, auto& r) {
         const Var parts[] = {x, t.leaf(random_normal({3, 3}, r)), x};
         return concat_cols(parts);
       }},
      {"pick", {3, 5},
       [](Tape&, Var x, auto&) {
         const std::size_t cols[] = {4, 0, 2};
         return pick(x, cols);
       }},
      {"mean", {3, 5}, [](Tape&, Var x, auto&) { return mean(x); }},
  };
}

// grad_check error of one case with inputs and weights drawn from `seed`.
inline double primitive_error(const PrimitiveCase& c, std::uint64_t seed) {
  std::mt19937_64 data_rng(1000 + seed);
  const numerics::Tensor x = random_normal(c.shape, data_rng);
  const auto f = [&](numerics::Tape& t, numerics::Var v) {
    std::mt19937_64 rng(seed);
    return contract(t, c.build(t, v, rng), 77 + seed);
  };
  return numerics::grad_check(f, x);
}

}  // namespace seqrec::testing
