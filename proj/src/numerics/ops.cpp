#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "seqrec/autodiff.hpp"
#include "seqrec/errors.hpp"

namespace seqrec::numerics {

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 1 && t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " + to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

// out[m x p] += a[m x k] * b[k x p]
void gemm_nn(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
             std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    double* out_row = out + i * p;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = a[i * k + l];
      if (av == 0.0) continue;
      const double* b_row = b + l * p;
      for (std::size_t j = 0; j < p; ++j) out_row[j] += av * b_row[j];
    }
  }
}

// out[m x p] += a[m x k] * b[p x k]^T
void gemm_nt(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
             std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a_row = a + i * k;
    for (std::size_t j = 0; j < p; ++j) {
      const double* b_row = b + j * k;
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += a_row[l] * b_row[l];
      out[i * p + j] += acc;
    }
  }
}

// out[k x p] += a[m x k]^T * b[m x p]
void gemm_tn(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
             std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* b_row = b + i * p;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = a[i * k + l];
      if (av == 0.0) continue;
      double* out_row = out + l * p;
      for (std::size_t j = 0; j < p; ++j) out_row[j] += av * b_row[j];
    }
  }
}

struct AxisLayout {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;

  std::size_t index(std::size_t o, std::size_t i, std::size_t j) const {
    return (o * length + i) * inner + j;
  }
};

AxisLayout axis_layout(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + to_string(shape));
  }
  AxisLayout layout;
  for (std::size_t i = 0; i < axis; ++i) layout.outer *= shape[i];
  layout.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) layout.inner *= shape[i];
  return layout;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluCubic = 0.044715;

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  const std::size_t m = av.rows(), k = av.cols(), p = bv.cols();
  if (bv.rows() != k) {
    throw DimensionError("matmul: inner extents differ for " + to_string(av.shape()) + " and " +
                         to_string(bv.shape()));
  }
  Tensor out(Shape{m, p});
  gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, p);
  const std::array inputs{a, b};
  return a.tape->record(std::move(out), inputs, [a = a.id, b = b.id, m, k, p](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a)) {
      gemm_nt(g.data().data(), t.value(b).data().data(), t.grad_accumulator(a).data().data(), m, p, k);
    }
    if (t.requires_grad(b)) {
      gemm_tn(t.value(a).data().data(), g.data().data(), t.grad_accumulator(b).data().data(), m, k, p);
    }
  });
}

Var matmul_transposed(Var a, Var b) {
  const Tensor& bv = b.value();
  require_matrix(bv, "matmul_transposed");
  return matmul_transposed_rows(a, b, 0, bv.rows());
}

Var matmul_transposed_rows(Var a, Var b, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul_transposed");
  require_matrix(bv, "matmul_transposed");
  const std::size_t m = av.rows(), k = av.cols();
  if (bv.cols() != k) {
    throw DimensionError("matmul_transposed: inner extents differ for " + to_string(av.shape()) +
                         " and " + to_string(bv.shape()) + "^T");
  }
  if (count == 0 || begin + count > bv.rows()) {
    throw DimensionError("matmul_transposed: row range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + to_string(bv.shape()));
  }
  Tensor out(Shape{m, count});
  const std::size_t offset = begin * k;
  gemm_nt(av.data().data(), bv.data().data() + offset, out.data().data(), m, k, count);
  const std::array inputs{a, b};
  return a.tape->record(std::move(out), inputs,
                        [a = a.id, b = b.id, m, k, count, offset](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a)) {
      gemm_nn(g.data().data(), t.value(b).data().data() + offset,
              t.grad_accumulator(a).data().data(), m, count, k);
    }
    if (t.requires_grad(b)) {
      gemm_tn(g.data().data(), t.value(a).data().data(),
              t.grad_accumulator(b).data().data() + offset, m, count, k);
    }
  });
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "add");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::array inputs{a, b};
  return a.tape->record(std::move(out), inputs, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t id : {a, b}) {
      if (!t.requires_grad(id)) continue;
      Tensor& acc = t.grad_accumulator(id);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) { return add(a, neg(b)); }

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::array inputs{a, b};
  return a.tape->record(std::move(out), inputs, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a)) {
      Tensor& acc = t.grad_accumulator(a);
      const Tensor& other = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * other[i];
    }
    if (t.requires_grad(b)) {
      Tensor& acc = t.grad_accumulator(b);
      const Tensor& other = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * other[i];
    }
  });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (double& v : out.data()) v *= factor;
  const std::array inputs{x};
  return x.tape->record(std::move(out), inputs, [x = x.id, factor](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& acc = t.grad_accumulator(x);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * factor;
  });
}

Var neg(Var x) { return scale(x, -1.0); }

Var add_row_vector(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_matrix(xv, "add_row_vector");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (bv.size() != n) {
    throw DimensionError("add_row_vector: bias " + to_string(bv.shape()) + " does not fit rows of " +
                         to_string(xv.shape()));
  }
  Tensor out = xv;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  const std::array inputs{x, bias};
  return x.tape->record(std::move(out), inputs, [x = x.id, b = bias.id, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(x)) {
      Tensor& acc = t.grad_accumulator(x);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    }
    if (t.requires_grad(b)) {
      Tensor& acc = t.grad_accumulator(b);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) acc[j] += g[i * n + j];
    }
  });
}

Var softmax(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  const AxisLayout lay = axis_layout(xv.shape(), axis, "softmax");
  Tensor out(xv.shape());
  for (std::size_t o = 0; o < lay.outer; ++o) {
    for (std::size_t j = 0; j < lay.inner; ++j) {
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < lay.length; ++i) top = std::max(top, xv[lay.index(o, i, j)]);
      double total = 0.0;
      for (std::size_t i = 0; i < lay.length; ++i) {
        const double e = std::exp(xv[lay.index(o, i, j)] - top);
        out[lay.index(o, i, j)] = e;
        total += e;
      }
      for (std::size_t i = 0; i < lay.length; ++i) out[lay.index(o, i, j)] /= total;
    }
  }
  const std::array inputs{x};
  return x.tape->record(std::move(out), inputs, [x = x.id, lay](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& p = t.value(self);
    Tensor& acc = t.grad_accumulator(x);
    for (std::size_t o = 0; o < lay.outer; ++o) {
      for (std::size_t j = 0; j < lay.inner; ++j) {
        double dot = 0.0;
        for (std::size_t i = 0; i < lay.length; ++i) {
          const std::size_t idx = lay.index(o, i, j);
          dot += g[idx] * p[idx];
        }
        for (std::size_t i = 0; i < lay.length; ++i) {
          const std::size_t idx = lay.index(o, i, j);
          acc[idx] += p[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

Var log_softmax(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  const AxisLayout lay = axis_layout(xv.shape(), axis, "log_softmax");
  Tensor out(xv.shape());
  for (std::size_t o = 0; o < lay.outer; ++o) {
    for (std::size_t j = 0; j < lay.inner; ++j) {
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < lay.length; ++i) top = std::max(top, xv[lay.index(o, i, j)]);
      double total = 0.0;
      for (std::size_t i = 0; i < lay.length; ++i) total += std::exp(xv[lay.index(o, i, j)] - top);
      const double log_norm = top + std::log(total);
      for (std::size_t i = 0; i < lay.length; ++i) {
        out[lay.index(o, i, j)] = xv[lay.index(o, i, j)] - log_norm;
      }
    }
  }
  const std::array inputs{x};
  return x.tape->record(std::move(out), inputs, [x = x.id, lay](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& logp = t.value(self);
    Tensor& acc = t.grad_accumulator(x);
    for (std::size_t o = 0; o < lay.outer; ++o) {
      for (std::size_t j = 0; j < lay.inner; ++j) {
        double total = 0.0;
        for (std::size_t i = 0; i < lay.length; ++i) total += g[lay.index(o, i, j)];
        for (std::size_t i = 0; i < lay.length; ++i) {
          const std::size_t idx = lay.index(o, i, j);
          acc[idx] += g[idx] - std::exp(logp[idx]) * total;
        }
      }
    }
  });
}

Var layer_norm(Var x, Var gain, Var shift, double epsilon) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw DimensionError("layer_norm requires rank >= 1");
  const std::size_t n = xv.shape().back();
  const std::size_t m = xv.size() / n;
  if (gain.value().size() != n || shift.value().size() != n) {
    throw DimensionError("layer_norm: gain/shift must have " + std::to_string(n) + " entries, got " +
                         to_string(gain.value().shape()) + " and " + to_string(shift.value().shape()));
  }
  const Tensor& gv = gain.value();
  const Tensor& sv = shift.value();
  Tensor out(xv.shape());
  // normalised activations and per-row inverse deviations for the backward pass
  Tensor normed(xv.shape());
  std::vector<double> inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = xv.data().data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t j = 0; j < n; ++j) {
      const double z = (row[j] - mu) * inv_std[r];
      normed[r * n + j] = z;
      out[r * n + j] = z * gv[j] + sv[j];
    }
  }
  const std::array inputs{x, gain, shift};
  return x.tape->record(
      std::move(out), inputs,
      [x = x.id, g_id = gain.id, s_id = shift.id, m, n, normed = std::move(normed),
       inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& gv = t.value(g_id);
        if (t.requires_grad(g_id)) {
          Tensor& acc = t.grad_accumulator(g_id);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < n; ++j) acc[j] += g[r * n + j] * normed[r * n + j];
        }
        if (t.requires_grad(s_id)) {
          Tensor& acc = t.grad_accumulator(s_id);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < n; ++j) acc[j] += g[r * n + j];
        }
        if (t.requires_grad(x)) {
          Tensor& acc = t.grad_accumulator(x);
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t r = 0; r < m; ++r) {
            double mean_dz = 0.0, mean_dz_z = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dz = g[r * n + j] * gv[j];
              mean_dz += dz;
              mean_dz_z += dz * normed[r * n + j];
            }
            mean_dz *= inv_n;
            mean_dz_z *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
              const double dz = g[r * n + j] * gv[j];
              acc[r * n + j] += inv_std[r] * (dz - mean_dz - normed[r * n + j] * mean_dz_z);
            }
          }
        }
      });
}

double gelu_value(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluScale * (x + kGeluCubic * x * x * x)));
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = gelu_value(v);
  const std::array inputs{x};
  return x.tape->record(std::move(out), inputs, [x = x.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(x);
    Tensor& acc = t.grad_accumulator(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double th = std::tanh(kGeluScale * (v + kGeluCubic * v * v * v));
      const double d = 0.5 * (1.0 + th) +
                       0.5 * v * (1.0 - th * th) * kGeluScale * (1.0 + 3.0 * kGeluCubic * v * v);
      acc[i] += g[i] * d;
    }
  });
}

Var log_sigmoid(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = v < 0 ? v - std::log1p(std::exp(v)) : -std::log1p(std::exp(-v));
  const std::array inputs{x};
  return x.tape->record(std::move(out), inputs, [x = x.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(x);
    Tensor& acc = t.grad_accumulator(x);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * sigmoid(-xv[i]);
  });
}

Var dropout(Var x, double rate, bool train, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ContractError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!train || rate == 0.0) return x;
  const Tensor& xv = x.value();
  std::bernoulli_distribution keep(1.0 - rate);
  const double factor = 1.0 / (1.0 - rate);
  Tensor mask(xv.shape());
  for (double& v : mask.data()) v = keep(rng) ? factor : 0.0;
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const std::array inputs{x};
  return x.tape->record(std::move(out), inputs, [x = x.id, mask = std::move(mask)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& acc = t.grad_accumulator(x);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * mask[i];
  });
}

Var gather_rows(Var table, std::span<const std::size_t> rows) {
  const Tensor& tv = table.value();
  require_matrix(tv, "gather_rows");
  if (rows.empty()) throw DimensionError("gather_rows: empty row list");
  const std::size_t n = tv.cols();
  Tensor out(Shape{rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= tv.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " outside " +
                           to_string(tv.shape()));
    }
    std::copy_n(tv.data().data() + rows[i] * n, n, out.data().data() + i * n);
  }
  const std::array inputs{table};
  return table.tape->record(std::move(out), inputs,
                            [table = table.id, idx = std::vector<std::size_t>(rows.begin(), rows.end()),
                             n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& acc = t.grad_accumulator(table);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < n; ++j) acc[idx[i] * n + j] += g[i * n + j];
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  require_matrix(xv, "slice_cols");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (count == 0 || begin + count > n) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + to_string(xv.shape()));
  }
  Tensor out(Shape{m, count});
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(xv.data().data() + i * n + begin, count, out.data().data() + i * count);
  const std::array inputs{x};
  return x.tape->record(std::move(out), inputs, [x = x.id, m, n, begin, count](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& acc = t.grad_accumulator(x);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) acc[i * n + begin + j] += g[i * count + j];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts.front().value().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_matrix(p.value(), "concat_cols");
    if (p.value().rows() != m) {
      throw DimensionError("concat_cols: row counts differ (" + to_string(parts.front().shape()) +
                           " vs " + to_string(p.shape()) + ")");
    }
    total += p.value().cols();
  }
  Tensor out(Shape{m, total});
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    const std::size_t c = pv.cols();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(pv.data().data() + i * c, c, out.data().data() + i * total + offset);
    offsets.push_back(offset);
    offset += c;
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id);
  return parts.front().tape->record(
      std::move(out), parts, [ids, offsets, m, total](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.requires_grad(ids[k])) continue;
          Tensor& acc = t.grad_accumulator(ids[k]);
          const std::size_t c = acc.cols();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < c; ++j) acc[i * c + j] += g[i * total + offsets[k] + j];
        }
      });
}

Var pick(Var x, std::span<const std::size_t> column_per_row) {
  const Tensor& xv = x.value();
  require_matrix(xv, "pick");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (column_per_row.size() != m) {
    throw DimensionError("pick: " + std::to_string(column_per_row.size()) + " indices for " +
                         to_string(xv.shape()));
  }
  Tensor out(Shape{m});
  for (std::size_t i = 0; i < m; ++i) {
    if (column_per_row[i] >= n) {
      throw DimensionError("pick: column " + std::to_string(column_per_row[i]) + " outside " +
                           to_string(xv.shape()));
    }
    out[i] = xv[i * n + column_per_row[i]];
  }
  const std::array inputs{x};
  return x.tape->record(std::move(out), inputs,
                        [x = x.id, n, idx = std::vector<std::size_t>(column_per_row.begin(),
                                                                     column_per_row.end())](
                            Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& acc = t.grad_accumulator(x);
    for (std::size_t i = 0; i < idx.size(); ++i) acc[i * n + idx[i]] += g[i];
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  const std::array inputs{x};
  return x.tape->record(Tensor::scalar(total), inputs, [x = x.id](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad_accumulator(x).data()) v += g;
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

}  // namespace seqrec::numerics
