#pragma once

// Independent reference computations. None of these call into the library's
// numerics; they are written with plain loops so a bug in the library cannot
// leak into the expected values.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

namespace seqrec::oracle {

// Row-major triple loop.
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t m, std::size_t k, std::size_t p) {
  std::vector<double> out(m * p, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t l = 0; l < k; ++l) out[i * p + j] += a[i * k + l] * b[l * p + j];
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& x) {
  const double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += out[i] = std::exp(x[i] - mx);
  for (double& v : out) v /= z;
  return out;
}

// Rank of element 0 after sorting all scores in descending order, where the
// ground truth is placed after every score equal to it.
inline std::size_t sorted_rank(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    // ground truth sorts last within a tie group
    return a != 0 && b == 0;
  });
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), 0) - order.begin()) + 1;
}

struct Metrics {
  double hr = 0.0, ndcg = 0.0, mrr = 0.0;
};

inline Metrics metrics_from_sorted(const std::vector<double>& scores, std::size_t k) {
  const std::size_t rank = sorted_rank(scores);
  Metrics m;
  m.mrr = 1.0 / static_cast<double>(rank);
  if (rank <= k) {
    m.hr = 1.0;
    m.ndcg = std::log(2.0) / std::log(static_cast<double>(rank) + 1.0);
  }
  return m;
}

// Learnable scalars of the encoder, counted field by field.
struct ParameterShape {
  std::size_t items, d, max_len, layers, ffn_multiplier;
};

inline std::size_t enumerate_parameters(const ParameterShape& s) {
  const std::size_t d = s.d, f = s.ffn_multiplier * s.d;
  std::size_t total = 0;
  total += (s.items + 3) * d;  // item table incl. PAD, MASK, UID
  total -= d;                  // frozen PAD row
  total += s.max_len * d;      // position table
  for (std::size_t l = 0; l < s.layers; ++l) {
    total += 4 * d * d;        // query, key, value, output
    total += d * f + f * d;    // feed-forward in and out
    total += 4 * d;            // two norm gain/shift pairs
  }
  total += 2 * d;              // final norm
  total += s.items;            // mask-head bias
  return total;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace seqrec::oracle
