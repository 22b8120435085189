#pragma once

// Reference implementations used as independent oracles. They share no code
// with the library: plain loops over std::vector, long double where the
// comparison is against a closed form.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "kinship/rng.hpp"
#include "kinship/tensor.hpp"

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix to_matrix(const kinship::Tensor& t) {
  const std::size_t rows = t.extent(0), cols = t.extent(1);
  Matrix m(rows, std::vector<double>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m[i][j] = t[i * cols + j];
  }
  return m;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b[0].size(); ++j) {
      long double s = 0.0L;
      for (std::size_t k = 0; k < b.size(); ++k) s += static_cast<long double>(a[i][k]) * b[k][j];
      c[i][j] = static_cast<double>(s);
    }
  }
  return c;
}

/// Textbook multi-head self-attention over a token matrix x [n x C]:
/// per head, softmax(q k^T / sqrt(d)) v on column blocks, then the
/// concatenated heads times W_O plus bias.
inline Matrix multi_head_attention(const Matrix& x, const Matrix& wq, const Matrix& wk, const Matrix& wv,
                                   const Matrix& wo, const std::vector<double>& bo, std::size_t heads) {
  const std::size_t n = x.size(), c = x[0].size(), d = c / heads;
  const Matrix q = matmul(x, wq), k = matmul(x, wk), v = matmul(x, wv);
  Matrix merged(n, std::vector<double>(c, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<long double> score(n);
      long double top = -INFINITY;
      for (std::size_t j = 0; j < n; ++j) {
        long double s = 0.0L;
        for (std::size_t t = 0; t < d; ++t) s += static_cast<long double>(q[i][h * d + t]) * k[j][h * d + t];
        score[j] = s / std::sqrt(static_cast<long double>(d));
        top = std::max(top, score[j]);
      }
      long double z = 0.0L;
      for (auto& s : score) z += (s = std::exp(s - top));
      for (std::size_t t = 0; t < d; ++t) {
        long double acc = 0.0L;
        for (std::size_t j = 0; j < n; ++j) acc += score[j] / z * v[j][h * d + t];
        merged[i][h * d + t] = static_cast<double>(acc);
      }
    }
  }
  Matrix out = matmul(merged, wo);
  for (auto& row : out) {
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bo[j];
  }
  return out;
}

/// Mann-Whitney AUC by counting every (positive, negative) pair.
inline double brute_force_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  long long wins2 = 0, pairs = 0;  // doubled so ties stay integral
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        wins2 += 2;
      } else if (scores[i] == scores[j]) {
        wins2 += 1;
      }
    }
  }
  return static_cast<double>(wins2) / (2.0 * static_cast<double>(pairs));
}

/// Two-pass Pearson correlation in long double.
inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  long double ma = 0.0L, mb = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  long double sab = 0.0L, saa = 0.0L, sbb = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return static_cast<double>(sab / std::sqrt(saa * sbb));
}

inline kinship::Tensor random_tensor(kinship::Rng& rng, kinship::Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(kinship::element_count(shape));
  for (double& x : v) x = lo + (hi - lo) * rng.uniform();
  return kinship::Tensor::from(std::move(shape), std::move(v));
}

inline std::vector<double> values(const kinship::Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace oracle
