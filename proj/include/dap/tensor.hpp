// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace dap {

/// Dense row-major tensor of doubles. The whole workbench runs in one
/// numeric precision; loss and gradient reductions therefore already happen
/// in the widest precision available.
struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<size_t> s) : shape(std::move(s)) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    data.assign(n, 0.0);
  }

  size_t numel() const { return data.size(); }
  size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& operator()(size_t i, size_t j) { return data[i * cols() + j]; }
  double operator()(size_t i, size_t j) const { return data[i * cols() + j]; }

  void fill(double v) {
    for (double& x : data) x = v;
  }
};

// Matrix products over raw pointers. Loop nests keep k strictly ascending in
// every accumulation so results are independent of tiling or call site.

/// C (m x n) += or = A (m x k) * B (k x n)
inline void matmul_nn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n,
                      bool accumulate = false) {
  if (!accumulate) {
    for (size_t i = 0; i < m * n; ++i) c[i] = 0.0;
  }
  for (size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// C (m x n) += or = A (m x k) * B^T where B is (n x k)
inline void matmul_nt(const double* a, const double* b, double* c, size_t m, size_t k, size_t n,
                      bool accumulate = false) {
  for (size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

/// C (k x n) += or = A^T * B where A is (m x k), B is (m x n)
inline void matmul_tn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n,
                      bool accumulate = false) {
  if (!accumulate) {
    for (size_t i = 0; i < k * n; ++i) c[i] = 0.0;
  }
  for (size_t p = 0; p < m; ++p) {
    const double* arow = a + p * k;
    const double* brow = b + p * n;
    for (size_t i = 0; i < k; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace dap
