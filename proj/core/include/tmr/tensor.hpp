#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "tmr/errors.hpp"

namespace tmr {

/// Dense 2-D matrix in row-major order with an optional same-shape gradient
/// buffer. The single numeric currency of the pipeline; instantiated for
/// float (training mode) and double (gradient-checking mode).
template <class T>
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;
  bool requires_grad = false;
  std::vector<T> grad;  // empty until ensure_grad(); same length as data afterwards

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}

  static Tensor zeros(std::size_t r, std::size_t c) { return Tensor(r, c, T(0)); }
  static Tensor ones(std::size_t r, std::size_t c) { return Tensor(r, c, T(1)); }

  static Tensor scalar(T v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
  }

  static Tensor from(std::size_t r, std::size_t c, std::initializer_list<T> values) {
    Tensor t(r, c);
    std::size_t i = 0;
    for (T v : values) {
      if (i >= t.data.size()) break;
      t.data[i++] = v;
    }
    return t;
  }

  std::size_t size() const { return rows * cols; }

  T& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  bool is_scalar() const { return rows == 1 && cols == 1; }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }

  void zero_grad() {
    if (!grad.empty()) grad.assign(grad.size(), T(0));
  }

  bool all_finite() const {
    for (T v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }
};

inline std::string shape_str(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <class T>
std::string shape_str(const Tensor<T>& t) {
  return shape_str(t.rows, t.cols);
}

// ---------------------------------------------------------------------------
// Matmul kernels. All accumulate into a pre-shaped C; loop order keeps the
// innermost stride 1 so the compiler can vectorize.
// ---------------------------------------------------------------------------

/// C += A * B, A is r x k, B is k x c, C is r x c.
template <class T>
void matmul_nn_acc(const T* a, const T* b, T* c, std::size_t r, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// C += A * B^T, A is r x k, B is n x k, C is r x n.
template <class T>
void matmul_nt_acc(const T* a, const T* b, T* c, std::size_t r, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

/// C += A^T * B, A is k x r, B is k x n, C is r x n.
template <class T>
void matmul_tn_acc(const T* a, const T* b, T* c, std::size_t k, std::size_t r, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * r;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < r; ++i) {
      T av = arow[i];
      if (av == T(0)) continue;
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace tmr
