#pragma once

// Dense row-major matrices and the handful of kernels the model needs.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace eager {

template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T value = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, T(0));
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

namespace kernels {

template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) s0 += a[k] * b[k];
  return (s0 + s1) + (s2 + s3);
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) y[k] += alpha * x[k];
}

/// C[M x N] += A[M x K] * B[K x N]; A given with leading dimension lda.
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B, T* C) {
  for (std::size_t i = 0; i < M; ++i) {
    T* c = C + i * N;
    const T* a = A + i * lda;
    for (std::size_t k = 0; k < K; ++k) {
      T av = a[k];
      if (av != T(0)) axpy(av, B + k * N, c, N);
    }
  }
}

/// C[M x K] += A[M x N] * B[K x N]^T; C given with leading dimension ldc.
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C, std::size_t ldc) {
  for (std::size_t i = 0; i < M; ++i) {
    const T* a = A + i * N;
    T* c = C + i * ldc;
    for (std::size_t k = 0; k < K; ++k) c[k] += dot(a, B + k * N, N);
  }
}

/// C[K x N] += A[M x K]^T * B[M x N]; A given with leading dimension lda.
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B, T* C) {
  for (std::size_t i = 0; i < M; ++i) {
    const T* a = A + i * lda;
    const T* b = B + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      T av = a[k];
      if (av != T(0)) axpy(av, b, C + k * N, N);
    }
  }
}

template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

/// In-place log-softmax with max subtraction; returns log of the partition.
template <typename T>
T log_softmax(std::span<T> v) {
  T mx = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (T x : v) z += std::exp(static_cast<double>(x - mx));
  T lz = mx + static_cast<T>(std::log(z));
  for (T& x : v) x -= lz;
  return lz;
}

}  // namespace kernels
}  // namespace eager
