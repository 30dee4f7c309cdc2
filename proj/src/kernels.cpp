#include "attnpool/kernels.hpp"

#include <stdexcept>

#include "attnpool/parallel.hpp"

namespace attnpool::kernels {

namespace {

void check_nn(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions differ: " + a.shape_string() + " · " +
                                b.shape_string());
}
void check_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw std::invalid_argument("matmul_tn: row counts differ: " + a.shape_string() + "ᵀ · " +
                                b.shape_string());
}
void check_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("matmul_nt: column counts differ: " + a.shape_string() + " · " +
                                b.shape_string() + "ᵀ");
}

// Row kernels shared by both variants; the parallel versions only change
// which thread runs which output row.
inline void nn_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const std::size_t inner = a.cols();
  const std::size_t n = b.cols();
  double* dst = out.data() + i * n;
  for (std::size_t j = 0; j < n; ++j) dst[j] = 0.0;
  const double* arow = a.data() + i * inner;
  for (std::size_t k = 0; k < inner; ++k) {
    const double aik = arow[k];
    if (aik == 0.0) continue;
    const double* brow = b.data() + k * n;
    for (std::size_t j = 0; j < n; ++j) dst[j] += aik * brow[j];
  }
}

inline void tn_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const std::size_t m = a.rows();
  const std::size_t ac = a.cols();
  const std::size_t n = b.cols();
  double* dst = out.data() + i * n;
  for (std::size_t j = 0; j < n; ++j) dst[j] = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double aki = a.data()[k * ac + i];
    if (aki == 0.0) continue;
    const double* brow = b.data() + k * n;
    for (std::size_t j = 0; j < n; ++j) dst[j] += aki * brow[j];
  }
}

// a·bᵀ is computed as a·(bᵀ) with an explicit transpose so the inner loop
// is the same contiguous axpy as nn_row.
Matrix transposed(const Matrix& b) {
  Matrix t(b.cols(), b.rows());
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) t(j, i) = b(i, j);
  return t;
}

void prepare(Matrix& out, std::size_t rows, std::size_t cols) {
  if (out.rows() != rows || out.cols() != cols) out = Matrix(rows, cols);
}

}  // namespace

namespace serial {

void matmul_nn(const Matrix& a, const Matrix& b, Matrix& out) {
  check_nn(a, b);
  prepare(out, a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) nn_row(a, b, out, i);
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  check_tn(a, b);
  prepare(out, a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) tn_row(a, b, out, i);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  check_nt(a, b);
  prepare(out, a.rows(), b.rows());
  const Matrix bt = transposed(b);
  for (std::size_t i = 0; i < a.rows(); ++i) nn_row(a, bt, out, i);
}

}  // namespace serial

namespace parallel {

void matmul_nn(const Matrix& a, const Matrix& b, Matrix& out) {
  check_nn(a, b);
  prepare(out, a.rows(), b.cols());
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (std::ptrdiff_t i = 0; i < rows; ++i) nn_row(a, b, out, static_cast<std::size_t>(i));
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  check_tn(a, b);
  prepare(out, a.cols(), b.cols());
  const auto rows = static_cast<std::ptrdiff_t>(a.cols());
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (std::ptrdiff_t i = 0; i < rows; ++i) tn_row(a, b, out, static_cast<std::size_t>(i));
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  check_nt(a, b);
  prepare(out, a.rows(), b.rows());
  const Matrix bt = transposed(b);
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (std::ptrdiff_t i = 0; i < rows; ++i) nn_row(a, bt, out, static_cast<std::size_t>(i));
}

}  // namespace parallel

namespace {
bool go_parallel(std::size_t work) {
  return work >= kParallelWorkThreshold && max_threads() > 1 && !in_parallel_region();
}
}  // namespace

Matrix matmul_nn(const Matrix& a, const Matrix& b) {
  Matrix out;
  if (go_parallel(a.rows() * a.cols() * b.cols()))
    parallel::matmul_nn(a, b, out);
  else
    serial::matmul_nn(a, b, out);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix out;
  if (go_parallel(a.rows() * a.cols() * b.cols()))
    parallel::matmul_tn(a, b, out);
  else
    serial::matmul_tn(a, b, out);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  Matrix out;
  if (go_parallel(a.rows() * a.cols() * b.rows()))
    parallel::matmul_nt(a, b, out);
  else
    serial::matmul_nt(a, b, out);
  return out;
}

}  // namespace attnpool::kernels
