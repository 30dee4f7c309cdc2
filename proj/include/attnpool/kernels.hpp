#pragma once

#include "attnpool/matrix.hpp"

namespace attnpool::kernels {

// Dense products used by the tape. Each kernel exists twice: a serial
// reference and an OpenMP version that splits output rows across threads.
// Both accumulate every output element over the inner index in the same
// order, so they agree bit for bit.
//
//   nn: C = A · B      tn: C = Aᵀ · B      nt: C = A · Bᵀ
//
// Zero entries of the left operand are skipped; adjacency and one-hot
// feature matrices are mostly zeros.

namespace serial {
void matmul_nn(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);
}  // namespace serial

namespace parallel {
void matmul_nn(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);
}  // namespace parallel

/// Dispatches to the OpenMP kernel when the product is large enough and we
/// are not already inside a parallel region; otherwise serial.
Matrix matmul_nn(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// Multiply-add count above which the dispatcher goes parallel.
inline constexpr std::size_t kParallelWorkThreshold = std::size_t{1} << 18;

}  // namespace attnpool::kernels
