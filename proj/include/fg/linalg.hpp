#pragma once

#include <cstddef>

#include "fg/tensor.hpp"

namespace fg {

// Dense kernels accumulate into C (callers zero C when they need assignment).
// All matrices row-major.

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n);

// C[m x k] += A[m x n] * B[k x n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k);

// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n);

// C[m x n] += S[m x k] * D[k x n], S sparse
void spmm_acc(const CsrMatrix& s, const double* d, double* c, std::size_t n);

// C[k x n] += S[m x k]^T * D[m x n], S sparse
void spmm_t_acc(const CsrMatrix& s, const double* d, double* c, std::size_t n);

void axpy(double alpha, const double* x, double* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double nrm2(const double* x, std::size_t n);

}  // namespace fg
