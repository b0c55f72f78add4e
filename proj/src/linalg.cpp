#include "fg/linalg.hpp"

#include <cmath>

namespace fg {

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double dot(const double* x, const double* y, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += x[i] * y[i];
    s1 += x[i + 1] * y[i + 1];
    s2 += x[i + 2] * y[i + 2];
    s3 += x[i + 3] * y[i + 3];
  }
  for (; i < n; ++i) s0 += x[i] * y[i];
  return (s0 + s1) + (s2 + s3);
}

double nrm2(const double* x, std::size_t n) {
  return std::sqrt(dot(x, x, n));
}

namespace {

// Register-blocked panel: four rows of A against a full row stripe of B.
// The j loop is unit stride on both B and C, which is what the
// auto-vectorizer wants.
inline void gemm_nn_4rows(const double* a0, const double* a1, const double* a2,
                          const double* a3, const double* b, double* c0,
                          double* c1, double* c2, double* c3, std::size_t k,
                          std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double bv = brow[j];
      c0[j] += v0 * bv;
      c1[j] += v1 * bv;
      c2[j] += v2 * bv;
      c3[j] += v3 * bv;
    }
  }
}

}  // namespace

void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  constexpr std::size_t kc = 256;  // panel of B kept hot in L2
  for (std::size_t p0 = 0; p0 < k; p0 += kc) {
    const std::size_t pk = (p0 + kc < k) ? kc : k - p0;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      gemm_nn_4rows(a + (i + 0) * k + p0, a + (i + 1) * k + p0,
                    a + (i + 2) * k + p0, a + (i + 3) * k + p0, b + p0 * n,
                    c + (i + 0) * n, c + (i + 1) * n, c + (i + 2) * n,
                    c + (i + 3) * n, pk, n);
    }
    for (; i < m; ++i) {
      const double* arow = a + i * k + p0;
      double* crow = c + i * n;
      for (std::size_t p = 0; p < pk; ++p)
        axpy(arow[p], b + (p0 + p) * n, crow, n);
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    std::size_t j = 0;
    for (; j + 2 <= k; j += 2) {
      crow[j] += dot(arow, b + j * n, n);
      crow[j + 1] += dot(arow, b + (j + 1) * n, n);
    }
    for (; j < k; ++j) crow[j] += dot(arow, b + j * n, n);
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  // C rows are revisited for every i; block over i so the touched slab of C
  // stays cached when k*n is large.
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double v = arow[p];
      if (v != 0.0) axpy(v, brow, c + p * n, n);
    }
  }
}

void spmm_acc(const CsrMatrix& s, const double* d, double* c, std::size_t n) {
  for (std::size_t r = 0; r < s.num_rows; ++r) {
    double* crow = c + r * n;
    for (std::size_t e = s.row_ptr[r]; e < s.row_ptr[r + 1]; ++e)
      axpy(s.values[e], d + s.col_idx[e] * n, crow, n);
  }
}

void spmm_t_acc(const CsrMatrix& s, const double* d, double* c, std::size_t n) {
  for (std::size_t r = 0; r < s.num_rows; ++r) {
    const double* drow = d + r * n;
    for (std::size_t e = s.row_ptr[r]; e < s.row_ptr[r + 1]; ++e)
      axpy(s.values[e], drow, c + s.col_idx[e] * n, n);
  }
}

}  // namespace fg
