#include "fg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fg {

CsrMatrix CsrMatrix::from_triples(std::size_t rows, std::size_t cols,
                                  std::vector<std::size_t> r,
                                  std::vector<std::size_t> c,
                                  std::vector<double> v) {
  if (r.size() != c.size() || c.size() != v.size())
    throw ShapeError("csr from_triples: length mismatch");
  std::vector<std::size_t> order(r.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return r[x] != r[y] ? r[x] < r[y] : c[x] < c[y];
  });

  CsrMatrix out;
  out.num_rows = rows;
  out.num_cols = cols;
  out.row_ptr.assign(rows + 1, 0);
  out.col_idx.reserve(order.size());
  out.values.reserve(order.size());
  std::size_t prev_row = 0, prev_col = 0;
  bool have_prev = false;
  for (std::size_t k : order) {
    if (r[k] >= rows || c[k] >= cols)
      throw ShapeError("csr from_triples: index out of range");
    if (have_prev && r[k] == prev_row && c[k] == prev_col) {
      out.values.back() += v[k];  // duplicates sum
      continue;
    }
    out.col_idx.push_back(c[k]);
    out.values.push_back(v[k]);
    out.row_ptr[r[k] + 1]++;
    prev_row = r[k];
    prev_col = c[k];
    have_prev = true;
  }
  for (std::size_t q = 1; q <= rows; ++q) out.row_ptr[q] += out.row_ptr[q - 1];
  out.validate();
  return out;
}

CsrMatrix CsrMatrix::from_dense(const Tensor& dense, double drop_below_abs) {
  CsrMatrix out;
  out.num_rows = dense.rows();
  out.num_cols = dense.cols();
  out.row_ptr.assign(out.num_rows + 1, 0);
  for (std::size_t r = 0; r < out.num_rows; ++r) {
    for (std::size_t c = 0; c < out.num_cols; ++c) {
      const double v = dense.at(r, c);
      if (v != 0.0 && std::abs(v) >= drop_below_abs) {
        out.col_idx.push_back(c);
        out.values.push_back(v);
      }
    }
    out.row_ptr[r + 1] = out.col_idx.size();
  }
  return out;
}

CsrMatrix CsrMatrix::identity(std::size_t n) {
  CsrMatrix out;
  out.num_rows = out.num_cols = n;
  out.row_ptr.resize(n + 1);
  out.col_idx.resize(n);
  out.values.assign(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    out.row_ptr[i] = i;
    out.col_idx[i] = i;
  }
  out.row_ptr[n] = n;
  return out;
}

Tensor CsrMatrix::to_dense() const {
  Tensor out = Tensor::zeros({num_rows, num_cols});
  for (std::size_t r = 0; r < num_rows; ++r)
    for (std::size_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e)
      out.at(r, col_idx[e]) = values[e];
  return out;
}

CsrMatrix CsrMatrix::transposed() const {
  CsrMatrix out;
  out.num_rows = num_cols;
  out.num_cols = num_rows;
  out.row_ptr.assign(num_cols + 1, 0);
  for (std::size_t c : col_idx) out.row_ptr[c + 1]++;
  for (std::size_t q = 1; q <= num_cols; ++q) out.row_ptr[q] += out.row_ptr[q - 1];
  out.col_idx.resize(nnz());
  out.values.resize(nnz());
  std::vector<std::size_t> cursor(out.row_ptr.begin(), out.row_ptr.end() - 1);
  for (std::size_t r = 0; r < num_rows; ++r) {
    for (std::size_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e) {
      const std::size_t c = col_idx[e];
      out.col_idx[cursor[c]] = r;
      out.values[cursor[c]] = values[e];
      cursor[c]++;
    }
  }
  return out;
}

CsrMatrix CsrMatrix::take_rows(const std::vector<std::size_t>& which) const {
  CsrMatrix out;
  out.num_rows = which.size();
  out.num_cols = num_cols;
  out.row_ptr.assign(which.size() + 1, 0);
  for (std::size_t i = 0; i < which.size(); ++i) {
    const std::size_t r = which[i];
    if (r >= num_rows) throw ShapeError("csr take_rows: row out of range");
    out.row_ptr[i + 1] = out.row_ptr[i] + (row_ptr[r + 1] - row_ptr[r]);
  }
  out.col_idx.resize(out.row_ptr.back());
  out.values.resize(out.row_ptr.back());
  for (std::size_t i = 0; i < which.size(); ++i) {
    const std::size_t r = which[i];
    std::copy(col_idx.begin() + row_ptr[r], col_idx.begin() + row_ptr[r + 1],
              out.col_idx.begin() + out.row_ptr[i]);
    std::copy(values.begin() + row_ptr[r], values.begin() + row_ptr[r + 1],
              out.values.begin() + out.row_ptr[i]);
  }
  return out;
}

}  // namespace fg
