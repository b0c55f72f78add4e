#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fg {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense row-major float64 tensor. Rank is 1 or 2 everywhere in this library;
// grad is allocated only where the tape needs it.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::optional<std::vector<double>> grad;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel())
      throw ShapeError("tensor data length does not match shape");
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  void ensure_grad() {
    if (!grad) grad.emplace(data.size(), 0.0);
  }
};

// Compressed sparse rows, float64 values. Column indices are strictly
// increasing within each row. Sparse matrices are constants: no gradient
// ever flows into them.
struct CsrMatrix {
  std::size_t num_rows = 0;
  std::size_t num_cols = 0;
  std::vector<std::size_t> row_ptr;  // length num_rows + 1
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  std::size_t nnz() const { return col_idx.size(); }

  void validate() const {
    if (row_ptr.size() != num_rows + 1) throw ShapeError("csr: bad row_ptr length");
    if (row_ptr.front() != 0 || row_ptr.back() != col_idx.size() ||
        col_idx.size() != values.size())
      throw ShapeError("csr: inconsistent buffers");
    for (std::size_t r = 0; r < num_rows; ++r) {
      if (row_ptr[r] > row_ptr[r + 1]) throw ShapeError("csr: row_ptr not non-decreasing");
      for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
        if (col_idx[k] >= num_cols) throw ShapeError("csr: column index out of range");
        if (k > row_ptr[r] && col_idx[k] <= col_idx[k - 1])
          throw ShapeError("csr: columns not strictly increasing within row");
      }
    }
  }

  // Build from (row, col, value) triples; duplicates are summed.
  static CsrMatrix from_triples(std::size_t rows, std::size_t cols,
                                std::vector<std::size_t> r,
                                std::vector<std::size_t> c,
                                std::vector<double> v);

  static CsrMatrix from_dense(const Tensor& dense, double drop_below_abs = 0.0);
  static CsrMatrix identity(std::size_t n);

  Tensor to_dense() const;
  CsrMatrix transposed() const;
  CsrMatrix take_rows(const std::vector<std::size_t>& which) const;
};

}  // namespace fg
