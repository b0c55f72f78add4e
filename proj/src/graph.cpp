#include "fg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fg/linalg.hpp"

namespace fg {

void Graph::validate() const {
  if (features.rows() != num_vertices)
    throw DataError("graph: feature row count does not match vertex count");
  if (adj.num_rows != num_vertices || adj.num_cols != num_vertices)
    throw DataError("graph: adjacency size mismatch");
  if (multilabel) {
    if (label_matrix.rows() != num_vertices || label_matrix.cols() != num_classes)
      throw DataError("graph: label matrix shape mismatch");
  } else {
    if (labels.size() != num_vertices)
      throw DataError("graph: label count does not match vertex count");
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
        throw DataError("graph: label out of range");
  }
  // symmetry
  const CsrMatrix t = adj.transposed();
  if (t.row_ptr != adj.row_ptr || t.col_idx != adj.col_idx)
    throw DataError("graph: adjacency is not symmetric");
}

std::vector<Edge> add_reverse_and_self_edges(const std::vector<Edge>& edges,
                                             std::size_t num_vertices) {
  std::set<Edge> out;
  for (const auto& [s, d] : edges) {
    if (s >= num_vertices || d >= num_vertices)
      throw DataError("edge endpoint out of range: " + std::to_string(s) + "," +
                      std::to_string(d));
    out.emplace(s, d);
    out.emplace(d, s);
  }
  for (std::size_t i = 0; i < num_vertices; ++i) out.emplace(i, i);
  return std::vector<Edge>(out.begin(), out.end());
}

CsrMatrix sym_normalize(const CsrMatrix& adj) {
  if (adj.num_rows != adj.num_cols) throw ShapeError("sym_normalize: matrix not square");
  std::vector<double> deg(adj.num_rows, 0.0);
  for (std::size_t r = 0; r < adj.num_rows; ++r)
    for (std::size_t e = adj.row_ptr[r]; e < adj.row_ptr[r + 1]; ++e)
      deg[r] += adj.values[e];
  std::vector<double> dinv(adj.num_rows);
  for (std::size_t r = 0; r < adj.num_rows; ++r) {
    if (deg[r] <= 0.0)
      throw DataError("sym_normalize: zero-degree vertex " + std::to_string(r) +
                      " (self loops missing)");
    dinv[r] = 1.0 / std::sqrt(deg[r]);
  }
  CsrMatrix out = adj;
  for (std::size_t r = 0; r < adj.num_rows; ++r)
    for (std::size_t e = adj.row_ptr[r]; e < adj.row_ptr[r + 1]; ++e)
      out.values[e] = adj.values[e] * dinv[r] * dinv[adj.col_idx[e]];
  return out;
}

double PowerMatrix::entry(std::size_t i, std::size_t j) const {
  if (dense) return dense->at(i, j);
  const CsrMatrix& s = *sparse;
  for (std::size_t e = s.row_ptr[i]; e < s.row_ptr[i + 1]; ++e)
    if (s.col_idx[e] == j) return s.values[e];
  return 0.0;
}

namespace {

// One sparse-sparse product row at a time with a dense accumulator row.
CsrMatrix spgemm_truncated(const CsrMatrix& a, const CsrMatrix& b, double drop) {
  CsrMatrix out;
  out.num_rows = a.num_rows;
  out.num_cols = b.num_cols;
  out.row_ptr.assign(a.num_rows + 1, 0);
  std::vector<double> acc(b.num_cols, 0.0);
  std::vector<std::size_t> touched;
  for (std::size_t r = 0; r < a.num_rows; ++r) {
    touched.clear();
    for (std::size_t e = a.row_ptr[r]; e < a.row_ptr[r + 1]; ++e) {
      const double av = a.values[e];
      const std::size_t mid = a.col_idx[e];
      for (std::size_t f = b.row_ptr[mid]; f < b.row_ptr[mid + 1]; ++f) {
        const std::size_t c = b.col_idx[f];
        if (acc[c] == 0.0) touched.push_back(c);
        acc[c] += av * b.values[f];
      }
    }
    std::sort(touched.begin(), touched.end());
    for (std::size_t c : touched) {
      if (std::abs(acc[c]) >= drop) {
        out.col_idx.push_back(c);
        out.values.push_back(acc[c]);
      }
      acc[c] = 0.0;
    }
    out.row_ptr[r + 1] = out.col_idx.size();
  }
  return out;
}

}  // namespace

PowerMatrix adj_power(const CsrMatrix& norm, int r, std::size_t dense_threshold,
                      double truncate_below) {
  if (norm.num_rows != norm.num_cols) throw ShapeError("adj_power: matrix not square");
  if (r < 1 || r > 4) throw ConfigError("adj_power: r must be in 1..4");
  PowerMatrix out;
  if (norm.num_rows <= dense_threshold) {
    Tensor cur = norm.to_dense();
    for (int i = 1; i < r; ++i) {
      Tensor next = Tensor::zeros({norm.num_rows, norm.num_cols});
      spmm_acc(norm, cur.data.data(), next.data.data(), norm.num_cols);
      cur = std::move(next);
    }
    out.dense = std::move(cur);
  } else {
    CsrMatrix cur = norm;
    for (int i = 1; i < r; ++i) cur = spgemm_truncated(norm, cur, truncate_below);
    out.sparse = std::move(cur);
  }
  return out;
}

SubgraphResult induced_subgraph(const Graph& g, const std::vector<std::size_t>& keep) {
  if (keep.empty()) throw ConfigError("induced_subgraph: empty vertex set");
  SubgraphResult res;
  res.to_sub.assign(g.num_vertices, SubgraphResult::npos);
  res.to_orig = keep;
  std::sort(res.to_orig.begin(), res.to_orig.end());
  res.to_orig.erase(std::unique(res.to_orig.begin(), res.to_orig.end()),
                    res.to_orig.end());
  for (std::size_t i = 0; i < res.to_orig.size(); ++i) {
    if (res.to_orig[i] >= g.num_vertices)
      throw ConfigError("induced_subgraph: vertex out of range");
    res.to_sub[res.to_orig[i]] = i;
  }

  Graph& sub = res.graph;
  const std::size_t n = res.to_orig.size();
  sub.num_vertices = n;
  sub.num_classes = g.num_classes;
  sub.multilabel = g.multilabel;
  const std::size_t f = g.num_features();
  sub.features = Tensor::zeros({n, f});
  for (std::size_t i = 0; i < n; ++i)
    std::copy(g.features.data.begin() + res.to_orig[i] * f,
              g.features.data.begin() + (res.to_orig[i] + 1) * f,
              sub.features.data.begin() + i * f);
  if (g.multilabel) {
    sub.label_matrix = Tensor::zeros({n, g.num_classes});
    for (std::size_t i = 0; i < n; ++i)
      std::copy(g.label_matrix.data.begin() + res.to_orig[i] * g.num_classes,
                g.label_matrix.data.begin() + (res.to_orig[i] + 1) * g.num_classes,
                sub.label_matrix.data.begin() + i * g.num_classes);
  } else {
    sub.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) sub.labels[i] = g.labels[res.to_orig[i]];
  }

  std::vector<std::size_t> rr, cc;
  std::vector<double> vv;
  for (std::size_t r = 0; r < g.num_vertices; ++r) {
    if (res.to_sub[r] == SubgraphResult::npos) continue;
    for (std::size_t e = g.adj.row_ptr[r]; e < g.adj.row_ptr[r + 1]; ++e) {
      const std::size_t c = g.adj.col_idx[e];
      if (res.to_sub[c] == SubgraphResult::npos) continue;
      rr.push_back(res.to_sub[r]);
      cc.push_back(res.to_sub[c]);
      vv.push_back(g.adj.values[e]);
    }
  }
  sub.adj = CsrMatrix::from_triples(n, n, std::move(rr), std::move(cc), std::move(vv));
  return res;
}

Tensor batch_adjacency(const PowerMatrix& power, const std::vector<std::size_t>& batch) {
  std::set<std::size_t> uniq(batch.begin(), batch.end());
  if (uniq.size() != batch.size())
    throw ConfigError("batch_adjacency: duplicate batch index");
  const std::size_t n = batch.size();
  Tensor out = Tensor::zeros({n, n});
  if (power.dense) {
    const Tensor& d = *power.dense;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) = d.at(batch[i], batch[j]);
  } else {
    const CsrMatrix& s = *power.sparse;
    std::vector<std::size_t> pos(s.num_cols, SubgraphResult::npos);
    for (std::size_t j = 0; j < n; ++j) pos[batch[j]] = j;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = batch[i];
      for (std::size_t e = s.row_ptr[r]; e < s.row_ptr[r + 1]; ++e)
        if (pos[s.col_idx[e]] != SubgraphResult::npos)
          out.at(i, pos[s.col_idx[e]]) = s.values[e];
    }
  }
  return out;
}

NormalizedAdjacency NormalizedAdjacency::build(const Graph& g) {
  NormalizedAdjacency out;
  CsrMatrix with_loops = g.adj;
  // splice self loops into each row
  std::vector<std::size_t> rr, cc;
  std::vector<double> vv;
  rr.reserve(g.adj.nnz() + g.num_vertices);
  for (std::size_t r = 0; r < g.num_vertices; ++r) {
    bool has_self = false;
    for (std::size_t e = g.adj.row_ptr[r]; e < g.adj.row_ptr[r + 1]; ++e) {
      rr.push_back(r);
      cc.push_back(g.adj.col_idx[e]);
      vv.push_back(g.adj.values[e]);
      if (g.adj.col_idx[e] == r) has_self = true;
    }
    if (!has_self) {
      rr.push_back(r);
      cc.push_back(r);
      vv.push_back(1.0);
    }
  }
  with_loops = CsrMatrix::from_triples(g.num_vertices, g.num_vertices,
                                       std::move(rr), std::move(cc), std::move(vv));
  out.base = sym_normalize(with_loops);
  return out;
}

const PowerMatrix& NormalizedAdjacency::power(int r, std::size_t dense_threshold,
                                              double truncate_below) {
  auto it = powers.find(r);
  if (it == powers.end())
    it = powers.emplace(r, adj_power(base, r, dense_threshold, truncate_below)).first;
  return it->second;
}

}  // namespace fg
