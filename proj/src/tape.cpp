#include "fg/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fg/linalg.hpp"

namespace fg {

namespace {
void check_finite(const std::vector<double>& xs, const char* what) {
  for (double x : xs)
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value in ") + what);
}
}  // namespace

Var Tape::push(Tensor val, std::function<void()> back) {
  nodes_.push_back(Node{std::move(val), {}, std::move(back)});
  return static_cast<Var>(nodes_.size() - 1);
}

std::vector<double>& Tape::g(Var x) {
  Node& n = nodes_[static_cast<std::size_t>(x)];
  if (n.grad.empty()) n.grad.assign(n.val.numel(), 0.0);
  return n.grad;
}

Var Tape::leaf(Tensor value) { return push(std::move(value)); }

Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = v(a);
  const Tensor& tb = v(b);
  if (ta.cols() != tb.rows())
    throw ShapeError("matmul: inner dimensions " + std::to_string(ta.cols()) +
                     " vs " + std::to_string(tb.rows()));
  const std::size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
  Tensor out = Tensor::zeros({m, n});
  gemm_nn(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
  Var o = push(std::move(out));
  nodes_.back().back = [this, a, b, o, m, k, n] {
    const std::vector<double>& go = g(o);
    gemm_nt(go.data(), v(b).data.data(), g(a).data(), m, n, k);
    gemm_tn(v(a).data.data(), go.data(), g(b).data(), m, k, n);
  };
  return o;
}

Var Tape::spmm(const CsrMatrix& s, Var d) {
  const Tensor& td = v(d);
  if (s.num_cols != td.rows())
    throw ShapeError("spmm: inner dimensions " + std::to_string(s.num_cols) +
                     " vs " + std::to_string(td.rows()));
  const std::size_t n = td.cols();
  Tensor out = Tensor::zeros({s.num_rows, n});
  spmm_acc(s, td.data.data(), out.data.data(), n);
  Var o = push(std::move(out));
  nodes_.back().back = [this, &s, d, o, n] {
    spmm_t_acc(s, g(o).data(), g(d).data(), n);
  };
  return o;
}

Var Tape::spmm(std::shared_ptr<const CsrMatrix> s, Var d) {
  Var o = spmm(*s, d);
  // keep the matrix alive for the backward pass
  auto inner = std::move(nodes_.back().back);
  nodes_.back().back = [inner = std::move(inner), keep = std::move(s)] { inner(); };
  return o;
}

Var Tape::elementwise(Ew kind, Var x) {
  const Tensor& tx = v(x);
  Tensor out = tx;
  out.grad.reset();
  switch (kind) {
    case Ew::relu:
      for (double& e : out.data) e = e > 0.0 ? e : 0.0;
      break;
    case Ew::elu:
      for (double& e : out.data) e = e > 0.0 ? e : std::expm1(e);
      break;
    case Ew::exp:
      for (double& e : out.data) e = std::exp(e);
      break;
    case Ew::log:
      for (double& e : out.data) e = std::log(e);
      break;
    case Ew::sigmoid:
      for (double& e : out.data)
        e = e >= 0.0 ? 1.0 / (1.0 + std::exp(-e)) : std::exp(e) / (1.0 + std::exp(e));
      break;
  }
  check_finite(out.data, "elementwise");
  Var o = push(std::move(out));
  nodes_.back().back = [this, kind, x, o] {
    const std::vector<double>& go = g(o);
    const std::vector<double>& xv = v(x).data;
    const std::vector<double>& ov = v(o).data;
    std::vector<double>& gx = g(x);
    const std::size_t n = xv.size();
    switch (kind) {
      case Ew::relu:
        for (std::size_t i = 0; i < n; ++i) gx[i] += xv[i] > 0.0 ? go[i] : 0.0;
        break;
      case Ew::elu:
        for (std::size_t i = 0; i < n; ++i)
          gx[i] += go[i] * (xv[i] > 0.0 ? 1.0 : ov[i] + 1.0);
        break;
      case Ew::exp:
        for (std::size_t i = 0; i < n; ++i) gx[i] += go[i] * ov[i];
        break;
      case Ew::log:
        for (std::size_t i = 0; i < n; ++i) gx[i] += go[i] / xv[i];
        break;
      case Ew::sigmoid:
        for (std::size_t i = 0; i < n; ++i) gx[i] += go[i] * ov[i] * (1.0 - ov[i]);
        break;
    }
  };
  return o;
}

Var Tape::leaky_relu(Var x, double slope) {
  const Tensor& tx = v(x);
  Tensor out = tx;
  out.grad.reset();
  for (double& e : out.data) e = e > 0.0 ? e : slope * e;
  Var o = push(std::move(out));
  nodes_.back().back = [this, x, o, slope] {
    const std::vector<double>& go = g(o);
    const std::vector<double>& xv = v(x).data;
    std::vector<double>& gx = g(x);
    for (std::size_t i = 0; i < xv.size(); ++i)
      gx[i] += go[i] * (xv[i] > 0.0 ? 1.0 : slope);
  };
  return o;
}

Var Tape::softmax_rows(Var x) {
  const Tensor& tx = v(x);
  const std::size_t m = tx.rows(), n = tx.cols();
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t r = 0; r < m; ++r) {
    const double* xi = tx.data.data() + r * n;
    double* yi = out.data.data() + r * n;
    double mx = xi[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += (yi[j] = std::exp(xi[j] - mx));
    for (std::size_t j = 0; j < n; ++j) yi[j] /= s;
  }
  Var o = push(std::move(out));
  nodes_.back().back = [this, x, o, m, n] {
    const std::vector<double>& go = g(o);
    const std::vector<double>& ov = v(o).data;
    std::vector<double>& gx = g(x);
    for (std::size_t r = 0; r < m; ++r) {
      const double* gi = go.data() + r * n;
      const double* yi = ov.data() + r * n;
      double inner = 0.0;
      for (std::size_t j = 0; j < n; ++j) inner += gi[j] * yi[j];
      double* gxi = gx.data() + r * n;
      for (std::size_t j = 0; j < n; ++j) gxi[j] += yi[j] * (gi[j] - inner);
    }
  };
  return o;
}

Var Tape::layer_norm(Var x, Var gain, Var bias) {
  constexpr double eps = 1e-5;
  const Tensor& tx = v(x);
  const std::size_t m = tx.rows(), n = tx.cols();
  if (v(gain).numel() != n || v(bias).numel() != n)
    throw ShapeError("layer_norm: gain/bias length must match columns");
  Tensor out = Tensor::zeros({m, n});
  auto xhat = std::make_shared<std::vector<double>>(m * n);
  auto inv = std::make_shared<std::vector<double>>(m);
  const std::vector<double>& gv = v(gain).data;
  const std::vector<double>& bv = v(bias).data;
  for (std::size_t r = 0; r < m; ++r) {
    const double* xi = tx.data.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xi[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<double>(n);
    const double iv = 1.0 / std::sqrt(var + eps);
    (*inv)[r] = iv;
    double* xh = xhat->data() + r * n;
    double* yo = out.data.data() + r * n;
    for (std::size_t j = 0; j < n; ++j) {
      xh[j] = (xi[j] - mu) * iv;
      yo[j] = xh[j] * gv[j] + bv[j];
    }
  }
  Var o = push(std::move(out));
  nodes_.back().back = [this, x, gain, bias, o, m, n, xhat, inv] {
    const std::vector<double>& go = g(o);
    const std::vector<double>& gv = v(gain).data;
    std::vector<double>& gx = g(x);
    std::vector<double>& gg = g(gain);
    std::vector<double>& gb = g(bias);
    for (std::size_t r = 0; r < m; ++r) {
      const double* gi = go.data() + r * n;
      const double* xh = xhat->data() + r * n;
      double mean_dxh = 0.0, mean_dxh_xh = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double dxh = gi[j] * gv[j];
        mean_dxh += dxh;
        mean_dxh_xh += dxh * xh[j];
        gg[j] += gi[j] * xh[j];
        gb[j] += gi[j];
      }
      mean_dxh /= static_cast<double>(n);
      mean_dxh_xh /= static_cast<double>(n);
      double* gxi = gx.data() + r * n;
      const double iv = (*inv)[r];
      for (std::size_t j = 0; j < n; ++j) {
        const double dxh = gi[j] * gv[j];
        gxi[j] += iv * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
      }
    }
  };
  return o;
}

Var Tape::add(Var a, Var b) {
  const Tensor& ta = v(a);
  const Tensor& tb = v(b);
  if (ta.shape != tb.shape) throw ShapeError("add: shape mismatch");
  Tensor out = ta;
  out.grad.reset();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
  Var o = push(std::move(out));
  nodes_.back().back = [this, a, b, o] {
    const std::vector<double>& go = g(o);
    axpy(1.0, go.data(), g(a).data(), go.size());
    axpy(1.0, go.data(), g(b).data(), go.size());
  };
  return o;
}

Var Tape::add_row_bias(Var x, Var b) {
  const Tensor& tx = v(x);
  const std::size_t m = tx.rows(), n = tx.cols();
  if (v(b).numel() != n) throw ShapeError("add_row_bias: bias length mismatch");
  Tensor out = tx;
  out.grad.reset();
  const std::vector<double>& bv = v(b).data;
  for (std::size_t r = 0; r < m; ++r)
    axpy(1.0, bv.data(), out.data.data() + r * n, n);
  Var o = push(std::move(out));
  nodes_.back().back = [this, x, b, o, m, n] {
    const std::vector<double>& go = g(o);
    axpy(1.0, go.data(), g(x).data(), go.size());
    std::vector<double>& gb = g(b);
    for (std::size_t r = 0; r < m; ++r) axpy(1.0, go.data() + r * n, gb.data(), n);
  };
  return o;
}

Var Tape::scale(Var x, double c) {
  Tensor out = v(x);
  out.grad.reset();
  for (double& e : out.data) e *= c;
  Var o = push(std::move(out));
  nodes_.back().back = [this, x, o, c] {
    const std::vector<double>& go = g(o);
    axpy(c, go.data(), g(x).data(), go.size());
  };
  return o;
}

Var Tape::sum(Var x) {
  double s = 0.0;
  for (double e : v(x).data) s += e;
  Var o = push(Tensor({1}, {s}));
  nodes_.back().back = [this, x, o] {
    const double go = g(o)[0];
    std::vector<double>& gx = g(x);
    for (double& e : gx) e += go;
  };
  return o;
}

Var Tape::dropout(Var x, double p, bool train) {
  if (!train || p <= 0.0) return x;  // identity, consumes no randomness
  if (p >= 1.0) throw ConfigError("dropout probability must be < 1");
  const Tensor& tx = v(x);
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(tx.numel());
  Tensor out = tx;
  out.grad.reset();
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double mv = rng_->uniform() < p ? 0.0 : keep_scale;
    (*mask)[i] = mv;
    out.data[i] *= mv;
  }
  Var o = push(std::move(out));
  nodes_.back().back = [this, x, o, mask] {
    const std::vector<double>& go = g(o);
    std::vector<double>& gx = g(x);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * (*mask)[i];
  };
  return o;
}

Var Tape::take_rows(Var x, std::vector<std::size_t> idx) {
  const Tensor& tx = v(x);
  const std::size_t n = tx.cols();
  Tensor out = Tensor::zeros({idx.size(), n});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= tx.rows()) throw ShapeError("take_rows: index out of range");
    std::memcpy(out.data.data() + i * n, tx.data.data() + idx[i] * n,
                n * sizeof(double));
  }
  auto ids = std::make_shared<std::vector<std::size_t>>(std::move(idx));
  Var o = push(std::move(out));
  nodes_.back().back = [this, x, o, ids, n] {
    const std::vector<double>& go = g(o);
    std::vector<double>& gx = g(x);
    for (std::size_t i = 0; i < ids->size(); ++i)
      axpy(1.0, go.data() + i * n, gx.data() + (*ids)[i] * n, n);
  };
  return o;
}

Var Tape::masked_cross_entropy(Var logits, const std::vector<int>& labels,
                               const std::vector<std::size_t>& mask) {
  if (mask.empty()) throw ConfigError("masked_cross_entropy: empty mask");
  const Tensor& tl = v(logits);
  const std::size_t n = tl.cols();
  if (labels.size() != tl.rows())
    throw ShapeError("masked_cross_entropy: labels length mismatch");
  auto probs = std::make_shared<std::vector<double>>(mask.size() * n);
  auto rows = std::make_shared<std::vector<std::size_t>>(mask);
  auto lab = std::make_shared<std::vector<int>>();
  lab->reserve(mask.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const std::size_t r = mask[i];
    if (r >= tl.rows()) throw ShapeError("masked_cross_entropy: mask index out of range");
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= n)
      throw DataError("masked_cross_entropy: label out of range");
    lab->push_back(y);
    const double* xi = tl.data.data() + r * n;
    double mx = xi[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double s = 0.0;
    double* pi = probs->data() + i * n;
    for (std::size_t j = 0; j < n; ++j) s += (pi[j] = std::exp(xi[j] - mx));
    for (std::size_t j = 0; j < n; ++j) pi[j] /= s;
    loss += std::log(s) - (xi[static_cast<std::size_t>(y)] - mx);
  }
  loss /= static_cast<double>(mask.size());
  if (!std::isfinite(loss)) throw NumericError("masked_cross_entropy: non-finite loss");
  Var o = push(Tensor({1}, {loss}));
  nodes_.back().back = [this, logits, o, probs, rows, lab, n] {
    const double go = g(o)[0] / static_cast<double>(rows->size());
    std::vector<double>& gl = g(logits);
    for (std::size_t i = 0; i < rows->size(); ++i) {
      const double* pi = probs->data() + i * n;
      double* gi = gl.data() + (*rows)[i] * n;
      for (std::size_t j = 0; j < n; ++j) gi[j] += go * pi[j];
      gi[static_cast<std::size_t>((*lab)[i])] -= go;
    }
  };
  return o;
}

Var Tape::multilabel_bce(Var logits, const Tensor& labels,
                         const std::vector<std::size_t>& mask) {
  if (mask.empty()) throw ConfigError("multilabel_bce: empty mask");
  const Tensor& tl = v(logits);
  const std::size_t n = tl.cols();
  if (labels.rows() != tl.rows() || labels.cols() != n)
    throw ShapeError("multilabel_bce: label matrix shape mismatch");
  auto rows = std::make_shared<std::vector<std::size_t>>(mask);
  double loss = 0.0;
  for (std::size_t r : mask) {
    const double* xi = tl.data.data() + r * n;
    const double* yi = labels.data.data() + r * n;
    for (std::size_t j = 0; j < n; ++j) {
      // max(x,0) - x*y + log(1 + exp(-|x|))
      loss += std::max(xi[j], 0.0) - xi[j] * yi[j] + std::log1p(std::exp(-std::abs(xi[j])));
    }
  }
  const double denom = static_cast<double>(mask.size()) * static_cast<double>(n);
  loss /= denom;
  if (!std::isfinite(loss)) throw NumericError("multilabel_bce: non-finite loss");
  auto lab = std::make_shared<Tensor>(labels);
  Var o = push(Tensor({1}, {loss}));
  nodes_.back().back = [this, logits, o, rows, lab, n, denom] {
    const double go = g(o)[0] / denom;
    std::vector<double>& gl = g(logits);
    const Tensor& tl2 = v(logits);
    for (std::size_t r : *rows) {
      const double* xi = tl2.data.data() + r * n;
      const double* yi = lab->data.data() + r * n;
      double* gi = gl.data() + r * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double s = xi[j] >= 0.0 ? 1.0 / (1.0 + std::exp(-xi[j]))
                                      : std::exp(xi[j]) / (1.0 + std::exp(xi[j]));
        gi[j] += go * (s - yi[j]);
      }
    }
  };
  return o;
}

Var Tape::gat_attention(Var h, const CsrMatrix& adj, Var attn_src, Var attn_dst,
                        std::size_t heads, std::size_t head_dim, double slope,
                        double attn_dropout, bool train) {
  const Tensor& th = v(h);
  const std::size_t nv = th.rows();
  const std::size_t width = heads * head_dim;
  if (th.cols() != width) throw ShapeError("gat_attention: h width != heads*head_dim");
  if (adj.num_rows != nv || adj.num_cols != nv)
    throw ShapeError("gat_attention: adjacency size mismatch");
  if (v(attn_src).numel() != width || v(attn_dst).numel() != width)
    throw ShapeError("gat_attention: attention vector size mismatch");
  const std::size_t ne = adj.nnz();

  // Saved per edge and head: pre-activation logit, normalized coefficient,
  // and the coefficient actually used (after attention dropout).
  auto u = std::make_shared<std::vector<double>>(ne * heads);
  auto alpha = std::make_shared<std::vector<double>>(ne * heads);
  auto used = std::make_shared<std::vector<double>>(ne * heads);

  const std::vector<double>& hv = th.data;
  const std::vector<double>& asv = v(attn_src).data;
  const std::vector<double>& adv = v(attn_dst).data;

  // Per-vertex scores <a_src, h_i> and <a_dst, h_i> per head.
  std::vector<double> s(nv * heads), d(nv * heads);
  for (std::size_t i = 0; i < nv; ++i) {
    const double* hi = hv.data() + i * width;
    for (std::size_t k = 0; k < heads; ++k) {
      s[i * heads + k] = dot(asv.data() + k * head_dim, hi + k * head_dim, head_dim);
      d[i * heads + k] = dot(adv.data() + k * head_dim, hi + k * head_dim, head_dim);
    }
  }

  const double keep_scale =
      (train && attn_dropout > 0.0) ? 1.0 / (1.0 - attn_dropout) : 1.0;
  Tensor out = Tensor::zeros({nv, width});
  for (std::size_t i = 0; i < nv; ++i) {
    const std::size_t e0 = adj.row_ptr[i], e1 = adj.row_ptr[i + 1];
    if (e0 == e1)
      throw ShapeError("gat_attention: vertex without neighbors (self loops missing)");
    for (std::size_t k = 0; k < heads; ++k) {
      double mx = -1e300;
      for (std::size_t e = e0; e < e1; ++e) {
        const double raw = s[i * heads + k] + d[adj.col_idx[e] * heads + k];
        const double ue = raw > 0.0 ? raw : slope * raw;
        (*u)[e * heads + k] = ue;
        mx = std::max(mx, ue);
      }
      double sum = 0.0;
      for (std::size_t e = e0; e < e1; ++e)
        sum += ((*alpha)[e * heads + k] = std::exp((*u)[e * heads + k] - mx));
      double* orow = out.data.data() + i * width + k * head_dim;
      for (std::size_t e = e0; e < e1; ++e) {
        double a = (*alpha)[e * heads + k] /= sum;
        if (train && attn_dropout > 0.0)
          a = rng_->uniform() < attn_dropout ? 0.0 : a * keep_scale;
        (*used)[e * heads + k] = a;
        if (a != 0.0)
          axpy(a, hv.data() + adj.col_idx[e] * width + k * head_dim, orow, head_dim);
      }
    }
  }

  Var o = push(std::move(out));
  nodes_.back().back = [this, h, attn_src, attn_dst, &adj, o, heads, head_dim,
                        slope, keep_scale, u, alpha, used, nv, width] {
    const std::vector<double>& go = g(o);
    const std::vector<double>& hv2 = v(h).data;
    const std::vector<double>& asv2 = v(attn_src).data;
    const std::vector<double>& adv2 = v(attn_dst).data;
    std::vector<double>& gh = g(h);
    std::vector<double>& gas = g(attn_src);
    std::vector<double>& gad = g(attn_dst);
    std::vector<double> ds(nv * heads, 0.0), dd(nv * heads, 0.0);
    std::vector<double> dused(adj.nnz() * heads);

    for (std::size_t i = 0; i < nv; ++i) {
      const std::size_t e0 = adj.row_ptr[i], e1 = adj.row_ptr[i + 1];
      for (std::size_t k = 0; k < heads; ++k) {
        const double* gi = go.data() + i * width + k * head_dim;
        // grads into used coefficients and into neighbor features
        for (std::size_t e = e0; e < e1; ++e) {
          const std::size_t j = adj.col_idx[e];
          dused[e * heads + k] = dot(gi, hv2.data() + j * width + k * head_dim, head_dim);
          const double a = (*used)[e * heads + k];
          if (a != 0.0) axpy(a, gi, gh.data() + j * width + k * head_dim, head_dim);
        }
        // through dropout (alpha is always > 0, so used == 0 means dropped)
        // then softmax
        double inner = 0.0;
        for (std::size_t e = e0; e < e1; ++e) {
          const double da =
              dused[e * heads + k] * ((*used)[e * heads + k] != 0.0 ? keep_scale : 0.0);
          dused[e * heads + k] = da;  // now d(alpha)
          inner += da * (*alpha)[e * heads + k];
        }
        for (std::size_t e = e0; e < e1; ++e) {
          const double a = (*alpha)[e * heads + k];
          double due = a * (dused[e * heads + k] - inner);
          due *= (*u)[e * heads + k] > 0.0 ? 1.0 : slope;
          ds[i * heads + k] += due;
          dd[adj.col_idx[e] * heads + k] += due;
        }
      }
    }
    for (std::size_t i = 0; i < nv; ++i) {
      const double* hi = hv2.data() + i * width;
      double* ghi = gh.data() + i * width;
      for (std::size_t k = 0; k < heads; ++k) {
        const double dsv = ds[i * heads + k];
        const double ddv = dd[i * heads + k];
        if (dsv != 0.0) {
          axpy(dsv, hi + k * head_dim, gas.data() + k * head_dim, head_dim);
          axpy(dsv, asv2.data() + k * head_dim, ghi + k * head_dim, head_dim);
        }
        if (ddv != 0.0) {
          axpy(ddv, hi + k * head_dim, gad.data() + k * head_dim, head_dim);
          axpy(ddv, adv2.data() + k * head_dim, ghi + k * head_dim, head_dim);
        }
      }
    }
  };
  return o;
}

Var Tape::nc_loss(Var z, const Tensor& a_batch, double tau) {
  const Tensor& tz = v(z);
  const std::size_t nb = tz.rows(), dim = tz.cols();
  if (a_batch.rows() != nb || a_batch.cols() != nb)
    throw ShapeError("nc_loss: batch adjacency must be square over the batch");
  if (nb < 2) return push(Tensor({1}, {0.0}), {});  // no pairs

  auto zn = std::make_shared<std::vector<double>>(tz.data);  // row-normalized
  auto norms = std::make_shared<std::vector<double>>(nb);
  for (std::size_t i = 0; i < nb; ++i) {
    double* zi = zn->data() + i * dim;
    const double nrm = std::max(nrm2(zi, dim), 1e-12);
    (*norms)[i] = nrm;
    for (std::size_t j = 0; j < dim; ++j) zi[j] /= nrm;
  }

  // S = exp(tau * cos), diagonal forced to zero so it drops out of all sums.
  // The cosine matrix is symmetric: compute the upper triangle and mirror.
  auto smat = std::make_shared<std::vector<double>>(nb * nb, 0.0);
  for (std::size_t i = 0; i < nb; ++i) {
    const double* zi = zn->data() + i * dim;
    double* si = smat->data() + i * nb;
    for (std::size_t j = i + 1; j < nb; ++j) {
      const double e = std::exp(tau * dot(zi, zn->data() + j * dim, dim));
      si[j] = e;
      (*smat)[j * nb + i] = e;
    }
  }

  auto num = std::make_shared<std::vector<double>>(nb, 0.0);
  auto den = std::make_shared<std::vector<double>>(nb, 0.0);
  std::size_t counted = 0;
  double loss = 0.0;
  for (std::size_t i = 0; i < nb; ++i) {
    const double* si = smat->data() + i * nb;
    const double* ai = a_batch.data.data() + i * nb;
    double nu = 0.0, de = 0.0;
    for (std::size_t j = 0; j < nb; ++j) {
      de += si[j];
      nu += ai[j] * si[j];
    }
    (*num)[i] = nu;
    (*den)[i] = de;
    if (nu > 0.0) {
      loss += -std::log(nu / de);
      ++counted;
    }
  }
  if (counted == 0) return push(Tensor({1}, {0.0}), {});
  loss /= static_cast<double>(counted);
  if (!std::isfinite(loss)) throw NumericError("nc_loss: non-finite loss");

  auto abatch = std::make_shared<Tensor>(a_batch);
  Var o = push(Tensor({1}, {loss}));
  nodes_.back().back = [this, z, o, zn, norms, smat, num, den, abatch, counted,
                        tau, nb, dim] {
    const double w = g(o)[0] / static_cast<double>(counted);
    // coefficient on cos_ij, folded with dS/dcos = tau * S_ij
    std::vector<double> coeff(nb * nb, 0.0);
    for (std::size_t i = 0; i < nb; ++i) {
      if ((*num)[i] <= 0.0) continue;
      const double* si = smat->data() + i * nb;
      const double* ai = abatch->data.data() + i * nb;
      double* ci = coeff.data() + i * nb;
      const double inv_num = 1.0 / (*num)[i];
      const double inv_den = 1.0 / (*den)[i];
      for (std::size_t j = 0; j < nb; ++j)
        ci[j] = w * tau * si[j] * (inv_den - ai[j] * inv_num);
    }
    // symmetrize: dL/dzn = (coeff + coeff^T) * zn
    for (std::size_t i = 0; i < nb; ++i)
      for (std::size_t j = i + 1; j < nb; ++j) {
        const double sum = coeff[i * nb + j] + coeff[j * nb + i];
        coeff[i * nb + j] = sum;
        coeff[j * nb + i] = sum;
      }
    std::vector<double> gzn(nb * dim, 0.0);
    gemm_nn(coeff.data(), zn->data(), gzn.data(), nb, nb, dim);
    // through the row normalization
    std::vector<double>& gz = g(z);
    for (std::size_t i = 0; i < nb; ++i) {
      const double* zi = zn->data() + i * dim;
      const double* gi = gzn.data() + i * dim;
      double proj = dot(gi, zi, dim);
      double* gout = gz.data() + i * dim;
      const double inv = 1.0 / (*norms)[i];
      for (std::size_t j = 0; j < dim; ++j)
        gout[j] += (gi[j] - proj * zi[j]) * inv;
    }
  };
  return o;
}

Var Tape::kl_to_reference(Var cur, const Tensor& ref, double tau, double weight) {
  const Tensor& tc = v(cur);
  const std::size_t m = tc.rows(), n = tc.cols();
  if (ref.rows() != m || ref.cols() != n)
    throw ShapeError("kl_to_reference: reference shape mismatch");
  if (m == 0) return push(Tensor({1}, {0.0}), {});

  auto p = std::make_shared<std::vector<double>>(m * n);
  auto q = std::make_shared<std::vector<double>>(m * n);
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const double* ri = ref.data.data() + r * n;
    const double* ci = tc.data.data() + r * n;
    double mr = ri[0] / tau, mc = ci[0] / tau;
    for (std::size_t j = 1; j < n; ++j) {
      mr = std::max(mr, ri[j] / tau);
      mc = std::max(mc, ci[j] / tau);
    }
    double sr = 0.0, sc = 0.0;
    double* pi = p->data() + r * n;
    double* qi = q->data() + r * n;
    for (std::size_t j = 0; j < n; ++j) {
      sr += (pi[j] = std::exp(ri[j] / tau - mr));
      sc += (qi[j] = std::exp(ci[j] / tau - mc));
    }
    for (std::size_t j = 0; j < n; ++j) {
      pi[j] /= sr;
      qi[j] /= sc;
      if (pi[j] > 0.0) loss += pi[j] * (std::log(pi[j]) - std::log(qi[j]));
    }
  }
  loss *= weight / static_cast<double>(m);
  if (!std::isfinite(loss)) throw NumericError("kl_to_reference: non-finite loss");
  Var o = push(Tensor({1}, {loss}));
  nodes_.back().back = [this, cur, o, p, q, tau, weight, m, n] {
    const double go = g(o)[0] * weight / (static_cast<double>(m) * tau);
    std::vector<double>& gc = g(cur);
    for (std::size_t i = 0; i < m * n; ++i) gc[i] += go * ((*q)[i] - (*p)[i]);
  };
  return o;
}

void Tape::backward(Var loss) {
  Node& last = nodes_[static_cast<std::size_t>(loss)];
  if (last.val.numel() != 1) throw ShapeError("backward: loss must be scalar");
  g(loss)[0] = 1.0;
  for (std::int32_t i = loss; i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (!node.grad.empty() && node.back) node.back();
  }
}

}  // namespace fg
