#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "fg/rng.hpp"
#include "fg/tensor.hpp"

namespace fg {

// Handle into a Tape's node list.
using Var = std::int32_t;

enum class Ew { relu, elu, exp, log, sigmoid };

// Reverse-mode tape. Operations append nodes in topological order; backward()
// walks them in exact reverse order. The tape draws dropout masks from the
// rng it is given; callers snapshot and restore that rng's state to re-run a
// forward pass with identical masks.
class Tape {
 public:
  explicit Tape(Rng& rng) : rng_(&rng) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Rng& rng() { return *rng_; }

  Var leaf(Tensor value);
  const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v)].val; }
  // Gradient buffer; empty if nothing flowed into this node.
  const std::vector<double>& grad(Var v) const {
    return nodes_[static_cast<std::size_t>(v)].grad;
  }

  Var matmul(Var a, Var b);
  Var spmm(const CsrMatrix& s, Var d);  // s is a constant and must outlive the tape
  Var spmm(std::shared_ptr<const CsrMatrix> s, Var d);  // shared ownership
  Var elementwise(Ew kind, Var x);
  Var leaky_relu(Var x, double slope);
  Var softmax_rows(Var x);
  Var layer_norm(Var x, Var gain, Var bias);
  Var add(Var a, Var b);
  Var add_row_bias(Var x, Var b);
  Var scale(Var x, double c);
  Var sum(Var x);  // scalar sum of all entries
  Var dropout(Var x, double p, bool train);
  Var take_rows(Var x, std::vector<std::size_t> idx);

  // Mean over masked vertices of -log softmax(logits)[label].
  Var masked_cross_entropy(Var logits, const std::vector<int>& labels,
                           const std::vector<std::size_t>& mask);
  // Mean sigmoid binary cross-entropy over masked vertices and all classes.
  Var multilabel_bce(Var logits, const Tensor& labels,
                     const std::vector<std::size_t>& mask);

  // One multi-head attention aggregation: h is [V x heads*head_dim], adj the
  // neighborhood structure (self loops included). Attention dropout is applied
  // to the normalized coefficients in train mode.
  Var gat_attention(Var h, const CsrMatrix& adj, Var attn_src, Var attn_dst,
                    std::size_t heads, std::size_t head_dim, double slope,
                    double attn_dropout, bool train);

  // Neighbor-contrastive loss over one batch; a_batch is the dense submatrix
  // of the powered adjacency restricted to the batch, diagonal ignored.
  Var nc_loss(Var z, const Tensor& a_batch, double tau);

  // weight/n * sum_i KL(softmax(ref_i/tau) || softmax(cur_i/tau)); the
  // reference output is a constant.
  Var kl_to_reference(Var cur, const Tensor& ref, double tau, double weight);

  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    std::vector<double> grad;  // allocated on first accumulation
    std::function<void()> back;
  };

  Var push(Tensor val, std::function<void()> back = {});
  std::vector<double>& g(Var v);  // lazily allocated, zero-filled
  const Tensor& v(Var x) const { return nodes_[static_cast<std::size_t>(x)].val; }

  std::vector<Node> nodes_;
  Rng* rng_;
};

}  // namespace fg
