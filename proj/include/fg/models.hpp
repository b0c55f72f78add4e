#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fg/graph.hpp"
#include "fg/params.hpp"
#include "fg/tape.hpp"

namespace fg {

enum class Arch { gcn, gat, graphmlp };
enum class Norm { id, ln };
enum class Mode { train, eval };

struct ModelConfig {
  Arch arch = Arch::gcn;
  int num_layers = 2;
  int hidden_dim = 128;  // per attention head for gat
  Norm norm = Norm::id;
  bool residual = false;
  double input_dropout = 0.0;
  double model_dropout = 0.0;
  double attn_dropout = 0.0;
  int heads = 8;
  // graph-mlp
  int nc_layer = -2;
  double nc_weight = 1.0;
  double tau = 1.0;
  int r = 2;
  double batch_fraction = 1.0;

  void validate() const;
};

Arch arch_from_string(const std::string& s);
std::string to_string(Arch a);
Norm norm_from_string(const std::string& s);
std::string to_string(Norm n);

// Glorot-uniform weights, zero biases, unit layer-norm gains. The draw order
// is fixed by the parameter ordering, so equal (config, seed) gives equal
// initial parameters.
ParamSet init_params(const ModelConfig& cfg, std::size_t in_features,
                     std::size_t num_classes, Rng& rng);

struct ModelInputs {
  std::shared_ptr<const CsrMatrix> features;  // [n x F]
  const CsrMatrix* prop = nullptr;            // gcn propagation matrix
  const CsrMatrix* attn = nullptr;            // gat neighborhood structure
};

struct ForwardResult {
  Var logits = -1;
  Var nc_embed = -1;              // graph-mlp embedding at the NC layer
  std::vector<Var> param_vars;    // tape leaves aligned with ParamSet order
};

ForwardResult model_forward(Tape& tape, const ModelConfig& cfg,
                            const ParamSet& params, const ModelInputs& in,
                            Mode mode);

// Inverted dropout on the stored values of a constant sparse matrix.
std::shared_ptr<const CsrMatrix> csr_dropout(
    std::shared_ptr<const CsrMatrix> x, double p, Rng& rng, bool train);

// Collects leaf gradients into the flat parameter layout.
std::vector<double> collect_param_grads(const Tape& tape,
                                        const std::vector<Var>& param_vars);

}  // namespace fg
