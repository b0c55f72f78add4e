#include "fg/models.hpp"

#include <cmath>

namespace fg {

void ModelConfig::validate() const {
  if (num_layers < 2) throw ConfigError("model: num_layers must be >= 2");
  if (hidden_dim < 1) throw ConfigError("model: hidden_dim must be >= 1");
  auto prob = [](double p, const char* what) {
    if (p < 0.0 || p >= 1.0)
      throw ConfigError(std::string("model: ") + what + " must be in [0,1)");
  };
  prob(input_dropout, "input_dropout");
  prob(model_dropout, "model_dropout");
  prob(attn_dropout, "attn_dropout");
  if (arch == Arch::gat && heads < 1) throw ConfigError("model: heads must be >= 1");
  if (arch == Arch::graphmlp) {
    if (nc_layer >= 0) throw ConfigError("model: nc_layer must be negative");
    if (-nc_layer > num_layers)
      throw ConfigError("model: nc_layer reaches before the first layer");
    if (nc_weight < 0.0) throw ConfigError("model: nc_weight must be >= 0");
    if (tau <= 0.0) throw ConfigError("model: tau must be > 0");
    if (r < 1 || r > 4) throw ConfigError("model: r must be in 1..4");
    if (batch_fraction <= 0.0 || batch_fraction > 1.0)
      throw ConfigError("model: batch_fraction must be in (0,1]");
  }
}

Arch arch_from_string(const std::string& s) {
  if (s == "gcn") return Arch::gcn;
  if (s == "gat") return Arch::gat;
  if (s == "graphmlp") return Arch::graphmlp;
  throw ConfigError("unknown arch: " + s);
}
std::string to_string(Arch a) {
  switch (a) {
    case Arch::gcn: return "gcn";
    case Arch::gat: return "gat";
    default: return "graphmlp";
  }
}
Norm norm_from_string(const std::string& s) {
  if (s == "id") return Norm::id;
  if (s == "ln") return Norm::ln;
  throw ConfigError("unknown norm: " + s);
}
std::string to_string(Norm n) { return n == Norm::id ? "id" : "ln"; }

namespace {

Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t = Tensor::zeros({rows, cols});
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& v : t.data) v = (2.0 * rng.uniform() - 1.0) * limit;
  return t;
}

struct LayerDims {
  std::size_t in, out;       // full width in/out
  std::size_t heads = 1;     // gat
  std::size_t head_dim = 0;  // gat
};

std::vector<LayerDims> layer_dims(const ModelConfig& cfg, std::size_t f,
                                  std::size_t c) {
  std::vector<LayerDims> dims;
  const std::size_t l = static_cast<std::size_t>(cfg.num_layers);
  for (std::size_t i = 1; i <= l; ++i) {
    LayerDims d;
    if (cfg.arch == Arch::gat) {
      const std::size_t k = i < l ? static_cast<std::size_t>(cfg.heads) : 1;
      const std::size_t hd = i < l ? static_cast<std::size_t>(cfg.hidden_dim) : c;
      d.heads = k;
      d.head_dim = hd;
      d.in = i == 1 ? f
                    : static_cast<std::size_t>(cfg.heads) *
                          static_cast<std::size_t>(cfg.hidden_dim);
      d.out = k * hd;
    } else {
      d.in = i == 1 ? f : static_cast<std::size_t>(cfg.hidden_dim);
      d.out = i < l ? static_cast<std::size_t>(cfg.hidden_dim) : c;
    }
    dims.push_back(d);
  }
  return dims;
}

}  // namespace

ParamSet init_params(const ModelConfig& cfg, std::size_t in_features,
                     std::size_t num_classes, Rng& rng) {
  cfg.validate();
  ParamSet out;
  const auto dims = layer_dims(cfg, in_features, num_classes);
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const std::string prefix = "l" + std::to_string(i + 1) + ".";
    out.add(prefix + "weight", glorot(dims[i].in, dims[i].out, rng));
    out.add(prefix + "bias", Tensor::zeros({dims[i].out}));
    if (cfg.arch == Arch::gat) {
      // one attention vector pair per head, glorot over the head width
      Tensor a_src = Tensor::zeros({dims[i].heads, dims[i].head_dim});
      Tensor a_dst = Tensor::zeros({dims[i].heads, dims[i].head_dim});
      const double limit = std::sqrt(6.0 / static_cast<double>(dims[i].head_dim + 1));
      for (double& v : a_src.data) v = (2.0 * rng.uniform() - 1.0) * limit;
      for (double& v : a_dst.data) v = (2.0 * rng.uniform() - 1.0) * limit;
      out.add(prefix + "attn_src", std::move(a_src));
      out.add(prefix + "attn_dst", std::move(a_dst));
    }
    const bool hidden = i + 1 < dims.size();
    if (hidden && cfg.norm == Norm::ln) {
      Tensor gain = Tensor::zeros({dims[i].out});
      for (double& v : gain.data) v = 1.0;
      out.add(prefix + "norm.gain", std::move(gain));
      out.add(prefix + "norm.bias", Tensor::zeros({dims[i].out}));
    }
  }
  return out;
}

std::shared_ptr<const CsrMatrix> csr_dropout(
    std::shared_ptr<const CsrMatrix> x, double p, Rng& rng, bool train) {
  if (!train || p <= 0.0) return x;
  if (p >= 1.0) throw ConfigError("dropout probability must be < 1");
  auto out = std::make_shared<CsrMatrix>(*x);
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& v : out->values) v = rng.uniform() < p ? 0.0 : v * keep_scale;
  return out;
}

std::vector<double> collect_param_grads(const Tape& tape,
                                        const std::vector<Var>& param_vars) {
  std::vector<double> flat;
  for (Var pv : param_vars) {
    const std::vector<double>& g = tape.grad(pv);
    if (g.empty())
      flat.insert(flat.end(), tape.value(pv).numel(), 0.0);
    else
      flat.insert(flat.end(), g.begin(), g.end());
  }
  return flat;
}

namespace {

struct LeafMap {
  std::vector<Var> vars;
  Var find(const ParamSet& p, const std::string& name) const {
    for (std::size_t i = 0; i < p.count(); ++i)
      if (p.item(i).name == name) return vars[i];
    throw ConfigError("forward: missing parameter " + name);
  }
  bool has(const ParamSet& p, const std::string& name) const {
    for (std::size_t i = 0; i < p.count(); ++i)
      if (p.item(i).name == name) return true;
    return false;
  }
};

LeafMap make_leaves(Tape& tape, const ParamSet& params) {
  LeafMap lm;
  lm.vars.reserve(params.count());
  for (std::size_t i = 0; i < params.count(); ++i)
    lm.vars.push_back(tape.leaf(params.item(i).tensor));
  return lm;
}

constexpr double kLeakySlope = 0.2;

}  // namespace

ForwardResult model_forward(Tape& tape, const ModelConfig& cfg,
                            const ParamSet& params, const ModelInputs& in,
                            Mode mode) {
  cfg.validate();
  if (!in.features) throw ConfigError("forward: feature matrix missing");
  const bool train = mode == Mode::train;
  ForwardResult res;
  LeafMap leaves = make_leaves(tape, params);
  res.param_vars = leaves.vars;

  auto x = csr_dropout(in.features, cfg.input_dropout, tape.rng(), train);
  const std::size_t l = static_cast<std::size_t>(cfg.num_layers);

  Var cur = -1;  // dense hidden state from layer 2 on
  Var prev_hidden = -1;
  std::vector<Var> layer_outputs;  // graph-mlp taps these
  for (std::size_t i = 1; i <= l; ++i) {
    const std::string prefix = "l" + std::to_string(i) + ".";
    const Var w = leaves.find(params, prefix + "weight");
    const Var b = leaves.find(params, prefix + "bias");

    Var h = i == 1 ? tape.spmm(x, w) : tape.matmul(cur, w);

    if (cfg.arch == Arch::gcn) {
      if (!in.prop) throw ConfigError("forward: gcn needs a propagation matrix");
      h = tape.spmm(*in.prop, h);
    } else if (cfg.arch == Arch::gat) {
      if (!in.attn) throw ConfigError("forward: gat needs the neighborhood structure");
      const std::size_t k = i < l ? static_cast<std::size_t>(cfg.heads) : 1;
      const std::size_t hd = i < l ? static_cast<std::size_t>(cfg.hidden_dim)
                                   : tape.value(w).cols();
      h = tape.gat_attention(h, *in.attn, leaves.find(params, prefix + "attn_src"),
                             leaves.find(params, prefix + "attn_dst"), k, hd,
                             kLeakySlope, cfg.attn_dropout, train);
    }
    h = tape.add_row_bias(h, b);

    if (i < l) {
      if (cfg.norm == Norm::ln)
        h = tape.layer_norm(h, leaves.find(params, prefix + "norm.gain"),
                            leaves.find(params, prefix + "norm.bias"));
      h = tape.elementwise(cfg.arch == Arch::gat ? Ew::elu : Ew::relu, h);
      layer_outputs.push_back(h);  // post-activation, pre-dropout
      h = tape.dropout(h, cfg.model_dropout, train);
      if (cfg.residual && prev_hidden >= 0 &&
          tape.value(prev_hidden).shape == tape.value(h).shape)
        h = tape.add(h, prev_hidden);
      prev_hidden = h;
    } else {
      layer_outputs.push_back(h);
    }
    cur = h;
  }

  res.logits = cur;
  if (cfg.arch == Arch::graphmlp) {
    // layer_outputs[j] is layer (j+1)'s post-activation output (logits for the
    // last layer), so nc_layer = -1 taps the last entry.
    res.nc_embed = layer_outputs[static_cast<std::size_t>(
        static_cast<int>(layer_outputs.size()) + cfg.nc_layer)];
  }
  return res;
}

}  // namespace fg
