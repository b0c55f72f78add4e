#include "fg/flatmin.hpp"

#include <cmath>

#include "fg/linalg.hpp"

namespace fg {

void MethodConfig::validate() const {
  if (sharpness) {
    if (sharpness->rho < 0.0) throw ConfigError("method: rho must be >= 0");
    if (sharpness->kind == SharpnessKind::pgn &&
        (sharpness->alpha < 0.0 || sharpness->alpha > 1.0))
      throw ConfigError("method: pgn alpha must be in [0,1]");
    if (sharpness->kind == SharpnessKind::gsam && sharpness->alpha < 0.0)
      throw ConfigError("method: gsam alpha must be >= 0");
  }
  if (averaging) {
    if (averaging->begin < 0) throw ConfigError("method: averaging begin must be >= 0");
    if (averaging->end < 0) throw ConfigError("method: averaging end must be >= 0");
    if (averaging->kind == AveragingKind::ewa &&
        (averaging->alpha < 0.0 || averaging->alpha > 1.0))
      throw ConfigError("method: ewa alpha must be in [0,1]");
  }
  if (noise && noise->sigma < 0.0) throw ConfigError("method: sigma must be >= 0");
  if (trajectory) {
    if (trajectory->lambda < 0.0) throw ConfigError("method: saf lambda must be >= 0");
    if (trajectory->tau <= 0.0) throw ConfigError("method: saf tau must be > 0");
    if (trajectory->gap < 1) throw ConfigError("method: saf gap must be >= 1");
    if (trajectory->start_epoch < 0)
      throw ConfigError("method: saf start_epoch must be >= 0");
  }
}

std::string MethodConfig::label() const {
  std::string out;
  auto append = [&out](const std::string& part) {
    if (!out.empty()) out += "+";
    out += part;
  };
  if (averaging)
    append(averaging->kind == AveragingKind::swa ? "swa" : "ewa");
  if (noise) append("anti_pgd");
  if (sharpness) {
    switch (sharpness->kind) {
      case SharpnessKind::sam: append("sam"); break;
      case SharpnessKind::asam: append("asam"); break;
      case SharpnessKind::pgn:
        append(sharpness->adv == AdvKind::asam ? "pgna" : "pgn");
        break;
      case SharpnessKind::gsam:
        append(sharpness->adv == AdvKind::asam ? "gasam" : "gsam");
        break;
    }
  }
  if (trajectory) append("saf");
  return out.empty() ? "baseline" : out;
}

std::vector<double> sam_perturb(const std::vector<double>& grad, double rho) {
  std::vector<double> eps(grad.size(), 0.0);
  const double norm = nrm2(grad.data(), grad.size());
  if (norm == 0.0 || rho == 0.0) return eps;
  const double s = rho / norm;
  for (std::size_t i = 0; i < grad.size(); ++i) eps[i] = s * grad[i];
  return eps;
}

std::vector<double> asam_perturb(const std::vector<double>& params,
                                 const std::vector<double>& grad, double rho) {
  if (params.size() != grad.size())
    throw ShapeError("asam_perturb: size mismatch");
  std::vector<double> eps(grad.size(), 0.0);
  if (rho == 0.0) return eps;
  double norm_sq = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double t = std::abs(params[i]) + 1e-12;
    const double tg = t * grad[i];
    norm_sq += tg * tg;
    eps[i] = t * tg;  // T^2 g
  }
  const double norm = std::sqrt(norm_sq);
  if (norm == 0.0) return std::vector<double>(grad.size(), 0.0);
  for (double& e : eps) e *= rho / norm;
  return eps;
}

std::vector<double> pgn_combine(const std::vector<double>& g_base,
                                const std::vector<double>& g_adv, double alpha) {
  if (g_base.size() != g_adv.size()) throw ShapeError("pgn_combine: size mismatch");
  std::vector<double> out(g_base.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (1.0 - alpha) * g_base[i] + alpha * g_adv[i];
  return out;
}

std::vector<double> gsam_combine(const std::vector<double>& g_base,
                                 const std::vector<double>& g_adv, double alpha) {
  if (g_base.size() != g_adv.size()) throw ShapeError("gsam_combine: size mismatch");
  const double adv_sq = dot(g_adv.data(), g_adv.data(), g_adv.size());
  if (adv_sq == 0.0) return g_base;
  const double proj = dot(g_base.data(), g_adv.data(), g_base.size()) / adv_sq;
  std::vector<double> out(g_base.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double perp = g_base[i] - proj * g_adv[i];
    out[i] = g_adv[i] - alpha * perp;
  }
  return out;
}

void adam_step(AdamState& st, std::vector<double>& params,
               const std::vector<double>& grad) {
  if (params.size() != st.m.size() || grad.size() != st.m.size())
    throw ShapeError("adam_step: state size mismatch");
  st.step_count += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i] + st.weight_decay * params[i];
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
    const double mhat = st.m[i] / bc1;
    const double vhat = st.v[i] / bc2;
    params[i] -= st.eta * mhat / (std::sqrt(vhat) + st.eps);
  }
}

void swa_accumulate(AveragerState& st, const std::vector<double>& params) {
  if (st.n_models == 0) {
    st.avg = params;
    st.n_models = 1;
    return;
  }
  const double n = static_cast<double>(st.n_models);
  for (std::size_t i = 0; i < params.size(); ++i)
    st.avg[i] = (st.avg[i] * n + params[i]) / (n + 1.0);
  st.n_models += 1;
}

void ewa_accumulate(AveragerState& st, const std::vector<double>& params,
                    double alpha) {
  if (st.n_models == 0) {
    st.avg = params;
    st.n_models = 1;
    return;
  }
  for (std::size_t i = 0; i < params.size(); ++i)
    st.avg[i] = alpha * st.avg[i] + (1.0 - alpha) * params[i];
  st.n_models += 1;
}

std::vector<double> anti_pgd_delta(NoiseState& st, int epoch, Rng& rng) {
  if (st.closed || st.xi_sum.empty()) return {};
  if (epoch < st.stop_epoch) {
    if (st.sigma == 0.0) return {};
    std::vector<double> delta(st.xi_sum.size());
    for (std::size_t i = 0; i < delta.size(); ++i) {
      const double xi_next = rng.normal(0.0, st.sigma);
      delta[i] = xi_next - st.xi_sum[i];
      st.xi_sum[i] += delta[i];
    }
    return delta;
  }
  // first epoch at or past the stop: hand back the accumulated noise once
  st.closed = true;
  if (st.sigma == 0.0) return {};
  std::vector<double> delta(st.xi_sum.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = -st.xi_sum[i];
  return delta;
}

double compose_step(const MethodConfig& cfg, const StepEvaluator& evaluate,
                    std::vector<double>& params, MethodStates& states,
                    int epoch) {
  cfg.validate();
  std::vector<double> g_base;
  const double loss = evaluate(params, g_base, 0);

  std::vector<double> combined;
  if (cfg.sharpness) {
    const bool use_asam =
        cfg.sharpness->kind == SharpnessKind::asam ||
        ((cfg.sharpness->kind == SharpnessKind::pgn ||
          cfg.sharpness->kind == SharpnessKind::gsam) &&
         cfg.sharpness->adv == AdvKind::asam);
    // rho = 0 keeps the pipeline shape (two evaluations) with a no-op move.
    std::vector<double> eps;
    if (cfg.sharpness->rho > 0.0) {
      eps = use_asam ? asam_perturb(params, g_base, cfg.sharpness->rho)
                     : sam_perturb(g_base, cfg.sharpness->rho);
      for (std::size_t i = 0; i < params.size(); ++i) params[i] += eps[i];
    }
    std::vector<double> g_adv;
    evaluate(params, g_adv, 1);
    if (!eps.empty())
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= eps[i];
    switch (cfg.sharpness->kind) {
      case SharpnessKind::sam:
      case SharpnessKind::asam:
        combined = std::move(g_adv);
        break;
      case SharpnessKind::pgn:
        combined = pgn_combine(g_base, g_adv, cfg.sharpness->alpha);
        break;
      case SharpnessKind::gsam:
        combined = gsam_combine(g_base, g_adv, cfg.sharpness->alpha);
        break;
    }
  } else {
    combined = std::move(g_base);
  }

  adam_step(states.adam, params, combined);

  if (cfg.noise && states.noise) {
    const std::vector<double> delta =
        anti_pgd_delta(*states.noise, epoch, states.noise_rng);
    if (!delta.empty())
      for (std::size_t i = 0; i < params.size(); ++i) params[i] += delta[i];
  }

  if (cfg.averaging && states.averager && epoch >= cfg.averaging->begin) {
    if (cfg.averaging->kind == AveragingKind::swa)
      swa_accumulate(*states.averager, params);
    else
      ewa_accumulate(*states.averager, params, cfg.averaging->alpha);
  }
  return loss;
}

}  // namespace fg
