#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fg/rng.hpp"
#include "fg/tensor.hpp"

namespace fg {

// Declarative description of the flat-minima pipeline wrapped around the base
// Adam optimizer: at most one sharpness stage, at most one averaging stage,
// plus optional anticorrelated noise and the trajectory loss.

enum class SharpnessKind { sam, asam, pgn, gsam };
enum class AdvKind { sam, asam };
enum class AveragingKind { swa, ewa };

struct SharpnessCfg {
  SharpnessKind kind = SharpnessKind::sam;
  AdvKind adv = AdvKind::sam;  // which perturbation pgn/gsam use
  double rho = 0.0;
  double alpha = 0.0;  // pgn/gsam balance
};

struct AveragingCfg {
  AveragingKind kind = AveragingKind::swa;
  int begin = 3;
  int end = 1;         // extra epochs past the early-stopping trigger
  double alpha = 0.5;  // ewa decay
};

struct NoiseCfg {
  double sigma = 0.0;
  int stop_epoch = 50;
};

struct SafCfg {
  double lambda = 0.0;
  double tau = 1.0;
  int start_epoch = 5;
  int gap = 3;  // compare against the output this many epochs back
};

struct MethodConfig {
  std::optional<SharpnessCfg> sharpness;
  std::optional<AveragingCfg> averaging;
  std::optional<NoiseCfg> noise;
  std::optional<SafCfg> trajectory;
  bool shared_masks = true;  // SAM's two evaluations reuse one dropout draw

  void validate() const;
  bool empty() const {
    return !sharpness && !averaging && !noise && !trajectory;
  }
  std::string label() const;  // e.g. "baseline", "sam", "ewa+gasam"
};

struct AdamState {
  std::size_t step_count = 0;
  std::vector<double> m, v;
  double eta = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void init(std::size_t n, double lr, double wd) {
    step_count = 0;
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    eta = lr;
    weight_decay = wd;
  }
};

struct AveragerState {
  AveragingKind kind = AveragingKind::swa;
  std::vector<double> avg;
  std::size_t n_models = 0;
  double alpha = 0.5;
  int epochs_past_stop = 0;

  bool active() const { return n_models > 0; }
};

struct NoiseState {
  double sigma = 0.0;
  int stop_epoch = 0;
  // Running sum of every delta handed out so far; the closing step at
  // stop_epoch emits its negation, which makes the telescoped sum exactly
  // zero in float arithmetic.
  std::vector<double> xi_sum;
  bool closed = false;
};

// One recorded model output: which vertices the rows belong to, plus the
// logits themselves (detached).
struct TrajectoryEntry {
  std::vector<std::size_t> ids;
  Tensor outputs;
};

struct TrajectoryBuffer {
  int gap = 3;
  std::deque<TrajectoryEntry> entries;

  bool full() const { return static_cast<int>(entries.size()) >= gap; }
  const TrajectoryEntry* reference() const {
    return full() ? &entries.front() : nullptr;
  }
  void record(TrajectoryEntry e) {
    entries.push_back(std::move(e));
    while (static_cast<int>(entries.size()) > gap) entries.pop_front();
  }
};

// -- flat-vector method primitives -------------------------------------------

// rho * g / ||g||_2; zero gradient gives a zero perturbation.
std::vector<double> sam_perturb(const std::vector<double>& grad, double rho);

// rho * (T^2 g) / ||T g||_2 with T = |w| + 1e-12 elementwise.
std::vector<double> asam_perturb(const std::vector<double>& params,
                                 const std::vector<double>& grad, double rho);

// (1 - alpha) g_base + alpha g_adv
std::vector<double> pgn_combine(const std::vector<double>& g_base,
                                const std::vector<double>& g_adv, double alpha);

// g_adv - alpha * (g_base orthogonal to g_adv); returns g_base when g_adv = 0.
std::vector<double> gsam_combine(const std::vector<double>& g_base,
                                 const std::vector<double>& g_adv, double alpha);

// Bias-corrected Adam with L2 weight decay folded into the gradient.
void adam_step(AdamState& state, std::vector<double>& params,
               const std::vector<double>& grad);

void swa_accumulate(AveragerState& state, const std::vector<double>& params);
void ewa_accumulate(AveragerState& state, const std::vector<double>& params,
                    double alpha);

// Anticorrelated noise delta for this epoch; empty vector means no change.
// Draws come from the dedicated noise rng so a sigma of zero leaves every
// other random stream untouched.
std::vector<double> anti_pgd_delta(NoiseState& state, int epoch, Rng& rng);

// -- pipeline ----------------------------------------------------------------

// Loss-and-gradient oracle for one epoch. pass 0 is the evaluation at the
// current parameters (it also records the trajectory entry); pass 1, when a
// sharpness stage is active, re-evaluates at the perturbed parameters with
// identical dropout masks.
using StepEvaluator =
    std::function<double(const std::vector<double>& params,
                         std::vector<double>& grad_out, int pass)>;

struct MethodStates {
  AdamState adam;
  std::optional<AveragerState> averager;
  std::optional<NoiseState> noise;
  TrajectoryBuffer trajectory;
  Rng noise_rng{0};
};

// Runs one full training step: sharpness perturbation and gradient
// combination, the Adam update, the noise delta, and the averaging
// accumulation. Returns the pass-0 loss.
double compose_step(const MethodConfig& cfg, const StepEvaluator& evaluate,
                    std::vector<double>& params, MethodStates& states,
                    int epoch);

}  // namespace fg
