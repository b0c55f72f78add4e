#include "fg/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

namespace fg {

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "transductive") return TrainMode::transductive;
  if (s == "inductive") return TrainMode::inductive;
  throw ConfigError("unknown mode: " + s);
}
std::string to_string(TrainMode m) {
  return m == TrainMode::transductive ? "transductive" : "inductive";
}

void RunConfig::validate() const {
  model.validate();
  method.validate();
  if (patience < 1) throw ConfigError("trainer: patience must be >= 1");
  if (max_epochs < patience) throw ConfigError("trainer: max_epochs must be >= patience");
  if (optimizer.lr < 0.0) throw ConfigError("trainer: learning rate must be >= 0");
  if (optimizer.weight_decay < 0.0)
    throw ConfigError("trainer: weight decay must be >= 0");
}

namespace {

std::shared_ptr<GraphView> make_view(Graph graph, std::vector<std::size_t> to_view,
                                     const ModelConfig& model, bool needs_power) {
  auto view = std::make_shared<GraphView>();
  view->graph = std::move(graph);
  view->to_view = std::move(to_view);
  view->features_csr =
      std::make_shared<const CsrMatrix>(CsrMatrix::from_dense(view->graph.features));

  NormalizedAdjacency norm = NormalizedAdjacency::build(view->graph);
  if (model.arch == Arch::gat) {
    // structure only: self loops with unit weights
    CsrMatrix attn = norm.base;
    for (double& v : attn.values) v = 1.0;
    view->attn_adj = std::move(attn);
  } else {
    view->norm_adj = norm.base;
  }
  if (model.arch == Arch::graphmlp && needs_power) {
    PowerMatrix p = adj_power(norm.base, model.r);
    if (model.batch_fraction >= 1.0) {
      if (p.dense) {
        view->full_batch_adj = std::move(*p.dense);
      } else {
        std::vector<std::size_t> all(view->graph.num_vertices);
        std::iota(all.begin(), all.end(), std::size_t{0});
        view->full_batch_adj = batch_adjacency(p, all);
      }
    } else {
      view->power = std::move(p);
    }
  }
  return view;
}

std::vector<std::size_t> identity_map(std::size_t n) {
  std::vector<std::size_t> m(n);
  std::iota(m.begin(), m.end(), std::size_t{0});
  return m;
}

std::vector<std::size_t> map_indices(const std::vector<std::size_t>& orig,
                                     const std::vector<std::size_t>& to_view) {
  std::vector<std::size_t> out;
  out.reserve(orig.size());
  for (std::size_t v : orig) {
    if (to_view[v] == SubgraphResult::npos)
      throw ConfigError("setup: vertex missing from graph view");
    out.push_back(to_view[v]);
  }
  return out;
}

}  // namespace

TrainingSetup build_setup(const Graph& g, const Split& split, TrainMode mode,
                          const ModelConfig& model) {
  model.validate();
  split.validate(g.num_vertices);
  TrainingSetup setup;
  setup.mode = mode;
  setup.metric = g.multilabel ? Metric::weighted_f1 : Metric::accuracy;

  if (mode == TrainMode::transductive) {
    auto view = make_view(g, identity_map(g.num_vertices), model, true);
    setup.train_view = setup.val_view = setup.test_view = view;
    setup.train_idx = split.train;
    setup.val_idx = split.val;
    setup.test_idx = split.test;
  } else {
    SubgraphResult tr = induced_subgraph(g, split.train);
    setup.train_idx = map_indices(split.train, tr.to_sub);
    setup.train_view = make_view(std::move(tr.graph), std::move(tr.to_sub), model, true);

    std::vector<std::size_t> train_val = split.train;
    train_val.insert(train_val.end(), split.val.begin(), split.val.end());
    SubgraphResult va = induced_subgraph(g, train_val);
    setup.val_idx = map_indices(split.val, va.to_sub);
    setup.val_view = make_view(std::move(va.graph), std::move(va.to_sub), model, false);

    setup.test_view = make_view(g, identity_map(g.num_vertices), model, false);
    setup.test_idx = split.test;
  }
  return setup;
}

namespace {

ModelInputs inputs_for(const ModelConfig& model, const GraphView& view) {
  ModelInputs in;
  in.features = view.features_csr;
  if (model.arch == Arch::gcn) in.prop = &view.norm_adj;
  if (model.arch == Arch::gat) in.attn = &view.attn_adj;
  return in;
}

Tensor eval_logits(const ModelConfig& model, const ParamSet& params,
                   const GraphView& view) {
  Rng dummy(0);
  Tape tape(dummy);
  ForwardResult fwd =
      model_forward(tape, model, params, inputs_for(model, view), Mode::eval);
  return tape.value(fwd.logits);
}

}  // namespace

double weighted_macro_f1(const Tensor& pred, const Tensor& labels) {
  if (pred.shape != labels.shape)
    throw ShapeError("weighted_macro_f1: shape mismatch");
  const std::size_t n = pred.rows(), c = pred.cols();
  double total_support = 0.0, weighted = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    double tp = 0.0, fp = 0.0, fn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool p = pred.at(i, j) != 0.0;
      const bool t = labels.at(i, j) != 0.0;
      if (p && t) tp += 1.0;
      if (p && !t) fp += 1.0;
      if (!p && t) fn += 1.0;
    }
    const double support = tp + fn;
    double f1 = 0.0;
    if (2.0 * tp + fp + fn > 0.0) f1 = 2.0 * tp / (2.0 * tp + fp + fn);
    weighted += support * f1;
    total_support += support;
  }
  return total_support > 0.0 ? weighted / total_support : 0.0;
}

double evaluate(const ModelConfig& model, const ParamSet& params,
                const GraphView& view, const std::vector<std::size_t>& idx,
                Metric metric) {
  if (idx.empty()) throw ConfigError("evaluate: empty vertex set");
  const Tensor logits = eval_logits(model, params, view);
  const std::size_t c = logits.cols();
  if (metric == Metric::accuracy) {
    std::size_t correct = 0;
    for (std::size_t v : idx) {
      std::size_t arg = 0;
      for (std::size_t j = 1; j < c; ++j)
        if (logits.at(v, j) > logits.at(v, arg)) arg = j;  // ties stay low
      if (static_cast<int>(arg) == view.graph.labels[v]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(idx.size());
  }
  Tensor pred = Tensor::zeros({idx.size(), c});
  Tensor truth = Tensor::zeros({idx.size(), c});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < c; ++j) {
      pred.at(i, j) = logits.at(idx[i], j) >= 0.0 ? 1.0 : 0.0;  // sigmoid >= 0.5
      truth.at(i, j) = view.graph.label_matrix.at(idx[i], j);
    }
  return weighted_macro_f1(pred, truth);
}

double classification_loss(const ModelConfig& model, const ParamSet& params,
                           const GraphView& view,
                           const std::vector<std::size_t>& idx) {
  Rng dummy(0);
  Tape tape(dummy);
  ForwardResult fwd =
      model_forward(tape, model, params, inputs_for(model, view), Mode::eval);
  Var loss = view.graph.multilabel
                 ? tape.multilabel_bce(fwd.logits, view.graph.label_matrix, idx)
                 : tape.masked_cross_entropy(fwd.logits, view.graph.labels, idx);
  return tape.value(loss).data[0];
}

namespace {

struct EpochPlan {
  // graph-mlp batch for this epoch (view indices, sorted); empty means the
  // whole train view
  std::vector<std::size_t> batch;
  std::shared_ptr<const CsrMatrix> batch_features;
  std::optional<Tensor> batch_adj;             // when sampling
  std::optional<Tensor> batch_label_matrix;    // multilabel, when sampling
  std::vector<std::size_t> loss_rows;          // forward-output rows in the CE
  std::vector<int> row_labels;                 // per forward row, when sampling
  std::vector<std::size_t> record_ids;         // view vertex ids to record
  std::vector<std::size_t> record_rows;        // forward rows to record
  std::vector<std::size_t> kl_rows;            // forward rows the KL applies to
  std::optional<TrajectoryEntry> aligned_ref;  // detached, aligned to kl_rows
};

struct Runner {
  const TrainingSetup& setup;
  const RunConfig& cfg;
  Rng train_rng;
  ParamSet workspace;
  MethodStates states;
  EpochPlan plan;
  int epoch = 0;
  std::optional<Rng::State> mask_snapshot;
  std::vector<char> is_train;  // over train view vertices

  Runner(const TrainingSetup& s, const RunConfig& c, std::uint64_t attempt_seed)
      : setup(s), cfg(c), train_rng(Rng::derive(attempt_seed, 2)) {
    Rng init_rng(Rng::derive(attempt_seed, 1));
    workspace = init_params(cfg.model, setup.train_view->graph.num_features(),
                            setup.train_view->graph.num_classes, init_rng);
    const std::size_t n = workspace.total_elems();
    states.adam.init(n, cfg.optimizer.lr, cfg.optimizer.weight_decay);
    if (cfg.method.averaging) {
      states.averager.emplace();
      states.averager->kind = cfg.method.averaging->kind;
      states.averager->alpha = cfg.method.averaging->alpha;
    }
    if (cfg.method.noise) {
      states.noise.emplace();
      states.noise->sigma = cfg.method.noise->sigma;
      states.noise->stop_epoch = cfg.method.noise->stop_epoch;
      states.noise->xi_sum.assign(n, 0.0);
      states.noise_rng = Rng(Rng::derive(attempt_seed, 3));
    }
    if (cfg.method.trajectory) states.trajectory.gap = cfg.method.trajectory->gap;
    is_train.assign(setup.train_view->graph.num_vertices, 0);
    for (std::size_t v : setup.train_idx) is_train[v] = 1;
  }

  bool sampled_batches() const {
    return cfg.model.arch == Arch::graphmlp && cfg.model.batch_fraction < 1.0;
  }

  void plan_epoch() {
    plan = EpochPlan{};
    const GraphView& view = *setup.train_view;
    if (sampled_batches()) {
      const std::size_t pool = view.graph.num_vertices;
      const std::size_t want = static_cast<std::size_t>(
          std::ceil(cfg.model.batch_fraction * static_cast<double>(pool)));
      std::vector<std::size_t> order(pool);
      std::iota(order.begin(), order.end(), std::size_t{0});
      train_rng.shuffle(order);
      order.resize(std::max<std::size_t>(want, 1));
      std::sort(order.begin(), order.end());
      plan.batch = std::move(order);
      plan.batch_features = std::make_shared<const CsrMatrix>(
          view.features_csr->take_rows(plan.batch));
      if (!view.power)
        throw ConfigError(
            "training setup was built without the powered adjacency; rebuild "
            "it with the batch-sampling model config");
      plan.batch_adj = batch_adjacency(*view.power, plan.batch);
      if (view.graph.multilabel) {
        plan.batch_label_matrix =
            Tensor::zeros({plan.batch.size(), view.graph.num_classes});
        for (std::size_t i = 0; i < plan.batch.size(); ++i)
          for (std::size_t c = 0; c < view.graph.num_classes; ++c)
            plan.batch_label_matrix->at(i, c) =
                view.graph.label_matrix.at(plan.batch[i], c);
      } else {
        plan.row_labels.resize(plan.batch.size());
        for (std::size_t i = 0; i < plan.batch.size(); ++i)
          plan.row_labels[i] = view.graph.labels[plan.batch[i]];
      }
      for (std::size_t i = 0; i < plan.batch.size(); ++i) {
        if (is_train[plan.batch[i]]) {
          plan.loss_rows.push_back(i);
          plan.record_ids.push_back(plan.batch[i]);
          plan.record_rows.push_back(i);
        }
      }
    } else {
      // full batch: forward over the whole train view
      plan.loss_rows = setup.train_idx;
      plan.record_ids = setup.train_idx;
      plan.record_rows = setup.train_idx;
    }
    plan.kl_rows = plan.record_rows;

    if (cfg.method.trajectory && epoch >= cfg.method.trajectory->start_epoch) {
      const TrajectoryEntry* ref = states.trajectory.reference();
      if (ref) align_reference(*ref);
    }
  }

  // Intersect the stored reference with this epoch's train rows; the copy
  // detaches it from the deque before this epoch records over it.
  void align_reference(const TrajectoryEntry& ref) {
    TrajectoryEntry aligned;
    std::vector<std::size_t> keep_rows;
    const std::size_t c = ref.outputs.cols();
    std::vector<double> rows_data;
    for (std::size_t i = 0; i < plan.record_ids.size(); ++i) {
      const auto it =
          std::lower_bound(ref.ids.begin(), ref.ids.end(), plan.record_ids[i]);
      if (it == ref.ids.end() || *it != plan.record_ids[i]) continue;
      const std::size_t r = static_cast<std::size_t>(it - ref.ids.begin());
      keep_rows.push_back(plan.record_rows[i]);
      aligned.ids.push_back(plan.record_ids[i]);
      rows_data.insert(rows_data.end(), ref.outputs.data.begin() + r * c,
                       ref.outputs.data.begin() + (r + 1) * c);
    }
    if (keep_rows.empty()) return;
    aligned.outputs = Tensor({aligned.ids.size(), c}, std::move(rows_data));
    plan.kl_rows = std::move(keep_rows);
    plan.aligned_ref = std::move(aligned);
  }

  // Loss-and-gradient oracle handed to compose_step.
  double operator()(const std::vector<double>& flat, std::vector<double>& grad,
                    int pass) {
    workspace.unflatten(flat);
    const bool sharp = cfg.method.sharpness.has_value();
    if (pass == 0 && sharp && cfg.method.shared_masks)
      mask_snapshot = train_rng.state();
    if (pass == 1 && cfg.method.shared_masks && mask_snapshot)
      train_rng.restore(*mask_snapshot);

    const GraphView& view = *setup.train_view;
    Tape tape(train_rng);
    ModelInputs in = inputs_for(cfg.model, view);
    if (plan.batch_features) in.features = plan.batch_features;
    ForwardResult fwd = model_forward(tape, cfg.model, workspace, in, Mode::train);

    Var loss;
    if (view.graph.multilabel) {
      const Tensor& labs =
          plan.batch_label_matrix ? *plan.batch_label_matrix : view.graph.label_matrix;
      loss = tape.multilabel_bce(fwd.logits, labs, plan.loss_rows);
    } else {
      const std::vector<int>& labs =
          plan.row_labels.empty() ? view.graph.labels : plan.row_labels;
      loss = tape.masked_cross_entropy(fwd.logits, labs, plan.loss_rows);
    }

    if (cfg.model.arch == Arch::graphmlp && cfg.model.nc_weight > 0.0) {
      const Tensor& a_batch =
          plan.batch_adj ? *plan.batch_adj : *view.full_batch_adj;
      Var nc = tape.nc_loss(fwd.nc_embed, a_batch, cfg.model.tau);
      loss = tape.add(loss, tape.scale(nc, cfg.model.nc_weight));
    }

    if (plan.aligned_ref && cfg.method.trajectory) {
      Var cur_rows = tape.take_rows(fwd.logits, plan.kl_rows);
      Var tra = tape.kl_to_reference(cur_rows, plan.aligned_ref->outputs,
                                     cfg.method.trajectory->tau,
                                     cfg.method.trajectory->lambda);
      loss = tape.add(loss, tra);
    }

    const double loss_value = tape.value(loss).data[0];
    if (!std::isfinite(loss_value)) throw NumericError("training loss diverged");
    tape.backward(loss);
    grad = collect_param_grads(tape, fwd.param_vars);

    if (pass == 0 && cfg.method.trajectory &&
        epoch >= cfg.method.trajectory->start_epoch) {
      TrajectoryEntry entry;
      entry.ids = plan.record_ids;
      const Tensor& logits = tape.value(fwd.logits);
      const std::size_t c = logits.cols();
      std::vector<double> data;
      data.reserve(plan.record_ids.size() * c);
      for (std::size_t r : plan.record_rows)
        data.insert(data.end(), logits.data.begin() + r * c,
                    logits.data.begin() + (r + 1) * c);
      entry.outputs = Tensor({entry.ids.size(), c}, std::move(data));
      states.trajectory.record(std::move(entry));
    }
    return loss_value;
  }
};

RunResult train_attempt(const TrainingSetup& setup, const RunConfig& cfg,
                        std::uint64_t attempt_seed, ParamSet* best_params_out) {
  Runner runner(setup, cfg, attempt_seed);
  std::vector<double> params = runner.workspace.flatten();
  std::vector<double> best_params = params;

  RunResult res;
  double best_val = -1.0;
  int no_improve = 0;
  bool stopped = false;
  int trigger_epoch = 0;
  int cooldown = 0;

  StepEvaluator oracle = [&runner](const std::vector<double>& p,
                                   std::vector<double>& g, int pass) {
    return runner(p, g, pass);
  };

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    runner.epoch = epoch;
    runner.plan_epoch();
    compose_step(cfg.method, oracle, params, runner.states, epoch);

    runner.workspace.unflatten(params);
    const double val = evaluate(cfg.model, runner.workspace, *setup.val_view,
                                setup.val_idx, setup.metric);
    res.val_curve.push_back(val);

    if (!stopped) {
      if (val > best_val) {
        best_val = val;
        res.best_val_epoch = epoch;
        best_params = params;
        no_improve = 0;
      } else {
        ++no_improve;
      }
      if (no_improve >= cfg.patience) {
        stopped = true;
        trigger_epoch = epoch;
        cooldown = cfg.method.averaging ? cfg.method.averaging->end : 0;
        if (cooldown == 0) {
          res.stop_epoch = epoch;
          break;
        }
      }
    } else if (epoch - trigger_epoch >= cooldown) {
      res.stop_epoch = epoch;
      break;
    }
  }
  if (res.stop_epoch == 0) res.stop_epoch = cfg.max_epochs;
  if (res.best_val_epoch == 0) res.best_val_epoch = res.stop_epoch;

  res.best_val_metric = best_val;
  runner.workspace.unflatten(best_params);
  res.final_test_metric = evaluate(cfg.model, runner.workspace, *setup.test_view,
                                   setup.test_idx, setup.metric);
  res.final_train_loss = classification_loss(cfg.model, runner.workspace,
                                             *setup.train_view, setup.train_idx);
  if (best_params_out) *best_params_out = runner.workspace;

  if (runner.states.averager && runner.states.averager->active()) {
    runner.workspace.unflatten(runner.states.averager->avg);
    res.averaged_test_metric = evaluate(cfg.model, runner.workspace,
                                        *setup.test_view, setup.test_idx,
                                        setup.metric);
  }
  return res;
}

}  // namespace

RunResult train_with_params(const TrainingSetup& setup, const RunConfig& cfg,
                            std::uint64_t seed, ParamSet* best_params_out) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunResult res;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    const std::uint64_t attempt_seed =
        attempt == 0 ? seed : Rng::derive(seed, 100 + static_cast<std::uint64_t>(attempt));
    try {
      res = train_attempt(setup, cfg, attempt_seed, best_params_out);
      res.retries = attempt;
      break;
    } catch (const NumericError& e) {
      if (attempt == cfg.max_retries) {
        res = RunResult{};
        res.retries = attempt;
        res.failed = true;
        res.fail_reason = e.what();
      }
    }
  }
  res.seed = seed;
  res.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

RunResult train(const TrainingSetup& setup, const RunConfig& cfg,
                std::uint64_t seed) {
  return train_with_params(setup, cfg, seed, nullptr);
}

MultiSeedSummary multi_seed(const TrainingSetup& setup, const RunConfig& cfg,
                            const std::vector<std::uint64_t>& seeds, int jobs) {
  MultiSeedSummary out;
  out.runs.resize(seeds.size());
  std::atomic<std::size_t> next{0};
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(seeds.size())));
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= seeds.size()) return;
      out.runs[i] = train(setup, cfg, seeds[i]);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  double sum = 0.0;
  for (const RunResult& r : out.runs) {
    if (r.failed) {
      ++out.failed;
      continue;
    }
    sum += r.effective_metric();
    ++out.n;
  }
  if (out.n > 0) out.mean = sum / static_cast<double>(out.n);
  if (out.n > 1) {
    double ss = 0.0;
    for (const RunResult& r : out.runs)
      if (!r.failed) {
        const double d = r.effective_metric() - out.mean;
        ss += d * d;
      }
    out.sd = std::sqrt(ss / static_cast<double>(out.n - 1));
  }
  return out;
}

PairedSummary paired_differences(const std::vector<RunResult>& baseline,
                                 const std::vector<RunResult>& method) {
  PairedSummary out;
  for (const RunResult& m : method) {
    if (m.failed) continue;
    for (const RunResult& b : baseline) {
      if (b.failed || b.seed != m.seed) continue;
      out.pairs.push_back(
          {m.seed, b.effective_metric(), m.effective_metric(),
           m.effective_metric() - b.effective_metric()});
      break;
    }
  }
  if (!out.pairs.empty()) {
    double sum = 0.0;
    for (const auto& p : out.pairs) sum += p.diff;
    out.mean_diff = sum / static_cast<double>(out.pairs.size());
    if (out.pairs.size() > 1) {
      double ss = 0.0;
      for (const auto& p : out.pairs) {
        const double d = p.diff - out.mean_diff;
        ss += d * d;
      }
      out.sd_diff = std::sqrt(ss / static_cast<double>(out.pairs.size() - 1));
    }
  }
  return out;
}

}  // namespace fg
