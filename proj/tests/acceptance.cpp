// Acceptance suite: runs every release criterion end to end and prints one
// PASS/FAIL line per criterion. Quantitative reproduction criteria need the
// converted benchmark datasets (cora, citeseer) under $FLATGRAPH_DATA or
// ./data; without them those criteria fail with a clear message while the
// self-contained criteria still run.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fg/config.hpp"
#include "fg/landscape.hpp"
#include "fg/linalg.hpp"
#include "fg/synth.hpp"
#include "fg/trainer.hpp"

#ifndef FG_SOURCE_DIR
#define FG_SOURCE_DIR "."
#endif

namespace fs = std::filesystem;
using namespace fg;

namespace {

int g_jobs = 2;

struct CriterionResult {
  std::string id;
  bool pass = false;
  std::string detail;
};

std::vector<CriterionResult> g_results;

void record(const std::string& id, bool pass, const std::string& detail) {
  g_results.push_back({id, pass, detail});
  std::cout << (pass ? "[PASS] " : "[FAIL] ") << id << ": " << detail << "\n"
            << std::flush;
}

// -- dataset discovery ---------------------------------------------------------

std::optional<std::string> find_data_root() {
  std::vector<std::string> candidates;
  if (const char* env = std::getenv("FLATGRAPH_DATA")) candidates.push_back(env);
  candidates.push_back("data");
  candidates.push_back("../data");
  candidates.push_back(std::string(FG_SOURCE_DIR) + "/data");
  for (const std::string& c : candidates)
    if (fs::is_directory(fs::path(c) / "cora") &&
        fs::is_directory(fs::path(c) / "citeseer"))
      return fs::absolute(c).string();
  return std::nullopt;
}

const std::string kConfigDir = std::string(FG_SOURCE_DIR) + "/configs";

ExperimentConfig load_config(const std::string& rel) {
  return parse_experiment_config(kConfigDir + "/" + rel);
}

MultiSeedSummary run_config(const std::string& rel, std::size_t num_seeds) {
  ExperimentConfig cfg = load_config(rel);
  Graph g = load_dataset(cfg.dataset_path);
  Split split = cfg.resolve_split(g);
  TrainingSetup setup = build_setup(g, split, cfg.run.mode, cfg.run.model);
  std::vector<std::uint64_t> seeds(num_seeds);
  std::iota(seeds.begin(), seeds.end(), std::uint64_t{0});
  return multi_seed(setup, cfg.run, seeds, g_jobs);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << v;
  return os.str();
}

// -- criterion 1: baseline reproduction -----------------------------------------

void criterion1(const std::optional<std::string>& data_root) {
  struct Target {
    const char* config;
    double mean, band;
  };
  const std::vector<Target> targets = {
      {"transductive/gcn_cora_planetoid.json", 82.02, 1.2},
      {"transductive/gcn_citeseer_planetoid.json", 71.39, 1.5},
      {"transductive/gat_cora_planetoid.json", 82.94, 1.5},
      {"transductive/graphmlp_citeseer_planetoid.json", 74.53, 1.5},
  };
  if (!data_root) {
    record("1 baseline reproduction", false,
           "converted cora/citeseer datasets not found under $FLATGRAPH_DATA or "
           "./data; cannot run the accuracy bundles (see README for the "
           "converter)");
    return;
  }
  bool all = true;
  std::string detail;
  for (const Target& t : targets) {
    MultiSeedSummary s = run_config(t.config, 20);
    const double mean = s.mean * 100.0;
    const bool ok = s.failed == 0 && std::abs(mean - t.mean) <= t.band;
    all = all && ok;
    detail += std::string(t.config) + " mean " + fmt(mean) + " (want " +
              fmt(t.mean) + " +/- " + fmt(t.band) + (ok ? ") " : ") MISS ");
  }
  record("1 baseline reproduction", all, detail);
}

// -- criteria 2 and 3: flat-minima effects --------------------------------------

void criterion23(const std::optional<std::string>& data_root) {
  if (!data_root) {
    record("2 flat-minima effect", false,
           "citeseer dataset not available; the paired-seed improvement runs "
           "need the converted benchmark data");
    record("3 combination harness", false, "citeseer dataset not available");
    return;
  }
  const std::size_t n = 50;
  MultiSeedSummary base_rapl = run_config("transductive/gcn_citeseer_ra-pl.json", n);
  MultiSeedSummary ewa = run_config("transductive/gcn_citeseer_ra-pl_ewa.json", n);
  MultiSeedSummary sam = run_config("transductive/gcn_citeseer_ra-pl_sam.json", n);
  PairedSummary d_ewa = paired_differences(base_rapl.runs, ewa.runs);
  PairedSummary d_sam = paired_differences(base_rapl.runs, sam.runs);

  MultiSeedSummary base_pl = run_config("transductive/gcn_citeseer_planetoid.json", n);
  MultiSeedSummary sam_pl =
      run_config("transductive/gcn_citeseer_planetoid_sam.json", n);
  PairedSummary d_sam_pl = paired_differences(base_pl.runs, sam_pl.runs);

  const double ewa_gain = d_ewa.mean_diff * 100.0;
  const double sam_gain = d_sam.mean_diff * 100.0;
  const double sam_pl_gain = d_sam_pl.mean_diff * 100.0;
  const bool ok2 = ewa_gain >= 1.0 && sam_gain >= 0.5 && sam_pl_gain >= 0.5;
  record("2 flat-minima effect", ok2,
         "citeseer/ra-pl +ewa " + fmt(ewa_gain) + " (want >= 1.0), +sam " +
             fmt(sam_gain) + " (want >= 0.5), citeseer/planetoid +sam " +
             fmt(sam_pl_gain) + " (want >= 0.5) over " +
             std::to_string(d_ewa.pairs.size()) + " paired seeds");

  MultiSeedSummary combo =
      run_config("transductive/gcn_citeseer_ra-pl_ewa_gasam.json", n);
  PairedSummary d_combo = paired_differences(base_rapl.runs, combo.runs);
  const double combo_gain = d_combo.mean_diff * 100.0;
  record("3 combination harness", combo_gain >= 1.5,
         "citeseer/ra-pl +ewa+gasam " + fmt(combo_gain) +
             " (want >= 1.5) over " + std::to_string(d_combo.pairs.size()) +
             " paired seeds");
}

// -- criterion 4: split oracles --------------------------------------------------

Graph shape_graph(std::size_t n, std::size_t classes) {
  Graph g;
  g.num_vertices = n;
  g.num_classes = classes;
  g.features = Tensor::zeros({n, 1});
  g.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.labels[i] = static_cast<int>(i % classes);
  g.adj.num_rows = g.adj.num_cols = n;
  g.adj.row_ptr.assign(n + 1, 0);
  return g;
}

bool sizes_match(const Split& s, std::size_t train, std::size_t val,
                 std::size_t test) {
  return s.train.size() == train && s.val.size() == val && s.test.size() == test;
}

bool within_half_percent(std::size_t got, std::size_t want) {
  return std::abs(static_cast<double>(got) - static_cast<double>(want)) <=
         0.005 * static_cast<double>(want);
}

void criterion4(const std::optional<std::string>& data_root) {
  bool ok = true;
  std::string detail;

  // ra-pl exact sizes; the generator only reads labels, so a label-shape
  // stand-in is exact when the real graph is absent
  auto check_rapl = [&](const std::string& name, std::size_t nv, std::size_t c,
                        std::size_t train, std::size_t val, std::size_t test) {
    Graph g;
    if (data_root && fs::is_directory(fs::path(*data_root) / name))
      g = load_dataset((fs::path(*data_root) / name).string());
    else
      g = shape_graph(nv, c);
    const Split s = generate_split(g, SplitKind::ra_pl, 0);
    const bool good = sizes_match(s, train, val, test);
    ok = ok && good;
    detail += name + " ra-pl " + std::to_string(s.train.size()) + "/" +
              std::to_string(s.val.size()) + "/" + std::to_string(s.test.size()) +
              (good ? " " : " MISS ");
  };
  check_rapl("cora", 2708, 7, 140, 210, 2358);
  check_rapl("citeseer", 3327, 6, 120, 180, 3027);

  // planetoid sizes 20C/500/1000, against the real index files when present
  if (data_root) {
    for (const auto& [name, c] : {std::pair<std::string, std::size_t>{"cora", 7},
                                  {"citeseer", 6}}) {
      const std::string split_path =
          (fs::path(*data_root) / name / "splits" / "planetoid.json").string();
      try {
        Graph g = load_dataset((fs::path(*data_root) / name).string());
        const Split s = load_planetoid_split(split_path, g);
        const bool good = sizes_match(s, 20 * c, 500, 1000);
        ok = ok && good;
        detail += name + " planetoid " + std::to_string(s.train.size()) +
                  "/500/1000" + (good ? " " : " MISS ");
      } catch (const std::exception& e) {
        ok = false;
        detail += name + " planetoid MISS (" + std::string(e.what()) + ") ";
      }
    }
  } else {
    // the loader gate itself, exercised on a shaped fixture
    Graph g = shape_graph(2708, 7);
    Split s;
    s.kind = SplitKind::planetoid;
    for (std::size_t i = 0; i < 140; ++i) s.train.push_back(i);
    for (std::size_t i = 140; i < 640; ++i) s.val.push_back(i);
    for (std::size_t i = 1708; i < 2708; ++i) s.test.push_back(i);
    const std::string tmp =
        (fs::temp_directory_path() / "fg_accept_plan.json").string();
    save_split(tmp, s);
    const Split back = load_planetoid_split(tmp, g);
    const bool good = sizes_match(back, 140, 500, 1000);
    ok = ok && good;
    detail += std::string("planetoid size gate ") + (good ? "" : "MISS ");
  }

  // 622 within half a percent of the reported counts
  struct S622 {
    const char* name;
    std::size_t nv, c, train, val, test;
  };
  for (const S622& t : std::vector<S622>{{"cora", 2708, 7, 1621, 542, 545},
                                         {"citeseer", 3327, 6, 1993, 666, 668},
                                         {"pubmed", 19717, 3, 11829, 3944, 3944}}) {
    Graph g;
    if (data_root && fs::is_directory(fs::path(*data_root) / t.name))
      g = load_dataset((fs::path(*data_root) / t.name).string());
    else
      g = shape_graph(t.nv, t.c);
    const Split s = generate_split(g, SplitKind::s622, 0);
    const bool good = within_half_percent(s.train.size(), t.train) &&
                      within_half_percent(s.val.size(), t.val) &&
                      within_half_percent(s.test.size(), t.test);
    ok = ok && good;
    detail += std::string(t.name) + " 622 " + std::to_string(s.train.size()) +
              "/" + std::to_string(s.val.size()) + "/" +
              std::to_string(s.test.size()) + (good ? " " : " MISS ");
  }
  if (!data_root) detail += "(label-shape stand-ins; real data not bundled)";
  record("4 split oracles", ok, detail);
}

// -- criterion 5: property suite --------------------------------------------------

double model_grad_error(Arch arch) {
  SynthSpec spec;
  spec.num_vertices = 8;
  spec.num_classes = 3;
  spec.num_features = 6;
  spec.prob_in = 0.45;
  spec.prob_out = 0.25;
  spec.words_per_vertex = 3;
  spec.word_signal = 0.7;
  spec.seed = arch == Arch::gcn ? 910 : arch == Arch::gat ? 920 : 930;
  Graph g = make_synthetic_graph(spec);

  auto features =
      std::make_shared<const CsrMatrix>(CsrMatrix::from_dense(g.features));
  NormalizedAdjacency na = NormalizedAdjacency::build(g);
  CsrMatrix attn = na.base;
  for (double& v : attn.values) v = 1.0;

  ModelConfig cfg;
  cfg.arch = arch;
  cfg.num_layers = arch == Arch::graphmlp ? 3 : 2;
  cfg.hidden_dim = arch == Arch::gat ? 3 : 5;
  cfg.heads = 2;
  cfg.norm = Norm::ln;
  if (arch == Arch::graphmlp) {
    cfg.nc_layer = -2;
    cfg.nc_weight = 1.2;
    cfg.tau = 2.0;
    cfg.r = 2;
  }
  Rng init(7);
  ParamSet params = init_params(cfg, g.num_features(), g.num_classes, init);
  std::optional<Tensor> a_batch;
  if (arch == Arch::graphmlp) {
    std::vector<std::size_t> all(g.num_vertices);
    std::iota(all.begin(), all.end(), std::size_t{0});
    a_batch = batch_adjacency(adj_power(na.base, cfg.r), all);
  }
  std::vector<std::size_t> train{0, 2, 4, 6};
  auto fn = [&](const ParamSet& p, std::vector<double>* grad) {
    Rng r(0);
    Tape tape(r);
    ModelInputs in;
    in.features = features;
    in.prop = &na.base;
    in.attn = &attn;
    ForwardResult fwd = model_forward(tape, cfg, p, in, Mode::train);
    Var loss = tape.masked_cross_entropy(fwd.logits, g.labels, train);
    if (arch == Arch::graphmlp) {
      Var nc = tape.nc_loss(fwd.nc_embed, *a_batch, cfg.tau);
      loss = tape.add(loss, tape.scale(nc, cfg.nc_weight));
    }
    if (grad) {
      tape.backward(loss);
      *grad = collect_param_grads(tape, fwd.param_vars);
    }
    return tape.value(loss).data[0];
  };
  return grad_check(fn, params, 1e-5, 200, 17).max_rel_err;
}

void criterion5() {
  bool ok = true;
  std::string detail;

  for (Arch arch : {Arch::gcn, Arch::gat, Arch::graphmlp}) {
    const double err = model_grad_error(arch);
    const bool good = err < 1e-4;
    ok = ok && good;
    detail += to_string(arch) + " grad " + fmt(err * 1e6) + "e-6" +
              (good ? " " : " MISS ");
  }

  // neutral method parameters reproduce the baseline trajectory
  SynthSpec spec;
  spec.num_vertices = 120;
  spec.num_classes = 3;
  spec.num_features = 24;
  spec.prob_in = 0.08;
  spec.prob_out = 0.005;
  spec.seed = 42;
  Graph g = make_synthetic_graph(spec);
  Split split = generate_split(g, SplitKind::s622, 0);
  RunConfig cfg;
  cfg.model.num_layers = 2;
  cfg.model.hidden_dim = 16;
  cfg.model.model_dropout = 0.4;
  cfg.optimizer.lr = 0.01;
  cfg.optimizer.weight_decay = 5e-4;
  cfg.patience = 20;
  cfg.max_epochs = 150;
  TrainingSetup setup = build_setup(g, split, TrainMode::transductive, cfg.model);
  const RunResult base = train(setup, cfg, 21);

  auto check_neutral = [&](const char* name, const MethodConfig& m) {
    RunConfig c = cfg;
    c.method = m;
    const RunResult r = train(setup, c, 21);
    bool good = std::abs(r.final_test_metric - base.final_test_metric) < 1e-10;
    const std::size_t prefix = std::min(base.val_curve.size(), r.val_curve.size());
    for (std::size_t i = 0; i < prefix && good; ++i)
      good = std::abs(r.val_curve[i] - base.val_curve[i]) < 1e-10;
    good = good && r.val_curve.size() >= base.val_curve.size();
    ok = ok && good;
    detail += std::string(name) + (good ? " ok " : " MISS ");
  };
  {
    MethodConfig m;
    m.sharpness = SharpnessCfg{SharpnessKind::sam, AdvKind::sam, 0.0, 0.0};
    check_neutral("sam(0)", m);
  }
  {
    MethodConfig m;
    m.noise = NoiseCfg{0.0, 50};
    check_neutral("anti_pgd(0)", m);
  }
  {
    MethodConfig m;
    m.trajectory = SafCfg{0.0, 2.0, 5, 3};
    check_neutral("saf(0)", m);
  }
  {
    MethodConfig m;
    m.averaging = AveragingCfg{AveragingKind::ewa, 3, 1, 0.0};
    check_neutral("ewa(0)", m);
  }

  // gsam orthogonality and pgn boundaries
  {
    Rng rng(5);
    std::vector<double> gb(50), ga(50);
    for (double& v : gb) v = rng.normal();
    for (double& v : ga) v = rng.normal();
    const double na = nrm2(ga.data(), ga.size());
    for (double& v : ga) v /= na;
    const std::vector<double> out = gsam_combine(gb, ga, 0.7);
    std::vector<double> perp(50);
    for (std::size_t i = 0; i < 50; ++i) perp[i] = out[i] - ga[i];
    const double ip = std::abs(dot(perp.data(), ga.data(), 50));
    const bool orth = ip < 1e-10;
    const bool bounds =
        pgn_combine(gb, ga, 0.0) == gb && pgn_combine(gb, ga, 1.0) == ga;
    ok = ok && orth && bounds;
    detail += std::string("gsam-orth ") + (orth ? "ok " : "MISS ") +
              "pgn-bounds " + (bounds ? "ok " : "MISS ");
  }

  // swa replay, anti-pgd telescoping, saf kl sign
  {
    Rng rng(6);
    AveragerState st;
    st.kind = AveragingKind::swa;
    std::vector<std::vector<double>> snaps;
    for (int k = 0; k < 7; ++k) {
      std::vector<double> s(9);
      for (double& v : s) v = rng.normal();
      snaps.push_back(s);
      swa_accumulate(st, s);
    }
    std::vector<double> mean(9, 0.0);
    for (const auto& s : snaps) axpy(1.0, s.data(), mean.data(), 9);
    for (double& v : mean) v /= 7.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < 9; ++i)
      worst = std::max(worst, std::abs(st.avg[i] - mean[i]));
    const bool swa_ok = worst < 1e-12;

    NoiseState ns;
    ns.sigma = 0.2;
    ns.stop_epoch = 9;
    ns.xi_sum.assign(6, 0.0);
    Rng nrng(77);
    std::vector<double> total(6, 0.0);
    for (int e = 1; e <= 12; ++e) {
      const auto d = anti_pgd_delta(ns, e, nrng);
      if (!d.empty()) axpy(1.0, d.data(), total.data(), 6);
    }
    bool tele_ok = true;
    for (double v : total) tele_ok = tele_ok && v == 0.0;

    Rng krng(8);
    bool kl_ok = true;
    for (int it = 0; it < 20; ++it) {
      Tensor ref = Tensor::zeros({3, 4});
      Tensor cur = Tensor::zeros({3, 4});
      for (double& v : ref.data) v = krng.normal();
      for (double& v : cur.data) v = krng.normal();
      Rng r0(0);
      Tape t(r0);
      Var c = t.leaf(cur);
      kl_ok = kl_ok && t.value(t.kl_to_reference(c, ref, 2.0, 1.0)).data[0] >= 0.0;
      Var same = t.leaf(ref);
      kl_ok = kl_ok && t.value(t.kl_to_reference(same, ref, 2.0, 1.0)).data[0] == 0.0;
    }
    ok = ok && swa_ok && tele_ok && kl_ok;
    detail += std::string("swa-replay ") + (swa_ok ? "ok " : "MISS ") +
              "anti-pgd-telescope " + (tele_ok ? "ok " : "MISS ") + "saf-kl " +
              (kl_ok ? "ok " : "MISS ");
  }

  // determinism: bit-identical repeat with sharpness active
  {
    RunConfig c = cfg;
    c.method.sharpness = SharpnessCfg{SharpnessKind::sam, AdvKind::sam, 0.5, 0.0};
    const RunResult a = train(setup, c, 33);
    const RunResult b = train(setup, c, 33);
    const bool det = a.final_test_metric == b.final_test_metric &&
                     a.val_curve == b.val_curve && a.stop_epoch == b.stop_epoch;
    ok = ok && det;
    detail += std::string("determinism ") + (det ? "ok" : "MISS");
  }

  record("5 property suite", ok, detail);
}

// -- criterion 6: landscape export -------------------------------------------------

void criterion6(const std::optional<std::string>& data_root) {
  bool ok = true;
  std::string detail;

  SynthSpec spec;
  spec.num_vertices = 240;
  spec.num_classes = 3;
  spec.num_features = 30;
  spec.prob_in = 0.07;
  spec.prob_out = 0.004;
  spec.seed = 9;
  Graph g = make_synthetic_graph(spec);
  Split split = generate_split(g, SplitKind::ra_pl, 0);
  RunConfig cfg;
  cfg.model.num_layers = 2;
  cfg.model.hidden_dim = 12;
  cfg.model.model_dropout = 0.3;
  cfg.optimizer.lr = 0.01;
  cfg.patience = 25;
  cfg.max_epochs = 200;
  TrainingSetup setup = build_setup(g, split, TrainMode::transductive, cfg.model);
  ParamSet params;
  const RunResult r = train_with_params(setup, cfg, 4, &params);

  auto train_loss = [&](const ParamSet& p) {
    return classification_loss(cfg.model, p, *setup.train_view, setup.train_idx);
  };
  auto test_loss = [&](const ParamSet& p) {
    return classification_loss(cfg.model, p, *setup.test_view, setup.test_idx);
  };
  const std::vector<double> before = params.flatten();
  SurfaceSpec sspec;
  sspec.num_directions = 2;
  sspec.resolution = 5;
  sspec.direction_seed = 1;
  Surface surf = loss_surface(params, sspec, train_loss, test_loss);

  const double direct = train_loss(params);
  bool origin_ok = false;
  for (const SurfacePoint& pt : surf.points)
    if (pt.a == 0.0 && pt.b == 0.0)
      origin_ok = std::abs(pt.loss_train - direct) <= 1e-9 &&
                  std::abs(pt.loss_train - r.final_train_loss) <= 1e-9;
  const bool restored = params.flatten() == before;
  ok = ok && origin_ok && restored;
  detail += std::string("origin ") + (origin_ok ? "ok " : "MISS ") +
            "restoration " + (restored ? "exact " : "MISS ");

  auto surface_separates = [](const Surface& s) {
    for (const SurfacePoint& pt : s.points)
      if (!(pt.a == 0.0 && pt.b == 0.0) && pt.loss_train != pt.loss_test)
        return true;
    return false;
  };
  if (data_root) {
    ExperimentConfig ecfg = load_config("transductive/gcn_citeseer_planetoid.json");
    Graph cg = load_dataset(ecfg.dataset_path);
    Split csplit = ecfg.resolve_split(cg);
    TrainingSetup csetup = build_setup(cg, csplit, ecfg.run.mode, ecfg.run.model);
    ParamSet cparams;
    train_with_params(csetup, ecfg.run, 0, &cparams);
    auto ctr = [&](const ParamSet& p) {
      return classification_loss(ecfg.run.model, p, *csetup.train_view,
                                 csetup.train_idx);
    };
    auto cte = [&](const ParamSet& p) {
      return classification_loss(ecfg.run.model, p, *csetup.test_view,
                                 csetup.test_idx);
    };
    Surface cs = loss_surface(cparams, sspec, ctr, cte);
    const bool sep = surface_separates(cs);
    ok = ok && sep;
    detail += std::string("citeseer train!=test ") + (sep ? "ok" : "MISS");
  } else {
    const bool sep = surface_separates(surf);
    detail += std::string("train!=test on the synthetic stand-in ") +
              (sep ? "holds" : "MISS") + "; the citeseer check needs the dataset";
    ok = false;  // the named check cannot run without the data
  }
  record("6 landscape export", ok, detail);
}

void criterion7() {
  record("7 out-of-scope declaration", true,
         "ogbn-arXiv and PPI columns ship as documented defaults only "
         "(configs/README.md); their method implementations are covered by "
         "criteria 2-5");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) g_jobs = std::max(1, std::atoi(argv[1]));
  const std::optional<std::string> data_root = find_data_root();
  std::cout << "acceptance: datasets "
            << (data_root ? "found at " + *data_root
                          : std::string("not found (quantitative criteria will "
                                        "fail; see README)"))
            << ", jobs " << g_jobs << "\n";

  criterion4(data_root);
  criterion5();
  criterion6(data_root);
  criterion7();
  criterion1(data_root);
  criterion23(data_root);

  std::size_t failed = 0;
  for (const CriterionResult& r : g_results)
    if (!r.pass) ++failed;
  if (failed == 0)
    std::cout << "acceptance: all criteria passed\n";
  else
    std::cout << "acceptance: " << failed << " criteria failed\n";
  return failed == 0 ? 0 : 1;
}
