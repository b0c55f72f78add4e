#include "fg/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

namespace fg {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
}

double need_num(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key \"" + key + "\"");
  if (!j.at(key).is_number()) throw ConfigError(where + "." + key + ": expected a number");
  return j.at(key).get<double>();
}

int need_int(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key \"" + key + "\"");
  if (!j.at(key).is_number_integer())
    throw ConfigError(where + "." + key + ": expected an integer");
  return j.at(key).get<int>();
}

AdvKind parse_adv(const json& j, const std::string& where) {
  const std::string s = j.is_string() ? j.get<std::string>() : "";
  if (s == "sam") return AdvKind::sam;
  if (s == "asam") return AdvKind::asam;
  throw ConfigError(where + ".adv: expected \"sam\" or \"asam\"");
}

}  // namespace

MethodConfig parse_method_config(const nlohmann::json& j) {
  reject_unknown(j,
                 {"sam", "asam", "pgn", "gsam", "swa", "ewa", "anti_pgd", "saf",
                  "shared_masks"},
                 "method");
  MethodConfig m;
  m.shared_masks = j.value("shared_masks", true);

  const bool has_sam = j.contains("sam");
  const bool has_asam = j.contains("asam");
  const bool has_pgn = j.contains("pgn");
  const bool has_gsam = j.contains("gsam");
  if (has_pgn && has_gsam)
    throw ConfigError("method: pgn and gsam cannot both be configured");
  if (has_sam && has_asam && !has_pgn && !has_gsam)
    throw ConfigError("method: sam and asam cannot both be configured");

  double sam_rho = 0.0, asam_rho = 0.0;
  if (has_sam) {
    reject_unknown(j.at("sam"), {"rho"}, "method.sam");
    sam_rho = need_num(j.at("sam"), "rho", "method.sam");
  }
  if (has_asam) {
    reject_unknown(j.at("asam"), {"rho"}, "method.asam");
    asam_rho = need_num(j.at("asam"), "rho", "method.asam");
  }

  if (has_pgn || has_gsam) {
    const json& stage = has_pgn ? j.at("pgn") : j.at("gsam");
    const std::string where = has_pgn ? "method.pgn" : "method.gsam";
    reject_unknown(stage, {"alpha", "adv"}, where);
    SharpnessCfg s;
    s.kind = has_pgn ? SharpnessKind::pgn : SharpnessKind::gsam;
    s.alpha = need_num(stage, "alpha", where);
    s.adv = stage.contains("adv") ? parse_adv(stage.at("adv"), where) : AdvKind::sam;
    if (s.adv == AdvKind::sam) {
      if (!has_sam) throw ConfigError(where + ": needs sam.rho for the adversarial step");
      if (has_asam) throw ConfigError("method.asam: unused entry (adv is sam)");
      s.rho = sam_rho;
    } else {
      if (!has_asam) throw ConfigError(where + ": needs asam.rho for the adversarial step");
      if (has_sam) throw ConfigError("method.sam: unused entry (adv is asam)");
      s.rho = asam_rho;
    }
    m.sharpness = s;
  } else if (has_sam) {
    m.sharpness = SharpnessCfg{SharpnessKind::sam, AdvKind::sam, sam_rho, 0.0};
  } else if (has_asam) {
    m.sharpness = SharpnessCfg{SharpnessKind::asam, AdvKind::asam, asam_rho, 0.0};
  }

  if (j.contains("swa") && j.contains("ewa"))
    throw ConfigError("method: swa and ewa cannot both be configured");
  if (j.contains("swa")) {
    reject_unknown(j.at("swa"), {"begin", "end"}, "method.swa");
    AveragingCfg a;
    a.kind = AveragingKind::swa;
    a.begin = need_int(j.at("swa"), "begin", "method.swa");
    a.end = need_int(j.at("swa"), "end", "method.swa");
    m.averaging = a;
  }
  if (j.contains("ewa")) {
    reject_unknown(j.at("ewa"), {"begin", "end", "alpha"}, "method.ewa");
    AveragingCfg a;
    a.kind = AveragingKind::ewa;
    a.begin = need_int(j.at("ewa"), "begin", "method.ewa");
    a.end = need_int(j.at("ewa"), "end", "method.ewa");
    a.alpha = need_num(j.at("ewa"), "alpha", "method.ewa");
    m.averaging = a;
  }
  if (j.contains("anti_pgd")) {
    reject_unknown(j.at("anti_pgd"), {"sigma", "stop_epoch"}, "method.anti_pgd");
    NoiseCfg n;
    n.sigma = need_num(j.at("anti_pgd"), "sigma", "method.anti_pgd");
    n.stop_epoch = need_int(j.at("anti_pgd"), "stop_epoch", "method.anti_pgd");
    m.noise = n;
  }
  if (j.contains("saf")) {
    reject_unknown(j.at("saf"), {"lambda", "tau", "start_epoch", "gap"}, "method.saf");
    SafCfg s;
    s.lambda = need_num(j.at("saf"), "lambda", "method.saf");
    s.tau = need_num(j.at("saf"), "tau", "method.saf");
    s.start_epoch = j.at("saf").value("start_epoch", 5);
    s.gap = j.at("saf").value("gap", 3);
    m.trajectory = s;
  }
  m.validate();
  return m;
}

nlohmann::json method_config_to_json(const MethodConfig& m) {
  json j = json::object();
  if (m.sharpness) {
    const SharpnessCfg& s = *m.sharpness;
    const bool asam_adv = s.adv == AdvKind::asam;
    switch (s.kind) {
      case SharpnessKind::sam: j["sam"] = {{"rho", s.rho}}; break;
      case SharpnessKind::asam: j["asam"] = {{"rho", s.rho}}; break;
      case SharpnessKind::pgn:
        j["pgn"] = {{"alpha", s.alpha}, {"adv", asam_adv ? "asam" : "sam"}};
        j[asam_adv ? "asam" : "sam"] = {{"rho", s.rho}};
        break;
      case SharpnessKind::gsam:
        j["gsam"] = {{"alpha", s.alpha}, {"adv", asam_adv ? "asam" : "sam"}};
        j[asam_adv ? "asam" : "sam"] = {{"rho", s.rho}};
        break;
    }
  }
  if (m.averaging) {
    const AveragingCfg& a = *m.averaging;
    if (a.kind == AveragingKind::swa)
      j["swa"] = {{"begin", a.begin}, {"end", a.end}};
    else
      j["ewa"] = {{"begin", a.begin}, {"end", a.end}, {"alpha", a.alpha}};
  }
  if (m.noise)
    j["anti_pgd"] = {{"sigma", m.noise->sigma}, {"stop_epoch", m.noise->stop_epoch}};
  if (m.trajectory)
    j["saf"] = {{"lambda", m.trajectory->lambda},
                {"tau", m.trajectory->tau},
                {"start_epoch", m.trajectory->start_epoch},
                {"gap", m.trajectory->gap}};
  if (!m.shared_masks) j["shared_masks"] = false;
  return j;
}

namespace {

ModelConfig parse_model(const json& j) {
  reject_unknown(j,
                 {"arch", "num_layers", "hidden_dim", "norm", "residual",
                  "input_dropout", "model_dropout", "attn_dropout", "heads",
                  "nc_layer", "nc_weight", "tau", "r", "batch_fraction"},
                 "model");
  ModelConfig m;
  if (!j.contains("arch")) throw ConfigError("model: missing key \"arch\"");
  m.arch = arch_from_string(j.at("arch").get<std::string>());
  m.num_layers = need_int(j, "num_layers", "model");
  m.hidden_dim = need_int(j, "hidden_dim", "model");
  m.norm = norm_from_string(j.value("norm", "id"));
  m.residual = j.value("residual", false);
  m.input_dropout = j.value("input_dropout", 0.0);
  m.model_dropout = j.value("model_dropout", 0.0);
  m.attn_dropout = j.value("attn_dropout", 0.0);
  m.heads = j.value("heads", 8);
  m.nc_layer = j.value("nc_layer", -2);
  m.nc_weight = j.value("nc_weight", 1.0);
  m.tau = j.value("tau", 1.0);
  m.r = j.value("r", 2);
  m.batch_fraction = j.value("batch_fraction", 1.0);
  m.validate();
  return m;
}

std::vector<std::uint64_t> parse_seeds(const json& j) {
  std::vector<std::uint64_t> seeds;
  if (j.is_array()) {
    for (const auto& v : j) seeds.push_back(v.get<std::uint64_t>());
  } else if (j.is_object()) {
    reject_unknown(j, {"from", "to"}, "seeds");
    const std::uint64_t from = j.at("from").get<std::uint64_t>();
    const std::uint64_t to = j.at("to").get<std::uint64_t>();
    if (to < from) throw ConfigError("seeds: to must be >= from");
    for (std::uint64_t s = from; s <= to; ++s) seeds.push_back(s);
  } else {
    throw ConfigError("seeds: expected an array or {from,to}");
  }
  if (seeds.empty()) throw ConfigError("seeds: empty seed list");
  std::set<std::uint64_t> uniq(seeds.begin(), seeds.end());
  if (uniq.size() != seeds.size()) throw ConfigError("seeds: duplicate seed");
  return seeds;
}

std::string resolve_dataset(const std::string& value, const fs::path& base) {
  const fs::path direct(value);
  if (fs::is_directory(direct)) return direct.string();
  if (direct.is_relative()) {
    const fs::path rel = base / direct;
    if (fs::is_directory(rel)) return rel.string();
  }
  if (const char* root = std::getenv("FLATGRAPH_DATA")) {
    const fs::path env = fs::path(root) / value;
    if (fs::is_directory(env)) return env.string();
  }
  throw DataError("dataset directory not found: " + value +
                  " (also tried config dir and $FLATGRAPH_DATA)");
}

}  // namespace

Split ExperimentConfig::resolve_split(const Graph& g) const {
  if (split_file) {
    Split s = load_split(*split_file, g);
    if (s.kind == SplitKind::planetoid) return load_planetoid_split(*split_file, g);
    return s;
  }
  return generate_split(g, *split_kind, split_seed);
}

ExperimentConfig parse_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  reject_unknown(j,
                 {"dataset", "split", "mode", "model", "method", "optimizer",
                  "trainer", "seeds", "output"},
                 "config");
  const fs::path base = fs::path(path).parent_path();

  ExperimentConfig cfg;
  if (!j.contains("dataset")) throw ConfigError("config: missing key \"dataset\"");
  cfg.dataset_path = resolve_dataset(j.at("dataset").get<std::string>(), base);
  cfg.dataset_name = fs::path(cfg.dataset_path).filename().string();

  if (!j.contains("split")) throw ConfigError("config: missing key \"split\"");
  const json& sp = j.at("split");
  if (sp.contains("file")) {
    reject_unknown(sp, {"file"}, "split");
    fs::path f(sp.at("file").get<std::string>());
    if (f.is_relative() && !fs::exists(f)) {
      if (fs::exists(base / f)) {
        f = base / f;
      } else if (const char* root = std::getenv("FLATGRAPH_DATA")) {
        if (fs::exists(fs::path(root) / f)) f = fs::path(root) / f;
      }
    }
    cfg.split_file = f.string();
  } else {
    reject_unknown(sp, {"kind", "seed"}, "split");
    cfg.split_kind = split_kind_from_string(sp.at("kind").get<std::string>());
    if (*cfg.split_kind == SplitKind::planetoid)
      throw ConfigError("split: planetoid needs a file reference");
    cfg.split_seed = sp.value("seed", std::uint64_t{0});
  }

  cfg.run.mode = train_mode_from_string(j.value("mode", "transductive"));
  if (!j.contains("model")) throw ConfigError("config: missing key \"model\"");
  cfg.run.model = parse_model(j.at("model"));
  cfg.run.method = j.contains("method") ? parse_method_config(j.at("method"))
                                        : MethodConfig{};

  if (!j.contains("optimizer")) throw ConfigError("config: missing key \"optimizer\"");
  reject_unknown(j.at("optimizer"), {"lr", "weight_decay"}, "optimizer");
  cfg.run.optimizer.lr = need_num(j.at("optimizer"), "lr", "optimizer");
  cfg.run.optimizer.weight_decay = j.at("optimizer").value("weight_decay", 0.0);

  if (j.contains("trainer")) {
    reject_unknown(j.at("trainer"), {"patience", "max_epochs", "max_retries"},
                   "trainer");
    cfg.run.patience = j.at("trainer").value("patience", 100);
    cfg.run.max_epochs = j.at("trainer").value("max_epochs", 20000);
    cfg.run.max_retries = j.at("trainer").value("max_retries", 3);
  }

  if (!j.contains("seeds")) throw ConfigError("config: missing key \"seeds\"");
  cfg.seeds = parse_seeds(j.at("seeds"));

  cfg.output_prefix = j.value("output", "results/run");
  cfg.run.validate();
  return cfg;
}

}  // namespace fg
