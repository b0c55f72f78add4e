#include "fg/datasets.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fg/rng.hpp"

namespace fg {

SplitKind split_kind_from_string(const std::string& s) {
  if (s == "planetoid") return SplitKind::planetoid;
  if (s == "ra_pl" || s == "ra-pl") return SplitKind::ra_pl;
  if (s == "s622" || s == "622") return SplitKind::s622;
  throw ConfigError("unknown split kind: " + s);
}

std::string to_string(SplitKind k) {
  switch (k) {
    case SplitKind::planetoid: return "planetoid";
    case SplitKind::ra_pl: return "ra_pl";
    default: return "s622";
  }
}

void Split::validate(std::size_t num_vertices) const {
  std::vector<char> seen(num_vertices, 0);
  auto check = [&](const std::vector<std::size_t>& part, const char* name) {
    for (std::size_t i = 0; i < part.size(); ++i) {
      if (part[i] >= num_vertices)
        throw DataError(std::string("split: ") + name + " index out of range");
      if (i > 0 && part[i] <= part[i - 1])
        throw DataError(std::string("split: ") + name + " not sorted/unique");
      if (seen[part[i]])
        throw DataError(std::string("split: overlapping index in ") + name);
      seen[part[i]] = 1;
    }
  };
  check(train, "train");
  check(val, "val");
  check(test, "test");
}

namespace {

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw DataError("json parse error in " + path + ": " + e.what());
  }
}

}  // namespace

Graph load_dataset(const std::string& dir) {
  const nlohmann::json meta = read_json_file(dir + "/meta.json");
  Graph g;
  try {
    g.num_vertices = meta.at("num_vertices").get<std::size_t>();
    g.num_classes = meta.at("num_classes").get<std::size_t>();
    g.multilabel = meta.at("multilabel").get<bool>();
  } catch (const std::exception& e) {
    throw DataError(dir + "/meta.json: " + e.what());
  }
  const std::size_t f = meta.at("num_features").get<std::size_t>();

  {
    std::ifstream in(dir + "/features.f64", std::ios::binary);
    if (!in) throw DataError("cannot open " + dir + "/features.f64");
    g.features = Tensor::zeros({g.num_vertices, f});
    in.read(reinterpret_cast<char*>(g.features.data.data()),
            static_cast<std::streamsize>(g.features.data.size() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) !=
        g.features.data.size() * sizeof(double))
      throw DataError(dir + "/features.f64: expected " +
                      std::to_string(g.features.data.size() * sizeof(double)) +
                      " bytes");
    char extra;
    if (in.read(&extra, 1))
      throw DataError(dir + "/features.f64: trailing bytes beyond N*F values");
  }

  {
    std::ifstream in(dir + "/edges.tsv");
    if (!in) throw DataError("cannot open " + dir + "/edges.tsv");
    std::vector<std::size_t> rr, cc;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream ls(line);
      long long s = -1, d = -1;
      if (!(ls >> s >> d) || s < 0 || d < 0)
        throw DataError(dir + "/edges.tsv:" + std::to_string(lineno) +
                        ": malformed edge line");
      std::string rest;
      if (ls >> rest)
        throw DataError(dir + "/edges.tsv:" + std::to_string(lineno) +
                        ": trailing tokens");
      const auto ss = static_cast<std::size_t>(s);
      const auto dd = static_cast<std::size_t>(d);
      if (ss >= g.num_vertices || dd >= g.num_vertices)
        throw DataError(dir + "/edges.tsv:" + std::to_string(lineno) +
                        ": vertex id out of range");
      if (ss == dd) continue;  // self edges are added by normalization
      rr.push_back(ss);
      cc.push_back(dd);
      rr.push_back(dd);
      cc.push_back(ss);
    }
    std::vector<double> vv(rr.size(), 1.0);
    g.adj = CsrMatrix::from_triples(g.num_vertices, g.num_vertices, std::move(rr),
                                    std::move(cc), std::move(vv));
    for (double& v : g.adj.values) v = 1.0;  // duplicates collapse to weight 1
  }

  {
    std::ifstream in(dir + "/labels.txt");
    if (!in) throw DataError("cannot open " + dir + "/labels.txt");
    std::string line;
    std::size_t lineno = 0;
    if (g.multilabel) g.label_matrix = Tensor::zeros({g.num_vertices, g.num_classes});
    while (std::getline(in, line)) {
      ++lineno;
      if (lineno > g.num_vertices)
        throw DataError(dir + "/labels.txt:" + std::to_string(lineno) +
                        ": more lines than vertices");
      std::istringstream ls(line);
      if (g.multilabel) {
        long long y;
        while (ls >> y) {
          if (y < 0 || static_cast<std::size_t>(y) >= g.num_classes)
            throw DataError(dir + "/labels.txt:" + std::to_string(lineno) +
                            ": label out of range");
          g.label_matrix.at(lineno - 1, static_cast<std::size_t>(y)) = 1.0;
        }
        if (ls.fail() && !ls.eof())
          throw DataError(dir + "/labels.txt:" + std::to_string(lineno) +
                          ": malformed label token");
      } else {
        long long y = -1;
        if (!(ls >> y) || y < 0 || static_cast<std::size_t>(y) >= g.num_classes)
          throw DataError(dir + "/labels.txt:" + std::to_string(lineno) +
                          ": label out of range");
        g.labels.push_back(static_cast<int>(y));
      }
    }
    const std::size_t have = g.multilabel ? lineno : g.labels.size();
    if (have != g.num_vertices)
      throw DataError(dir + "/labels.txt: expected " +
                      std::to_string(g.num_vertices) + " lines, got " +
                      std::to_string(have));
  }

  g.validate();
  return g;
}

void write_dataset(const std::string& dir, const Graph& g) {
  {
    nlohmann::json meta;
    meta["num_vertices"] = g.num_vertices;
    meta["num_features"] = g.num_features();
    meta["num_classes"] = g.num_classes;
    meta["multilabel"] = g.multilabel;
    std::ofstream out(dir + "/meta.json");
    if (!out) throw DataError("cannot write " + dir + "/meta.json");
    out << meta.dump() << "\n";
  }
  {
    std::ofstream out(dir + "/features.f64", std::ios::binary);
    out.write(reinterpret_cast<const char*>(g.features.data.data()),
              static_cast<std::streamsize>(g.features.data.size() * sizeof(double)));
    if (!out) throw DataError("cannot write " + dir + "/features.f64");
  }
  {
    std::ofstream out(dir + "/edges.tsv");
    for (std::size_t r = 0; r < g.num_vertices; ++r)
      for (std::size_t e = g.adj.row_ptr[r]; e < g.adj.row_ptr[r + 1]; ++e)
        if (g.adj.col_idx[e] > r) out << r << "\t" << g.adj.col_idx[e] << "\n";
    if (!out) throw DataError("cannot write " + dir + "/edges.tsv");
  }
  {
    std::ofstream out(dir + "/labels.txt");
    for (std::size_t i = 0; i < g.num_vertices; ++i) {
      if (g.multilabel) {
        bool first = true;
        for (std::size_t c = 0; c < g.num_classes; ++c)
          if (g.label_matrix.at(i, c) != 0.0) {
            if (!first) out << " ";
            out << c;
            first = false;
          }
      } else {
        out << g.labels[i];
      }
      out << "\n";
    }
    if (!out) throw DataError("cannot write " + dir + "/labels.txt");
  }
}

Split generate_split(const Graph& g, SplitKind kind, std::uint64_t seed) {
  if (kind == SplitKind::planetoid)
    throw ConfigError("planetoid splits are fixed files, not generated");
  Rng rng(Rng::derive(seed, kind == SplitKind::ra_pl ? 0x7261706cULL : 0x363232ULL));
  Split split;
  split.kind = kind;
  split.seed = seed;

  if (kind == SplitKind::ra_pl) {
    if (g.multilabel)
      throw ConfigError("ra_pl split needs single-label classes");
    std::vector<std::vector<std::size_t>> by_class(g.num_classes);
    for (std::size_t i = 0; i < g.num_vertices; ++i)
      by_class[static_cast<std::size_t>(g.labels[i])].push_back(i);
    std::vector<char> taken(g.num_vertices, 0);
    for (std::size_t c = 0; c < g.num_classes; ++c) {
      if (by_class[c].size() < 50)
        throw ConfigError("ra_pl split: class " + std::to_string(c) + " has " +
                          std::to_string(by_class[c].size()) +
                          " vertices, needs at least 50");
      rng.shuffle(by_class[c]);
      for (std::size_t i = 0; i < 20; ++i) {
        split.train.push_back(by_class[c][i]);
        taken[by_class[c][i]] = 1;
      }
      for (std::size_t i = 20; i < 50; ++i) {
        split.val.push_back(by_class[c][i]);
        taken[by_class[c][i]] = 1;
      }
    }
    for (std::size_t i = 0; i < g.num_vertices; ++i)
      if (!taken[i]) split.test.push_back(i);
  } else {
    std::vector<std::size_t> order(g.num_vertices);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    const std::size_t n_train = (g.num_vertices * 6) / 10;
    const std::size_t n_val = (g.num_vertices * 2) / 10;
    split.train.assign(order.begin(), order.begin() + n_train);
    split.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    split.test.assign(order.begin() + n_train + n_val, order.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  split.validate(g.num_vertices);
  return split;
}

Split load_split(const std::string& path, const Graph& g) {
  const nlohmann::json j = read_json_file(path);
  Split split;
  try {
    split.kind = split_kind_from_string(j.at("kind").get<std::string>());
    split.seed = j.value("seed", std::uint64_t{0});
    split.train = j.at("train").get<std::vector<std::size_t>>();
    split.val = j.at("val").get<std::vector<std::size_t>>();
    split.test = j.at("test").get<std::vector<std::size_t>>();
  } catch (const std::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  split.validate(g.num_vertices);
  return split;
}

void save_split(const std::string& path, const Split& split) {
  nlohmann::json j;
  j["kind"] = to_string(split.kind);
  j["seed"] = split.seed;
  j["train"] = split.train;
  j["val"] = split.val;
  j["test"] = split.test;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write split file " + path);
  out << j.dump() << "\n";
}

Split load_planetoid_split(const std::string& path, const Graph& g) {
  Split split = load_split(path, g);
  if (split.kind != SplitKind::planetoid)
    throw DataError(path + ": split kind is not planetoid");
  if (split.train.size() != 20 * g.num_classes)
    throw DataError(path + ": planetoid train size must be 20 per class, got " +
                    std::to_string(split.train.size()));
  if (split.val.size() != 500)
    throw DataError(path + ": planetoid validation size must be 500");
  if (split.test.size() != 1000)
    throw DataError(path + ": planetoid test size must be 1000");
  return split;
}

}  // namespace fg
