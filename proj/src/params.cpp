#include "fg/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "fg/rng.hpp"

namespace fg {

void ParamSet::add(std::string name, Tensor t) {
  for (const auto& it : items_)
    if (it.name == name) throw ConfigError("duplicate parameter name: " + name);
  items_.push_back(NamedTensor{std::move(name), std::move(t)});
}

const Tensor& ParamSet::tensor(const std::string& name) const {
  for (const auto& it : items_)
    if (it.name == name) return it.tensor;
  throw ConfigError("unknown parameter name: " + name);
}

std::size_t ParamSet::total_elems() const {
  std::size_t n = 0;
  for (const auto& it : items_) n += it.tensor.numel();
  return n;
}

std::vector<double> ParamSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_elems());
  for (const auto& it : items_)
    flat.insert(flat.end(), it.tensor.data.begin(), it.tensor.data.end());
  return flat;
}

void ParamSet::unflatten(const std::vector<double>& flat) {
  if (flat.size() != total_elems())
    throw ShapeError("unflatten: flat length does not match parameter count");
  std::size_t at = 0;
  for (auto& it : items_) {
    std::copy(flat.begin() + at, flat.begin() + at + it.tensor.numel(),
              it.tensor.data.begin());
    at += it.tensor.numel();
  }
}

void ParamSet::save(const std::string& path) const {
  nlohmann::json manifest;
  manifest["params"] = nlohmann::json::array();
  for (const auto& it : items_) {
    nlohmann::json p;
    p["name"] = it.name;
    p["shape"] = it.tensor.shape;
    manifest["params"].push_back(p);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out << manifest.dump() << "\n";
  for (const auto& it : items_)
    out.write(reinterpret_cast<const char*>(it.tensor.data.data()),
              static_cast<std::streamsize>(it.tensor.data.size() * sizeof(double)));
  if (!out) throw DataError("checkpoint write failed: " + path);
}

ParamSet ParamSet::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("checkpoint missing manifest: " + path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    throw DataError("checkpoint manifest parse error in " + path + ": " + e.what());
  }
  ParamSet out;
  for (const auto& p : manifest.at("params")) {
    std::vector<std::size_t> shape = p.at("shape").get<std::vector<std::size_t>>();
    Tensor t = Tensor::zeros(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw DataError("checkpoint truncated: " + path);
    out.add(p.at("name").get<std::string>(), std::move(t));
  }
  return out;
}

GradCheckResult grad_check(const LossGradFn& loss_fn, ParamSet& params,
                           double step, std::size_t max_coords,
                           std::uint64_t seed) {
  std::vector<double> analytic;
  const double base = loss_fn(params, &analytic);
  if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss");
  const std::size_t total = params.total_elems();
  if (analytic.size() != total)
    throw ShapeError("grad_check: gradient length mismatch");

  std::vector<std::size_t> coords(total);
  for (std::size_t i = 0; i < total; ++i) coords[i] = i;
  if (max_coords < total) {
    Rng rng(seed);
    rng.shuffle(coords);
    coords.resize(max_coords);
  }

  std::vector<double> flat = params.flatten();
  GradCheckResult res;
  for (std::size_t c : coords) {
    const double keep = flat[c];
    flat[c] = keep + step;
    params.unflatten(flat);
    const double up = loss_fn(params, nullptr);
    flat[c] = keep - step;
    params.unflatten(flat);
    const double down = loss_fn(params, nullptr);
    flat[c] = keep;
    const double numeric = (up - down) / (2.0 * step);
    const double rel = std::abs(analytic[c] - numeric) /
                       (std::abs(analytic[c]) + std::abs(numeric) + 1e-12);
    res.max_rel_err = std::max(res.max_rel_err, rel);
    ++res.coords_checked;
  }
  params.unflatten(flat);
  return res;
}

}  // namespace fg
