#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fg/tensor.hpp"

namespace fg {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Flat, ordered collection of named weight tensors. Ordering is fixed at
// construction and is the layout every flat-minima method operates on.
class ParamSet {
 public:
  void add(std::string name, Tensor t);

  std::size_t count() const { return items_.size(); }
  const NamedTensor& item(std::size_t i) const { return items_[i]; }
  NamedTensor& item(std::size_t i) { return items_[i]; }
  const Tensor& tensor(const std::string& name) const;

  std::size_t total_elems() const;

  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& flat);

  // Single-file checkpoint: one JSON manifest line (names and shapes in
  // order), then the little-endian float64 flat buffer in manifest order.
  void save(const std::string& path) const;
  static ParamSet load(const std::string& path);

 private:
  std::vector<NamedTensor> items_;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
};

// loss_fn must be deterministic (dropout off or rng pinned by the caller).
// When grad is non-null the function also writes the analytic gradient in
// flat layout. Central differences with the given step; relative error is
// |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
using LossGradFn =
    std::function<double(const ParamSet& params, std::vector<double>* grad)>;

GradCheckResult grad_check(const LossGradFn& loss_fn, ParamSet& params,
                           double step, std::size_t max_coords,
                           std::uint64_t seed);

}  // namespace fg
