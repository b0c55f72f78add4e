#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fg/params.hpp"
#include "fg/rng.hpp"

namespace fg {

// Loss surface along one or two filter-normalized random directions: each
// direction tensor is rescaled to the norm of the matching parameter tensor,
// and the second direction is orthogonalized against the first.

struct SurfaceSpec {
  int num_directions = 2;  // 1 or 2
  double lo = -1.0;
  double hi = 1.0;
  int resolution = 41;  // grid points per axis
  std::uint64_t direction_seed = 0;

  void validate() const;
};

struct SurfacePoint {
  double a = 0.0;
  double b = 0.0;  // unused for 1-D
  double loss_train = 0.0;
  double loss_test = 0.0;
};

struct Surface {
  SurfaceSpec spec;
  std::vector<SurfacePoint> points;  // row-major over (a, b)
};

using PointLossFn = std::function<double(const ParamSet&)>;

// Directions in flat layout, filter-normalized per named tensor.
std::vector<std::vector<double>> make_directions(const ParamSet& params,
                                                 const SurfaceSpec& spec);

// Evaluates train/test losses on the displaced parameter grid; params are
// bit-identical afterwards, and non-finite losses are recorded as +inf.
Surface loss_surface(ParamSet& params, const SurfaceSpec& spec,
                     const PointLossFn& train_loss, const PointLossFn& test_loss);

// CSV with columns a[,b],loss_train,loss_test; 9 significant digits.
void write_surface_csv(const Surface& surface, const std::string& path);

}  // namespace fg
