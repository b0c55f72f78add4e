#include "fg/landscape.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "fg/linalg.hpp"

namespace fg {

void SurfaceSpec::validate() const {
  if (num_directions != 1 && num_directions != 2)
    throw ConfigError("surface: directions must be 1 or 2");
  if (resolution < 3) throw ConfigError("surface: resolution must be >= 3");
  if (!(lo < 0.0 && 0.0 < hi)) throw ConfigError("surface: range must straddle 0");
}

std::vector<std::vector<double>> make_directions(const ParamSet& params,
                                                 const SurfaceSpec& spec) {
  spec.validate();
  Rng rng(Rng::derive(spec.direction_seed, 0x646972ULL));
  std::vector<std::vector<double>> dirs;
  for (int d = 0; d < spec.num_directions; ++d) {
    std::vector<double> dir(params.total_elems());
    for (double& v : dir) v = rng.normal();
    // filter normalization: match each tensor's norm to the parameter tensor
    std::size_t at = 0;
    for (std::size_t i = 0; i < params.count(); ++i) {
      const std::size_t n = params.item(i).tensor.numel();
      const double pn = nrm2(params.item(i).tensor.data.data(), n);
      const double dn = nrm2(dir.data() + at, n);
      const double s = dn > 0.0 ? pn / dn : 0.0;
      for (std::size_t j = 0; j < n; ++j) dir[at + j] *= s;
      at += n;
    }
    dirs.push_back(std::move(dir));
  }
  if (dirs.size() == 2) {
    const double denom = dot(dirs[0].data(), dirs[0].data(), dirs[0].size());
    if (denom > 0.0) {
      const double proj =
          dot(dirs[1].data(), dirs[0].data(), dirs[0].size()) / denom;
      for (std::size_t i = 0; i < dirs[1].size(); ++i)
        dirs[1][i] -= proj * dirs[0][i];
    }
  }
  return dirs;
}

Surface loss_surface(ParamSet& params, const SurfaceSpec& spec,
                     const PointLossFn& train_loss, const PointLossFn& test_loss) {
  spec.validate();
  const std::vector<std::vector<double>> dirs = make_directions(params, spec);
  const std::vector<double> origin = params.flatten();

  Surface out;
  out.spec = spec;
  std::vector<double> shifted(origin.size());
  auto coord = [&](int i) {
    return spec.lo + (spec.hi - spec.lo) * static_cast<double>(i) /
                         static_cast<double>(spec.resolution - 1);
  };
  auto guarded = [](const PointLossFn& f, const ParamSet& p) {
    double loss;
    try {
      loss = f(p);
    } catch (const NumericError&) {
      loss = std::numeric_limits<double>::infinity();
    }
    return std::isfinite(loss) ? loss : std::numeric_limits<double>::infinity();
  };
  auto eval_point = [&](double a, double b) {
    SurfacePoint pt;
    pt.a = a;
    pt.b = b;
    if (a == 0.0 && b == 0.0) {
      // the center point is the model itself, bit-exact
      params.unflatten(origin);
    } else {
      for (std::size_t i = 0; i < origin.size(); ++i) {
        double v = origin[i] + a * dirs[0][i];
        if (spec.num_directions == 2) v += b * dirs[1][i];
        shifted[i] = v;
      }
      params.unflatten(shifted);
    }
    pt.loss_train = guarded(train_loss, params);
    pt.loss_test = guarded(test_loss, params);
    return pt;
  };

  for (int ia = 0; ia < spec.resolution; ++ia) {
    if (spec.num_directions == 1) {
      out.points.push_back(eval_point(coord(ia), 0.0));
    } else {
      for (int ib = 0; ib < spec.resolution; ++ib)
        out.points.push_back(eval_point(coord(ia), coord(ib)));
    }
  }
  params.unflatten(origin);  // exact restoration
  return out;
}

void write_surface_csv(const Surface& surface, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write surface csv: " + path);
  const bool two = surface.spec.num_directions == 2;
  out << (two ? "a,b,loss_train,loss_test\n" : "a,loss_train,loss_test\n");
  char buf[128];
  for (const SurfacePoint& p : surface.points) {
    if (two)
      std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g\n", p.a, p.b,
                    p.loss_train, p.loss_test);
    else
      std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g\n", p.a, p.loss_train,
                    p.loss_test);
    out << buf;
  }
  if (!out) throw DataError("surface csv write failed: " + path);
}

}  // namespace fg
