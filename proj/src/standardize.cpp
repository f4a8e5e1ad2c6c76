#include "stdde/standardize.hpp"

#include <cmath>

#include "stdde/error.hpp"

namespace stdde {

Standardizer fit_standardizer(const Eigen::MatrixXd& series) {
  if (series.size() == 0) throw InputError("cannot standardize an empty series");
  Standardizer s;
  s.mean = series.mean();
  const double var = (series.array() - s.mean).square().mean();
  s.std = std::sqrt(var);
  if (!(s.std > 0.0)) {
    s.std = 1.0;
    s.zero_variance = true;
  }
  return s;
}

Standardized standardize(const Eigen::MatrixXd& series, const Standardizer* stats) {
  if (series.size() == 0) throw InputError("cannot standardize an empty series");
  Standardized out;
  out.stats = stats != nullptr ? *stats : fit_standardizer(series);
  out.values = out.stats.apply(series);
  return out;
}

}  // namespace stdde
