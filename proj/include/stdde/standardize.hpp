#pragma once

#include <Eigen/Dense>

namespace stdde {

/// Global (all nodes pooled) population mean/std scaler.
struct Standardizer {
  double mean = 0.0;
  double std = 1.0;
  bool zero_variance = false;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const { return (x.array() - mean) / std; }
  Eigen::MatrixXd invert(const Eigen::MatrixXd& x) const { return x.array() * std + mean; }
  double apply(double x) const { return (x - mean) / std; }
  double invert(double x) const { return x * std + mean; }
};

/// Fits population statistics on `series`; a zero std is replaced by 1 and flagged.
Standardizer fit_standardizer(const Eigen::MatrixXd& series);

struct Standardized {
  Eigen::MatrixXd values;
  Standardizer stats;
};

/// Applies `stats` when given, otherwise fits them on `series` first.
Standardized standardize(const Eigen::MatrixXd& series, const Standardizer* stats = nullptr);

}  // namespace stdde
