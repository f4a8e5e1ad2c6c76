#pragma once

#include <Eigen/Dense>
#include <vector>

namespace stdde {

/// Natural cubic spline through per-node, per-feature knot values.
///
/// Channels are laid out node-major: channel = node * feature_dim + feature.
/// On interval j the spline is a + b*s + c*s^2 + d*s^3 with s = t - t_j; the
/// coefficient matrices are (intervals x channels).
class SplinePath {
 public:
  SplinePath() = default;

  int node_count() const noexcept { return node_count_; }
  int feature_dim() const noexcept { return feature_dim_; }
  const std::vector<double>& knot_times() const noexcept { return times_; }
  const Eigen::MatrixXd& knot_values() const noexcept { return values_; }
  double t_min() const { return times_.front(); }
  double t_max() const { return times_.back(); }

  Eigen::VectorXd eval(int node, double t) const;
  Eigen::VectorXd eval_derivative(int node, double t) const;
  double eval_second_derivative(int channel, double t) const;

  /// Derivative of every channel at t, shaped (node_count x feature_dim).
  Eigen::MatrixXd derivative_all(double t) const;

  const Eigen::MatrixXd& coeff_a() const noexcept { return a_; }
  const Eigen::MatrixXd& coeff_b() const noexcept { return b_; }
  const Eigen::MatrixXd& coeff_c() const noexcept { return c_; }
  const Eigen::MatrixXd& coeff_d() const noexcept { return d_; }

 private:
  friend SplinePath fit_natural_cubic(const std::vector<double>& times, const Eigen::MatrixXd& values,
                                      int feature_dim);
  // Returns the interval index and checks the range.
  int locate(double t) const;

  int node_count_ = 0;
  int feature_dim_ = 1;
  std::vector<double> times_;
  Eigen::MatrixXd values_;
  Eigen::MatrixXd a_, b_, c_, d_;
};

/// Fits the natural spline to `values` (knots x channels). Throws InputError
/// for fewer than two knots, non-increasing times, or a shape mismatch.
SplinePath fit_natural_cubic(const std::vector<double>& times, const Eigen::MatrixXd& values,
                             int feature_dim = 1);

Eigen::VectorXd eval(const SplinePath& path, int node, double t);
Eigen::VectorXd eval_derivative(const SplinePath& path, int node, double t);

}  // namespace stdde
