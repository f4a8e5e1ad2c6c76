#include "stdde/spline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stdde/error.hpp"

namespace stdde {

SplinePath fit_natural_cubic(const std::vector<double>& times, const Eigen::MatrixXd& values,
                             int feature_dim) {
  const auto n = static_cast<Eigen::Index>(times.size());
  if (n < 2) throw InputError("natural cubic spline needs at least 2 knots");
  if (values.rows() != n) throw InputError("one value row is required per knot");
  if (feature_dim < 1 || values.cols() % feature_dim != 0) {
    throw InputError("channel count is not a multiple of the feature dimension");
  }
  for (Eigen::Index i = 1; i < n; ++i) {
    if (!(times[i] > times[i - 1])) throw InputError("knot times must be strictly increasing");
  }

  const Eigen::Index channels = values.cols();
  const Eigen::Index segs = n - 1;
  Eigen::VectorXd h(segs);
  for (Eigen::Index i = 0; i < segs; ++i) h(i) = times[i + 1] - times[i];

  // Second derivatives at the knots; natural boundary pins both ends to zero.
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, channels);
  const Eigen::Index interior = n - 2;
  if (interior > 0) {
    // Thomas algorithm on the symmetric tridiagonal system shared by all channels.
    Eigen::VectorXd diag(interior), upper(interior);
    Eigen::MatrixXd rhs(interior, channels);
    for (Eigen::Index k = 0; k < interior; ++k) {
      const Eigen::Index i = k + 1;
      diag(k) = 2.0 * (h(i - 1) + h(i));
      upper(k) = h(i);
      rhs.row(k) = 6.0 * ((values.row(i + 1) - values.row(i)) / h(i) -
                          (values.row(i) - values.row(i - 1)) / h(i - 1));
    }
    for (Eigen::Index k = 1; k < interior; ++k) {
      const double lower = h(k);  // sub-diagonal entry of row k is h_{k}
      const double w = lower / diag(k - 1);
      diag(k) -= w * upper(k - 1);
      rhs.row(k) -= w * rhs.row(k - 1);
    }
    m.row(interior) = rhs.row(interior - 1) / diag(interior - 1);
    for (Eigen::Index k = interior - 2; k >= 0; --k) {
      m.row(k + 1) = (rhs.row(k) - upper(k) * m.row(k + 2)) / diag(k);
    }
  }

  SplinePath p;
  p.feature_dim_ = feature_dim;
  p.node_count_ = static_cast<int>(channels / feature_dim);
  p.times_ = times;
  p.values_ = values;
  p.a_ = values.topRows(segs);
  p.b_.resize(segs, channels);
  p.c_.resize(segs, channels);
  p.d_.resize(segs, channels);
  for (Eigen::Index j = 0; j < segs; ++j) {
    p.b_.row(j) = (values.row(j + 1) - values.row(j)) / h(j) - h(j) * (2.0 * m.row(j) + m.row(j + 1)) / 6.0;
    p.c_.row(j) = m.row(j) / 2.0;
    p.d_.row(j) = (m.row(j + 1) - m.row(j)) / (6.0 * h(j));
  }
  return p;
}

int SplinePath::locate(double t) const {
  if (times_.empty()) throw RangeError("spline is empty");
  if (!(t >= times_.front() && t <= times_.back())) {
    throw RangeError("t=" + std::to_string(t) + " is outside the knot range [" + std::to_string(times_.front()) +
                     "," + std::to_string(times_.back()) + "]");
  }
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  int j = static_cast<int>(it - times_.begin()) - 1;
  return std::min(j, static_cast<int>(times_.size()) - 2);
}

Eigen::VectorXd SplinePath::eval(int node, double t) const {
  if (node < 0 || node >= node_count_) throw InputError("node id out of range");
  const int j = locate(t);
  const Eigen::Index c0 = static_cast<Eigen::Index>(node) * feature_dim_;
  if (t == times_.back()) return values_.row(values_.rows() - 1).segment(c0, feature_dim_).transpose();
  const double s = t - times_[j];
  Eigen::VectorXd out(feature_dim_);
  for (int f = 0; f < feature_dim_; ++f) {
    const Eigen::Index ch = c0 + f;
    out(f) = a_(j, ch) + s * (b_(j, ch) + s * (c_(j, ch) + s * d_(j, ch)));
  }
  return out;
}

Eigen::VectorXd SplinePath::eval_derivative(int node, double t) const {
  if (node < 0 || node >= node_count_) throw InputError("node id out of range");
  const int j = locate(t);
  const double s = t - times_[j];
  const Eigen::Index c0 = static_cast<Eigen::Index>(node) * feature_dim_;
  Eigen::VectorXd out(feature_dim_);
  for (int f = 0; f < feature_dim_; ++f) {
    const Eigen::Index ch = c0 + f;
    out(f) = b_(j, ch) + s * (2.0 * c_(j, ch) + 3.0 * s * d_(j, ch));
  }
  return out;
}

double SplinePath::eval_second_derivative(int channel, double t) const {
  const int j = locate(t);
  const double s = t - times_[j];
  return 2.0 * c_(j, channel) + 6.0 * s * d_(j, channel);
}

Eigen::MatrixXd SplinePath::derivative_all(double t) const {
  const int j = locate(t);
  const double s = t - times_[j];
  Eigen::RowVectorXd row = b_.row(j) + s * (2.0 * c_.row(j) + 3.0 * s * d_.row(j));
  // Channels are node-major, so a row-major reshape gives (node x feature).
  Eigen::MatrixXd out(node_count_, feature_dim_);
  for (int i = 0; i < node_count_; ++i) out.row(i) = row.segment(static_cast<Eigen::Index>(i) * feature_dim_, feature_dim_);
  return out;
}

Eigen::VectorXd eval(const SplinePath& path, int node, double t) { return path.eval(node, t); }
Eigen::VectorXd eval_derivative(const SplinePath& path, int node, double t) { return path.eval_derivative(node, t); }

}  // namespace stdde
