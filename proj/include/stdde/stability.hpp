#pragma once

#include <Eigen/Dense>
#include <complex>
#include <string>
#include <vector>

#include "stdde/dde.hpp"
#include "stdde/delay.hpp"
#include "stdde/graph.hpp"

namespace stdde {

enum class NormType { One, Two, Inf };

/// Parses "1", "2" or "inf".
NormType parse_norm(const std::string& text);
std::string to_string(NormType p);

/// Logarithmic norm mu_p(A). Throws InputError for a non-square matrix.
double log_norm(const Eigen::MatrixXd& a, NormType p);

/// Induced operator norm ||A||_p.
double induced_norm(const Eigen::MatrixXd& a, NormType p);

/// Linear multi-delay system dH/dt = A0 H(t) + sum_k A_k H(t - tau_k), where
/// row i of A_k holds at most one nonzero and reads its column with delay
/// tau[k][i].
struct EnvelopeSystem {
  Eigen::MatrixXd a0;
  std::vector<Eigen::MatrixXd> ak;
  std::vector<std::vector<double>> tau;
  double c = 0.0;
  int degree_bound = 1;  // K of the source graph, self-loop included

  int size() const { return static_cast<int>(a0.rows()); }
};

enum class Regime { OffPeak, Peak };

/// A0 = -I; non-self-loop edges packed greedily per destination row into the
/// fewest matrices with one entry per row, entry c * alpha_ij.
EnvelopeSystem build_envelope(const TrafficGraph& graph, double c, const DelayTable& delays,
                              Regime regime = Regime::OffPeak);

struct StabilityReport {
  NormType norm = NormType::Inf;
  double mu_a0 = 0.0;
  double ak_norm_sum = 0.0;
  double margin = 0.0;
  bool sufficient_stable = false;
  double c_bound = 0.0;
  double c_actual = 0.0;
  int degree_bound = 1;
  std::size_t matrix_count = 0;
};

StabilityReport check_stability(const EnvelopeSystem& env, NormType p = NormType::Inf);

/// det(zI - A0 - sum_k diag(exp(-z tau_k)) A_k). Systems above 64 states are
/// rejected with InputError.
std::complex<double> characteristic_value(const EnvelopeSystem& env, std::complex<double> z);

/// Aligned text; with `key_value` each field is also printed as key=value.
std::string format_report(const StabilityReport& report, bool key_value = false);

/// Scalar-per-node linear dynamics of an envelope, for simulating it with the
/// Euler engine.
class EnvelopeDynamics final : public DelayDynamics {
 public:
  explicit EnvelopeDynamics(const EnvelopeSystem& env);
  void reads(double t, std::vector<DelayedRead>& out) const override;
  void derivative(double t, const StateMatrix& state, const StateMatrix& aggregate, StateMatrix& dstate) const override;
  void vjp(double t, const StateMatrix& state, const StateMatrix& aggregate, const StateMatrix& dstate_bar,
           StateMatrix& state_bar, StateMatrix& aggregate_bar) override;

 private:
  const EnvelopeSystem& env_;
  std::vector<DelayedRead> entries_;  // one per nonzero of every A_k, time holds the delay
};

}  // namespace stdde
