#include "stdde/stability.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "stdde/error.hpp"

namespace stdde {

NormType parse_norm(const std::string& text) {
  if (text == "1") return NormType::One;
  if (text == "2") return NormType::Two;
  if (text == "inf" || text == "Inf" || text == "INF" || text == "infinity") return NormType::Inf;
  throw InputError("unknown norm '" + text + "', expected 1, 2 or inf");
}

std::string to_string(NormType p) {
  switch (p) {
    case NormType::One:
      return "1";
    case NormType::Two:
      return "2";
    case NormType::Inf:
      return "inf";
  }
  return "?";
}

double log_norm(const Eigen::MatrixXd& a, NormType p) {
  if (a.rows() != a.cols()) throw InputError("logarithmic norm needs a square matrix");
  if (a.size() == 0) throw InputError("logarithmic norm of an empty matrix");
  const Eigen::Index n = a.rows();
  switch (p) {
    case NormType::One: {
      double best = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) {
        double v = a(j, j);
        for (Eigen::Index i = 0; i < n; ++i)
          if (i != j) v += std::abs(a(i, j));
        best = std::max(best, v);
      }
      return best;
    }
    case NormType::Inf: {
      double best = -std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < n; ++i) {
        double v = a(i, i);
        for (Eigen::Index j = 0; j < n; ++j)
          if (j != i) v += std::abs(a(i, j));
        best = std::max(best, v);
      }
      return best;
    }
    case NormType::Two: {
      const Eigen::MatrixXd sym = a + a.transpose();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
      return 0.5 * solver.eigenvalues().maxCoeff();
    }
  }
  return 0.0;
}

double induced_norm(const Eigen::MatrixXd& a, NormType p) {
  if (a.size() == 0) return 0.0;
  switch (p) {
    case NormType::One:
      return a.cwiseAbs().colwise().sum().maxCoeff();
    case NormType::Inf:
      return a.cwiseAbs().rowwise().sum().maxCoeff();
    case NormType::Two: {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
      return svd.singularValues()(0);
    }
  }
  return 0.0;
}

EnvelopeSystem build_envelope(const TrafficGraph& graph, double c, const DelayTable& delays, Regime regime) {
  if (!(c > 0.0)) throw InputError("balance constant c must be positive");
  if (delays.size() != graph.edge_count()) throw InputError("delay table does not match the graph");
  const int n = graph.node_count();
  EnvelopeSystem env;
  env.a0 = -Eigen::MatrixXd::Identity(n, n);
  env.c = c;
  env.degree_bound = graph.max_degree();
  for (int i = 0; i < n; ++i) {
    // Largest weights first: slot k gets the k-th largest entry of every row,
    // which makes the norm sum independent of edge order and as small as any
    // packing allows.
    std::vector<std::size_t> row;
    for (std::size_t e : graph.in_edges(i))
      if (!graph.is_self_loop(e)) row.push_back(e);
    std::stable_sort(row.begin(), row.end(), [&graph](std::size_t x, std::size_t y) {
      if (graph.alpha(x) != graph.alpha(y)) return graph.alpha(x) > graph.alpha(y);
      return graph.edge(x).src < graph.edge(y).src;
    });
    std::size_t slot = 0;
    for (std::size_t e : row) {
      if (slot == env.ak.size()) {
        env.ak.push_back(Eigen::MatrixXd::Zero(n, n));
        env.tau.emplace_back(n, 0.0);
      }
      env.ak[slot](i, graph.edge(e).src) = c * graph.alpha(e);
      env.tau[slot][i] = regime == Regime::Peak ? delays.tau_peak[e] : delays.tau_offpeak[e];
      ++slot;
    }
  }
  return env;
}

StabilityReport check_stability(const EnvelopeSystem& env, NormType p) {
  StabilityReport r;
  r.norm = p;
  r.mu_a0 = log_norm(env.a0, p);
  for (const Eigen::MatrixXd& a : env.ak) r.ak_norm_sum += induced_norm(a, p);
  r.margin = r.mu_a0 + r.ak_norm_sum;
  r.sufficient_stable = r.margin <= 0.0;
  r.degree_bound = env.degree_bound;
  r.c_bound = 1.0 / static_cast<double>(std::max(1, env.degree_bound));
  r.c_actual = env.c;
  r.matrix_count = env.ak.size();
  return r;
}

std::complex<double> characteristic_value(const EnvelopeSystem& env, std::complex<double> z) {
  const int n = env.size();
  if (n > 64) throw InputError("characteristic determinant limited to 64 states, got " + std::to_string(n));
  Eigen::MatrixXcd m = z * Eigen::MatrixXcd::Identity(n, n) - env.a0.cast<std::complex<double>>();
  for (std::size_t k = 0; k < env.ak.size(); ++k) {
    for (int i = 0; i < n; ++i) {
      const std::complex<double> decay = std::exp(-z * env.tau[k][i]);
      m.row(i) -= decay * env.ak[k].row(i).cast<std::complex<double>>();
    }
  }
  return m.partialPivLu().determinant();
}

std::string format_report(const StabilityReport& r, bool key_value) {
  std::ostringstream os;
  char buf[256];
  auto line = [&](const char* label, const std::string& value) {
    std::snprintf(buf, sizeof(buf), "%-22s %s\n", label, value.c_str());
    os << buf;
  };
  auto num = [](double v) {
    char b[64];
    std::snprintf(b, sizeof(b), "%.9g", v);
    return std::string(b);
  };
  line("norm", to_string(r.norm));
  line("mu(A0)", num(r.mu_a0));
  line("sum ||A_k||", num(r.ak_norm_sum));
  line("delay matrices", std::to_string(r.matrix_count));
  line("margin", num(r.margin));
  line("sufficient_stable", r.sufficient_stable ? "yes" : "no");
  line("K", std::to_string(r.degree_bound));
  line("c bound (1/K)", num(r.c_bound));
  line("c", num(r.c_actual));
  line("c within bound", r.c_actual <= r.c_bound ? "yes" : "no");
  if (key_value) {
    os << "norm=" << to_string(r.norm) << "\n"
       << "mu_a0=" << num(r.mu_a0) << "\n"
       << "ak_norm_sum=" << num(r.ak_norm_sum) << "\n"
       << "margin=" << num(r.margin) << "\n"
       << "sufficient_stable=" << (r.sufficient_stable ? 1 : 0) << "\n"
       << "degree_bound=" << r.degree_bound << "\n"
       << "c_bound=" << num(r.c_bound) << "\n"
       << "c_actual=" << num(r.c_actual) << "\n";
  }
  return os.str();
}

EnvelopeDynamics::EnvelopeDynamics(const EnvelopeSystem& env) : env_(env) {
  for (std::size_t k = 0; k < env.ak.size(); ++k) {
    for (Eigen::Index i = 0; i < env.ak[k].rows(); ++i) {
      for (Eigen::Index j = 0; j < env.ak[k].cols(); ++j) {
        if (env.ak[k](i, j) == 0.0) continue;
        entries_.push_back(DelayedRead{static_cast<int>(i), static_cast<int>(j), env.tau[k][i], env.ak[k](i, j), -1});
      }
    }
  }
}

void EnvelopeDynamics::reads(double t, std::vector<DelayedRead>& out) const {
  for (DelayedRead r : entries_) {
    r.time = t - r.time;
    out.push_back(r);
  }
}

void EnvelopeDynamics::derivative(double, const StateMatrix& state, const StateMatrix& aggregate,
                                  StateMatrix& dstate) const {
  dstate = env_.a0 * state + aggregate;
}

void EnvelopeDynamics::vjp(double, const StateMatrix&, const StateMatrix&, const StateMatrix& dstate_bar,
                           StateMatrix& state_bar, StateMatrix& aggregate_bar) {
  state_bar = env_.a0.transpose() * dstate_bar;
  aggregate_bar = dstate_bar;
}

}  // namespace stdde
