#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "stdde/dde.hpp"

namespace testing {

// Per-node scalar system dh/dt = a*h(t) + b*h(t - tau), one read per node.
class LinearDelay final : public stdde::DelayDynamics {
 public:
  LinearDelay(int nodes, double a, double b, double tau, int tag = -1) : n_(nodes), a_(a), b_(b), tau_(tau), tag_(tag) {}

  void reads(double t, std::vector<stdde::DelayedRead>& out) const override {
    for (int i = 0; i < n_; ++i) out.push_back({i, i, t - tau_, 1.0, tag_});
  }
  void derivative(double, const stdde::StateMatrix& h, const stdde::StateMatrix& agg,
                  stdde::StateMatrix& dh) const override {
    dh = a_ * h + b_ * agg;
  }
  void vjp(double, const stdde::StateMatrix& h, const stdde::StateMatrix& agg, const stdde::StateMatrix& bar,
           stdde::StateMatrix& h_bar, stdde::StateMatrix& agg_bar) override {
    h_bar = a_ * bar;
    agg_bar = b_ * bar;
    grad_a += (bar.array() * h.array()).sum();
    grad_b += (bar.array() * agg.array()).sum();
  }

  double grad_a = 0.0;
  double grad_b = 0.0;

 private:
  int n_;
  double a_, b_, tau_;
  int tag_;
};

inline stdde::StateMatrix scalar_state(double v) {
  stdde::StateMatrix m(1, 1);
  m(0, 0) = v;
  return m;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-8, std::max(std::abs(a), std::abs(b))); }

}  // namespace testing
