#include "stdde/dde.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "stdde/error.hpp"

namespace stdde {

namespace {

double time_tolerance(double t) { return 1e-9 * std::max(1.0, std::abs(t)); }

}  // namespace

Trajectory::Trajectory(HistoryFunction history) : history_(std::move(history)) {
  grid_times_.push_back(0.0);
  states_.push_back(history_.constant_state);
}

Trajectory::Trajectory(const Trajectory* prefix) : prefix_(prefix) {
  if (prefix == nullptr) throw InputError("continuation needs a predecessor trajectory");
  grid_times_.push_back(prefix->end_time());
  states_.push_back(prefix->states().back());
}

const HistoryFunction& Trajectory::history() const { return prefix_ ? prefix_->history() : history_; }

Trajectory Trajectory::from_record(HistoryFunction history, std::vector<double> grid_times,
                                   std::vector<StateMatrix> states, std::vector<StateMatrix> derivatives) {
  if (grid_times.size() != states.size() || derivatives.size() + 1 != states.size() || states.empty()) {
    throw InputError("trajectory record shapes are inconsistent");
  }
  Trajectory traj(std::move(history));
  traj.grid_times_ = std::move(grid_times);
  traj.states_ = std::move(states);
  traj.derivatives_ = std::move(derivatives);
  traj.step_sizes_.clear();
  for (std::size_t k = 0; k + 1 < traj.grid_times_.size(); ++k) {
    if (!(traj.grid_times_[k + 1] > traj.grid_times_[k])) throw InputError("grid times must increase");
    traj.step_sizes_.push_back(traj.grid_times_[k + 1] - traj.grid_times_[k]);
  }
  traj.aggregates_.assign(traj.derivatives_.size(), StateMatrix());
  traj.reads_.assign(traj.derivatives_.size(), {});
  return traj;
}

Bracket Trajectory::locate(double t) const {
  const double t0 = grid_times_.front();
  const double t_last = grid_times_.back();
  if (t > t_last + time_tolerance(t_last)) {
    throw RangeError("state requested at t=" + std::to_string(t) + " beyond the integrated range ending at " +
                     std::to_string(t_last));
  }
  if (t <= t0) {
    if (prefix_ != nullptr) return prefix_->locate(t);
    Bracket b;
    b.history = true;
    return b;
  }
  const int last = static_cast<int>(grid_times_.size()) - 1;
  // Segment (grid[hi-1], grid[hi]] containing t; the grid is uniform except
  // possibly the final step, so guess from the leading spacing then correct.
  int hi = last;
  if (last > 1) {
    const double eta = grid_times_[1] - grid_times_[0];
    hi = std::clamp(static_cast<int>(std::ceil((t - t0) / eta)), 1, last);
  }
  while (hi < last && t > grid_times_[hi]) ++hi;
  while (hi > 1 && t <= grid_times_[hi - 1]) --hi;
  Bracket b;
  b.owner = this;
  b.lo = hi - 1;
  b.hi = hi;
  b.w = t >= grid_times_[hi] ? 1.0 : (t - grid_times_[hi - 1]) / (grid_times_[hi] - grid_times_[hi - 1]);
  return b;
}

void Trajectory::accumulate_state(int node, double t, double weight, Eigen::Ref<Eigen::RowVectorXd> out) const {
  const Bracket b = locate(t);
  if (b.history) {
    out += weight * history().constant_state.row(node);
    return;
  }
  const auto& st = b.owner->states_;
  if (b.w == 1.0) {
    out += weight * st[b.hi].row(node);
  } else {
    out += (weight * (1.0 - b.w)) * st[b.lo].row(node) + (weight * b.w) * st[b.hi].row(node);
  }
}

Eigen::VectorXd Trajectory::state_at(int node, double t) const {
  if (node < 0 || node >= node_count()) throw InputError("node id out of range");
  const Bracket b = locate(t);
  if (b.history) return history().constant_state.row(node).transpose();
  const auto& st = b.owner->states_;
  if (b.w == 1.0) return st[b.hi].row(node).transpose();
  return ((1.0 - b.w) * st[b.lo].row(node) + b.w * st[b.hi].row(node)).transpose();
}

Eigen::VectorXd Trajectory::delay_partial(int node, double t) const {
  if (node < 0 || node >= node_count()) throw InputError("node id out of range");
  const Bracket b = locate(t);
  if (b.history) return Eigen::VectorXd::Zero(width());
  return -b.owner->derivatives_[b.lo].row(node).transpose();
}

Eigen::VectorXd state_at(const Trajectory& traj, int node, double t) { return traj.state_at(node, t); }
Eigen::VectorXd delay_partial(const Trajectory& traj, int node, double t) { return traj.delay_partial(node, t); }

void run_euler(DelayDynamics& dynamics, Trajectory& traj, double t_end, double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InputError("solver step must be positive");
  const double t0 = traj.grid_times_.front();
  if (t_end < t0 - time_tolerance(t0)) throw InputError("solver end precedes the start time");
  const double span = std::max(0.0, t_end - t0);
  const auto steps = static_cast<std::size_t>(std::ceil(span / eta - 1e-9));

  const int nodes = traj.node_count();
  const int width = traj.width();
  traj.grid_times_.reserve(steps + 1);
  traj.states_.reserve(steps + 1);
  traj.derivatives_.reserve(steps);
  traj.aggregates_.reserve(steps);
  traj.reads_.reserve(steps);

  StateMatrix aggregate(nodes, width);
  StateMatrix dstate(nodes, width);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = traj.grid_times_.back();
    std::vector<DelayedRead> reads;
    dynamics.reads(t, reads);
    aggregate.setZero();
    for (const DelayedRead& r : reads) {
      if (r.time > t + time_tolerance(t)) {
        throw std::logic_error("dynamics read h(" + std::to_string(r.time) + ") at step time " + std::to_string(t));
      }
      traj.accumulate_state(r.src, r.time, r.weight, aggregate.row(r.target));
    }
    dynamics.derivative(t, traj.states_.back(), aggregate, dstate);

    double t_next = t0 + static_cast<double>(k + 1) * eta;
    double h = eta;
    if (k + 1 == steps) {
      // Final step: land exactly on t_end, shortening when eta does not divide the span.
      if (std::abs(t_next - t_end) > 1e-9) h = t_end - t;
      t_next = t_end;
    }
    StateMatrix next = traj.states_.back() + h * dstate;
    if (!next.allFinite()) {
      throw DivergenceError("non-finite state after Euler step " + std::to_string(k) + " (t=" + std::to_string(t) +
                            ")");
    }
    traj.grid_times_.push_back(t_next);
    traj.step_sizes_.push_back(h);
    traj.derivatives_.push_back(dstate);
    traj.aggregates_.push_back(aggregate);
    traj.reads_.push_back(std::move(reads));
    traj.states_.push_back(std::move(next));
  }
}

Trajectory integrate(DelayDynamics& dynamics, const HistoryFunction& history, const SolverConfig& config) {
  if (!history.constant_state.allFinite()) throw DivergenceError("non-finite history constant");
  Trajectory traj(history);
  run_euler(dynamics, traj, config.t_end, config.eta);
  return traj;
}

Trajectory integrate_continuation(DelayDynamics& dynamics, const Trajectory& prefix, const SolverConfig& config) {
  Trajectory traj(&prefix);
  run_euler(dynamics, traj, config.t_end, config.eta);
  return traj;
}

std::vector<StateMatrix>& AdjointStore::states_of(const Trajectory& traj) {
  auto it = states_.find(&traj);
  if (it == states_.end()) {
    std::vector<StateMatrix> zeros(traj.states().size(), StateMatrix::Zero(traj.node_count(), traj.width()));
    it = states_.emplace(&traj, std::move(zeros)).first;
  }
  return it->second;
}

void AdjointStore::ensure_history(const Trajectory& traj) {
  if (history.size() == 0) history = StateMatrix::Zero(traj.node_count(), traj.width());
}

void AdjointStore::add_state(const Trajectory& traj, int node, double t, const Eigen::Ref<const Eigen::RowVectorXd>& grad) {
  const Bracket b = traj.locate(t);
  if (b.history) {
    ensure_history(traj);
    history.row(node) += grad;
    return;
  }
  auto& adj = states_of(*b.owner);
  if (b.w != 1.0) adj[b.lo].row(node) += (1.0 - b.w) * grad;
  adj[b.hi].row(node) += b.w * grad;
}

void backward(const Trajectory& traj, DelayDynamics& dynamics, AdjointStore& store) {
  std::vector<StateMatrix>& lambda = store.states_of(traj);
  if (lambda.size() != traj.states().size()) throw std::logic_error("adjoint count does not match trajectory");
  const int nodes = traj.node_count();
  const int width = traj.width();
  StateMatrix dbar(nodes, width), state_bar(nodes, width), agg_bar(nodes, width);

  for (std::size_t step = traj.step_count(); step-- > 0;) {
    const double t = traj.grid_times()[step];
    const double h = traj.step_sizes()[step];
    dbar = h * lambda[step + 1];
    lambda[step] += lambda[step + 1];
    state_bar.setZero();
    agg_bar.setZero();
    dynamics.vjp(t, traj.states()[step], traj.aggregates()[step], dbar, state_bar, agg_bar);
    if (state_bar.rows() != nodes || state_bar.cols() != width || agg_bar.rows() != nodes || agg_bar.cols() != width) {
      throw std::logic_error("dynamics VJP produced mismatched shapes");
    }
    lambda[step] += state_bar;

    for (const DelayedRead& r : traj.reads()[step]) {
      const Eigen::RowVectorXd g = r.weight * agg_bar.row(r.target);
      const Bracket b = traj.locate(r.time);
      if (b.history) {
        if (store.history.size() == 0) store.history = StateMatrix::Zero(nodes, width);
        store.history.row(r.src) += g;
        continue;
      }
      auto& adj = (b.owner == &traj) ? lambda : store.states_of(*b.owner);
      if (b.w != 1.0) adj[b.lo].row(r.src) += (1.0 - b.w) * g;
      adj[b.hi].row(r.src) += b.w * g;
      if (r.tag >= 0) {
        if (static_cast<std::size_t>(r.tag) >= store.delays.size()) throw std::logic_error("delay tag out of range");
        store.delays[r.tag] -= g.dot(b.owner->derivatives()[b.lo].row(r.src));
      }
    }
  }

  // The initial state is the predecessor's final state or the history constant.
  if (traj.prefix() != nullptr) {
    store.states_of(*traj.prefix()).back() += lambda.front();
  } else {
    if (store.history.size() == 0) store.history = StateMatrix::Zero(nodes, width);
    store.history += lambda.front();
  }
}

BackwardResult backward(const Trajectory& traj, DelayDynamics& dynamics, const std::vector<StateMatrix>& loss_grads,
                        std::size_t delay_count) {
  if (traj.prefix() != nullptr) throw InputError("use an AdjointStore for chained trajectories");
  if (loss_grads.size() != traj.states().size()) throw std::logic_error("loss gradient count does not match trajectory");
  AdjointStore store(delay_count);
  auto& lambda = store.states_of(traj);
  for (std::size_t k = 0; k < lambda.size(); ++k) {
    if (loss_grads[k].size() != 0) lambda[k] += loss_grads[k];
  }
  backward(traj, dynamics, store);
  return BackwardResult{store.history, store.delays};
}

}  // namespace stdde
