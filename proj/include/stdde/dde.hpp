#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <map>
#include <vector>

namespace stdde {

/// Node-major state block: one row per node, one column per hidden channel.
using StateMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Constant state prescribed for all t <= 0; also the initial state h(0).
struct HistoryFunction {
  StateMatrix constant_state;
};

struct SolverConfig {
  double eta = 0.25;
  double t_end = 1.0;
};

/// One delayed read requested by a dynamics evaluation at time t:
/// aggregate.row(target) += weight * h_src(time). A nonnegative tag names the
/// delay parameter that produced `time = t - tau`, so backward can credit it.
struct DelayedRead {
  int target = 0;
  int src = 0;
  double time = 0.0;
  double weight = 1.0;
  int tag = -1;
};

/// Right-hand side of a delayed system dh/dt = F(t, h(t), aggregate(t)), where
/// the aggregate is the weighted sum of delayed reads the dynamics declares.
class DelayDynamics {
 public:
  virtual ~DelayDynamics() = default;

  /// Appends the delayed reads needed at time t. All read times must be <= t.
  virtual void reads(double t, std::vector<DelayedRead>& out) const = 0;

  virtual void derivative(double t, const StateMatrix& state, const StateMatrix& aggregate,
                          StateMatrix& dstate) const = 0;

  /// Vector-Jacobian product of `derivative` at a recorded point. Writes the
  /// adjoints of state and aggregate and accumulates parameter gradients
  /// internally.
  virtual void vjp(double t, const StateMatrix& state, const StateMatrix& aggregate, const StateMatrix& dstate_bar,
                   StateMatrix& state_bar, StateMatrix& aggregate_bar) = 0;
};

class Trajectory;

/// Where a time query lands: the constant history, or the segment
/// (grid[lo], grid[hi]] of some trajectory in the chain with weight w on hi.
struct Bracket {
  const Trajectory* owner = nullptr;
  int lo = 0;
  int hi = 0;
  double w = 0.0;
  bool history = false;
};

/// Dense Euler record of a delayed system. A trajectory either starts at t=0
/// from a constant history, or continues another trajectory from its end, in
/// which case reads before its start are served by that predecessor.
class Trajectory {
 public:
  explicit Trajectory(HistoryFunction history);
  /// Continuation; `prefix` must outlive this trajectory.
  explicit Trajectory(const Trajectory* prefix);

  double start_time() const { return grid_times_.front(); }
  double end_time() const { return grid_times_.back(); }
  int node_count() const { return static_cast<int>(states_.front().rows()); }
  int width() const { return static_cast<int>(states_.front().cols()); }
  std::size_t step_count() const { return derivatives_.size(); }

  const std::vector<double>& grid_times() const { return grid_times_; }
  const std::vector<double>& step_sizes() const { return step_sizes_; }
  const std::vector<StateMatrix>& states() const { return states_; }
  /// derivatives()[k] drove the step from grid k to grid k+1.
  const std::vector<StateMatrix>& derivatives() const { return derivatives_; }
  const std::vector<StateMatrix>& aggregates() const { return aggregates_; }
  const std::vector<std::vector<DelayedRead>>& reads() const { return reads_; }
  const Trajectory* prefix() const { return prefix_; }
  const HistoryFunction& history() const;

  Bracket locate(double t) const;

  /// History constant for t <= 0, linear interpolation between grid states
  /// otherwise, exact on grid points. Throws RangeError past the end.
  Eigen::VectorXd state_at(int node, double t) const;

  /// d h(t - tau) / d tau = -dh/dt on the segment ending at or containing t;
  /// zero inside the constant history.
  Eigen::VectorXd delay_partial(int node, double t) const;

  /// Adds weight * h_node(t) into `out`.
  void accumulate_state(int node, double t, double weight, Eigen::Ref<Eigen::RowVectorXd> out) const;

  /// Builds a record directly; `states.size()` must equal `derivatives.size() + 1`
  /// and the Euler recurrence must hold. Used for tests and tooling.
  static Trajectory from_record(HistoryFunction history, std::vector<double> grid_times,
                                std::vector<StateMatrix> states, std::vector<StateMatrix> derivatives);

 private:
  friend Trajectory integrate(DelayDynamics&, const HistoryFunction&, const SolverConfig&);
  friend Trajectory integrate_continuation(DelayDynamics&, const Trajectory&, const SolverConfig&);
  friend void run_euler(DelayDynamics& dynamics, Trajectory& traj, double t_end, double eta);

  HistoryFunction history_;
  const Trajectory* prefix_ = nullptr;
  std::vector<double> grid_times_;
  std::vector<double> step_sizes_;
  std::vector<StateMatrix> states_;
  std::vector<StateMatrix> derivatives_;
  std::vector<StateMatrix> aggregates_;
  std::vector<std::vector<DelayedRead>> reads_;
};

/// Explicit Euler from h(0) = history over [0, config.t_end]; the last step is
/// shortened when eta does not divide t_end. Throws DivergenceError naming the
/// step on a non-finite state and std::logic_error on a read from the future.
Trajectory integrate(DelayDynamics& dynamics, const HistoryFunction& history, const SolverConfig& config);

/// Continues `prefix` from its end time to config.t_end.
Trajectory integrate_continuation(DelayDynamics& dynamics, const Trajectory& prefix, const SolverConfig& config);

Eigen::VectorXd state_at(const Trajectory& traj, int node, double t);
Eigen::VectorXd delay_partial(const Trajectory& traj, int node, double t);

/// Adjoint accumulator shared by the trajectories of one chain.
class AdjointStore {
 public:
  explicit AdjointStore(std::size_t delay_count = 0) : delays(delay_count, 0.0) {}

  /// Adjoints of the grid states of `traj`, zero-initialized on first access.
  std::vector<StateMatrix>& states_of(const Trajectory& traj);

  /// Routes the gradient of h_node(t) to grid states or the history constant.
  void add_state(const Trajectory& traj, int node, double t, const Eigen::Ref<const Eigen::RowVectorXd>& grad);

  StateMatrix history;
  std::vector<double> delays;

 private:
  void ensure_history(const Trajectory& traj);
  std::map<const Trajectory*, std::vector<StateMatrix>> states_;
};

/// Reverse sweep over the Euler steps of `traj`. Consumes the adjoints already
/// stored for its grid states, routes read adjoints through interpolation
/// weights (and into the delay slots via -dh/dt), and hands the adjoint of the
/// initial state to the predecessor or the history constant.
void backward(const Trajectory& traj, DelayDynamics& dynamics, AdjointStore& store);

struct BackwardResult {
  StateMatrix history_grad;
  std::vector<double> delay_grads;
};

/// Convenience wrapper for a single trajectory started from a history.
BackwardResult backward(const Trajectory& traj, DelayDynamics& dynamics, const std::vector<StateMatrix>& loss_grads,
                        std::size_t delay_count);

}  // namespace stdde
