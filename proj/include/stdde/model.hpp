#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stdde/dde.hpp"
#include "stdde/delay.hpp"
#include "stdde/graph.hpp"
#include "stdde/spline.hpp"
#include "stdde/standardize.hpp"

namespace stdde {

struct ModelDims {
  int input_dim = 1;
  int hidden_dim = 64;
  int output_dim = 1;
};

/// Gate and neighbor maps of one delayed GRU-style phase.
struct GateParams {
  Eigen::MatrixXd w_z;       // hidden x hidden, acts on h_i(t)
  Eigen::MatrixXd u_z;       // hidden x hidden, acts on g_i(t)
  Eigen::VectorXd b_z;       // hidden
  Eigen::MatrixXd neighbor;  // hidden x hidden linear map f applied to delayed neighbor states
};

enum class BlockKind { Weight, Balance, Delay };

/// Flat view of one parameter array, in a fixed project-wide order.
struct ParamBlock {
  std::string name;
  double* data = nullptr;
  std::size_t size = 0;
  BlockKind kind = BlockKind::Weight;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

struct ModelParams {
  ModelDims dims;
  // history encoder: affine, tanh, affine
  Eigen::MatrixXd enc_w1;  // hidden x input
  Eigen::VectorXd enc_b1;
  Eigen::MatrixXd enc_w2;  // hidden x hidden
  Eigen::VectorXd enc_b2;
  GateParams input_gate;
  Eigen::MatrixXd control_w;  // hidden x input, maps dX/dt into hidden space
  Eigen::VectorXd control_b;
  GateParams output_gate;
  Eigen::MatrixXd out_w;  // output x hidden
  Eigen::VectorXd out_b;
  double c = 1.0;
  DelayTable delays;

  std::vector<ParamBlock> blocks();
  std::size_t parameter_count();
  /// Same shapes, every entry zero (including the delay slots).
  ModelParams zeros_like() const;
  bool all_finite() const;
};

struct ModelConfig {
  double eta = 0.25;              // solver step in grid units
  double minutes_per_unit = 5.0;  // wall-clock length of one grid unit
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights from a seeded generator,
/// control bias 1, c = 1/K and delays copied from `initial_delays` when given,
/// else zero.
ModelParams init_params(int input_dim, int hidden_dim, int output_dim, const TrafficGraph& graph, std::uint64_t seed,
                        double tau_max = 12.0, const DelayTable* initial_delays = nullptr);
inline ModelParams init_params(const TrafficGraph& graph, std::uint64_t seed) {
  return init_params(1, 64, 1, graph, seed);
}

/// Constant history per node: MLP of that node's first observed frame
/// (nodes x input_dim).
HistoryFunction encode_history(const ModelParams& params, const Eigen::MatrixXd& first_frame);

/// Reads h_j(t - tau_ij) through `state_lookup(node, time)`.
using StateLookup = std::function<Eigen::VectorXd(int, double)>;

/// g_i(t) = c * sum_j alpha_ij * f(h_j(t - tau_ij)), with tau from the delay
/// table at absolute minute `t_abs_minutes` and zero on self-loops.
Eigen::VectorXd update_vector(const ModelParams& params, const GateParams& gate, const TrafficGraph& graph,
                              const StateLookup& state_lookup, int node, double t, double t_abs_minutes);

/// Input-phase derivative of node i:
/// (1 - z) * (g - h) * f~(dX/dt), z = sigmoid(W_z h + U_z g + b_z).
Eigen::VectorXd derivative(const ModelParams& params, const TrafficGraph& graph, const SplinePath& spline,
                           const StateLookup& state_lookup, int node, double t, double t_abs_minutes);

/// Window handed to the network. Values are already standardized; frames are
/// `spacing` grid units apart and frame 0 sits at window time 0.
struct WindowInput {
  Eigen::MatrixXd values;  // frames x (nodes * input_dim)
  double spacing = 1.0;
  double start_minute = 0.0;

  int frames() const { return static_cast<int>(values.rows()); }
  double input_end() const { return (frames() - 1) * spacing; }
};

/// Everything the backward pass needs from one forward evaluation.
struct ForwardPass {
  SplinePath spline;
  Eigen::MatrixXd first_frame;  // nodes x input_dim
  Eigen::MatrixXd enc_hidden;   // nodes x hidden, tanh activations
  std::unique_ptr<Trajectory> input;
  std::unique_ptr<Trajectory> decoder;
  std::vector<double> request_times;
  Eigen::MatrixXd outputs;  // requests x (nodes * output_dim), standardized units
};

/// Encoder, input phase over [0, input_end], decoder phase up to the last
/// request. Request times are window times and must be >= input_end.
ForwardPass run_forward(const ModelParams& params, const TrafficGraph& graph, const WindowInput& window,
                        std::span<const double> request_times, const ModelConfig& config);

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(outputs).
void run_backward(const ModelParams& params, const TrafficGraph& graph, const WindowInput& window,
                  const ForwardPass& pass, const Eigen::MatrixXd& output_grads, ModelParams& grads,
                  const ModelConfig& config);

/// Integrates the control-free decoder from the end of `input` and returns the
/// output map at every request time (requests x nodes*output_dim). Request
/// times must be > input end, except that the input end itself is accepted.
struct Forecast {
  std::vector<double> request_times;  // window time units
  Eigen::MatrixXd values;             // requests x (nodes * output_dim)
};
Forecast decode(const ModelParams& params, const TrafficGraph& graph, const Trajectory& input,
                std::span<const double> request_times, const ModelConfig& config, double start_minute = 0.0);

/// Mean Huber penalty of truth - pred. Throws InputError on shape mismatch or delta <= 0.
double huber_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth, double delta);
/// d(huber_loss)/d(pred).
Eigen::MatrixXd huber_grad(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth, double delta);

/// Raw window (frames x nodes) in, raw forecast out: standardize, run the
/// network, unstandardize.
Forecast forecast(const ModelParams& params, const TrafficGraph& graph, const Eigen::MatrixXd& raw_window,
                  const Standardizer& scaler, std::span<const double> request_times, const ModelConfig& config,
                  double spacing = 1.0, double start_minute = 0.0);

}  // namespace stdde
