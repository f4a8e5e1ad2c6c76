#include "stdde/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "stdde/error.hpp"

namespace stdde {

namespace {

void add_block(std::vector<ParamBlock>& out, const char* name, Eigen::MatrixXd& m) {
  out.push_back({name, m.data(), static_cast<std::size_t>(m.size()), BlockKind::Weight, m.rows(), m.cols()});
}
void add_block(std::vector<ParamBlock>& out, const char* name, Eigen::VectorXd& v) {
  out.push_back({name, v.data(), static_cast<std::size_t>(v.size()), BlockKind::Weight, v.rows(), 1});
}

void add_gate(std::vector<ParamBlock>& out, const std::string& prefix, GateParams& g) {
  out.push_back({prefix + ".w_z", g.w_z.data(), static_cast<std::size_t>(g.w_z.size()), BlockKind::Weight,
                 g.w_z.rows(), g.w_z.cols()});
  out.push_back({prefix + ".u_z", g.u_z.data(), static_cast<std::size_t>(g.u_z.size()), BlockKind::Weight,
                 g.u_z.rows(), g.u_z.cols()});
  out.push_back({prefix + ".b_z", g.b_z.data(), static_cast<std::size_t>(g.b_z.size()), BlockKind::Weight,
                 g.b_z.rows(), 1});
  out.push_back({prefix + ".neighbor", g.neighbor.data(), static_cast<std::size_t>(g.neighbor.size()),
                 BlockKind::Weight, g.neighbor.rows(), g.neighbor.cols()});
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool finite_gate(const GateParams& g) {
  return g.w_z.allFinite() && g.u_z.allFinite() && g.b_z.allFinite() && g.neighbor.allFinite();
}

// Batched right-hand side of one phase. The input phase is controlled by the
// spline derivative; the decoder phase (spline == nullptr) is not.
class PhaseDynamics final : public DelayDynamics {
 public:
  PhaseDynamics(const ModelParams& params, const GateParams& gate, const TrafficGraph& graph,
                const SplinePath* spline, double start_minute, double minutes_per_unit, ModelParams* grads = nullptr,
                GateParams* gate_grads = nullptr)
      : params_(params),
        gate_(gate),
        graph_(graph),
        spline_(spline),
        start_minute_(start_minute),
        minutes_per_unit_(minutes_per_unit),
        grads_(grads),
        gate_grads_(gate_grads) {}

  void reads(double t, std::vector<DelayedRead>& out) const override {
    const bool peak = params_.delays.is_peak(start_minute_ + t * minutes_per_unit_);
    out.reserve(out.size() + graph_.edge_count());
    for (std::size_t e = 0; e < graph_.edge_count(); ++e) {
      const Edge& edge = graph_.edge(e);
      DelayedRead r;
      r.target = edge.dst;
      r.src = edge.src;
      r.weight = graph_.alpha(e);
      if (edge.src == edge.dst) {
        r.time = t;
      } else {
        r.time = t - (peak ? params_.delays.tau_peak[e] : params_.delays.tau_offpeak[e]);
        r.tag = static_cast<int>(2 * e + (peak ? 1 : 0));
      }
      out.push_back(r);
    }
  }

  void derivative(double t, const StateMatrix& state, const StateMatrix& aggregate,
                  StateMatrix& dstate) const override {
    Local l = forward(t, state, aggregate);
    dstate = (1.0 - l.z.array()) * (l.g - state).array();
    if (spline_ != nullptr) dstate.array() *= l.control.array();
  }

  void vjp(double t, const StateMatrix& state, const StateMatrix& aggregate, const StateMatrix& dbar,
           StateMatrix& state_bar, StateMatrix& aggregate_bar) override {
    const Local l = forward(t, state, aggregate);
    const StateMatrix q = 1.0 - l.z.array();
    const StateMatrix p = l.g - state;
    StateMatrix q_bar, p_bar;
    if (spline_ != nullptr) {
      q_bar = dbar.array() * p.array() * l.control.array();
      p_bar = dbar.array() * q.array() * l.control.array();
      const StateMatrix u_bar = dbar.array() * q.array() * p.array();
      grads_->control_w.noalias() += u_bar.transpose() * l.dx;
      grads_->control_b += u_bar.colwise().sum().transpose();
    } else {
      q_bar = dbar.array() * p.array();
      p_bar = dbar.array() * q.array();
    }
    const StateMatrix a_bar = -(q_bar.array() * l.z.array() * q.array());
    state_bar = -p_bar + a_bar * gate_.w_z;
    const StateMatrix g_bar = p_bar + a_bar * gate_.u_z;

    gate_grads_->w_z.noalias() += a_bar.transpose() * state;
    gate_grads_->u_z.noalias() += a_bar.transpose() * l.g;
    gate_grads_->b_z += a_bar.colwise().sum().transpose();

    aggregate_bar = params_.c * (g_bar * gate_.neighbor);
    gate_grads_->neighbor.noalias() += params_.c * (g_bar.transpose() * aggregate);
    grads_->c += (g_bar.array() * l.projected.array()).sum();
  }

 private:
  struct Local {
    StateMatrix projected;  // aggregate * f^T
    StateMatrix g;
    StateMatrix z;
    StateMatrix control;
    Eigen::MatrixXd dx;
  };

  Local forward(double t, const StateMatrix& state, const StateMatrix& aggregate) const {
    Local l;
    l.projected = aggregate * gate_.neighbor.transpose();
    l.g = params_.c * l.projected;
    StateMatrix pre = state * gate_.w_z.transpose() + l.g * gate_.u_z.transpose();
    pre.rowwise() += gate_.b_z.transpose();
    l.z = pre.unaryExpr([](double x) { return sigmoid(x); });
    if (spline_ != nullptr) {
      l.dx = spline_->derivative_all(t);
      l.control = l.dx * params_.control_w.transpose();
      l.control.rowwise() += params_.control_b.transpose();
    }
    return l;
  }

  const ModelParams& params_;
  const GateParams& gate_;
  const TrafficGraph& graph_;
  const SplinePath* spline_;
  double start_minute_;
  double minutes_per_unit_;
  ModelParams* grads_;
  GateParams* gate_grads_;
};

void check_requests(std::span<const double> request_times, double input_end) {
  if (request_times.empty()) throw InputError("no request times given");
  for (std::size_t r = 0; r < request_times.size(); ++r) {
    if (!std::isfinite(request_times[r])) throw InputError("request time is not finite");
    if (request_times[r] < input_end - 1e-9 * std::max(1.0, std::abs(input_end))) {
      throw InputError("request time " + std::to_string(request_times[r]) + " precedes the input end " +
                       std::to_string(input_end));
    }
    if (r > 0 && !(request_times[r] > request_times[r - 1])) {
      throw InputError("request times must be strictly increasing");
    }
  }
}

Eigen::MatrixXd outputs_at(const ModelParams& params, const Trajectory& decoder, std::span<const double> requests) {
  const int nodes = decoder.node_count();
  const int out_dim = params.dims.output_dim;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(requests.size()), nodes * out_dim);
  for (std::size_t r = 0; r < requests.size(); ++r) {
    for (int i = 0; i < nodes; ++i) {
      const Eigen::VectorXd y = params.out_w * decoder.state_at(i, requests[r]) + params.out_b;
      out.row(static_cast<Eigen::Index>(r)).segment(static_cast<Eigen::Index>(i) * out_dim, out_dim) = y.transpose();
    }
  }
  return out;
}

SolverConfig decoder_solver(const Trajectory& input, std::span<const double> requests, double eta) {
  return SolverConfig{eta, std::max(input.end_time(), requests.back())};
}

}  // namespace

std::vector<ParamBlock> ModelParams::blocks() {
  std::vector<ParamBlock> out;
  add_block(out, "encoder.w1", enc_w1);
  add_block(out, "encoder.b1", enc_b1);
  add_block(out, "encoder.w2", enc_w2);
  add_block(out, "encoder.b2", enc_b2);
  add_gate(out, "input", input_gate);
  add_block(out, "control.w", control_w);
  add_block(out, "control.b", control_b);
  add_gate(out, "output", output_gate);
  add_block(out, "readout.w", out_w);
  add_block(out, "readout.b", out_b);
  out.push_back({"balance.c", &c, 1, BlockKind::Balance, 1, 1});
  out.push_back({"delays.offpeak", delays.tau_offpeak.data(), delays.tau_offpeak.size(), BlockKind::Delay,
                 static_cast<Eigen::Index>(delays.tau_offpeak.size()), 1});
  out.push_back({"delays.peak", delays.tau_peak.data(), delays.tau_peak.size(), BlockKind::Delay,
                 static_cast<Eigen::Index>(delays.tau_peak.size()), 1});
  return out;
}

std::size_t ModelParams::parameter_count() {
  std::size_t n = 0;
  for (const ParamBlock& b : blocks()) n += b.size;
  return n;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (ParamBlock& b : z.blocks()) std::fill(b.data, b.data + b.size, 0.0);
  return z;
}

bool ModelParams::all_finite() const {
  auto finite_vec = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return enc_w1.allFinite() && enc_b1.allFinite() && enc_w2.allFinite() && enc_b2.allFinite() &&
         finite_gate(input_gate) && control_w.allFinite() && control_b.allFinite() && finite_gate(output_gate) &&
         out_w.allFinite() && out_b.allFinite() && std::isfinite(c) && finite_vec(delays.tau_offpeak) &&
         finite_vec(delays.tau_peak);
}

ModelParams init_params(int input_dim, int hidden_dim, int output_dim, const TrafficGraph& graph, std::uint64_t seed,
                        double tau_max, const DelayTable* initial_delays) {
  if (input_dim < 1 || hidden_dim < 1 || output_dim < 1) throw InputError("model dimensions must be >= 1");
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
    return m;
  };
  auto gate = [&](int h) {
    GateParams g;
    g.w_z = uniform(h, h, h);
    g.u_z = uniform(h, h, h);
    g.b_z = uniform(h, 1, h);
    g.neighbor = uniform(h, h, h);
    return g;
  };

  ModelParams p;
  p.dims = ModelDims{input_dim, hidden_dim, output_dim};
  p.enc_w1 = uniform(hidden_dim, input_dim, input_dim);
  p.enc_b1 = uniform(hidden_dim, 1, input_dim);
  p.enc_w2 = uniform(hidden_dim, hidden_dim, hidden_dim);
  p.enc_b2 = uniform(hidden_dim, 1, hidden_dim);
  p.input_gate = gate(hidden_dim);
  p.control_w = uniform(hidden_dim, input_dim, input_dim);
  p.control_b = uniform(hidden_dim, 1, input_dim);
  // A negative control gain makes the input phase repel from g, so start every
  // channel at gain 1 (the plain graph-GRU flow). The draw above keeps the
  // generator stream unchanged.
  p.control_b.setOnes();
  p.output_gate = gate(hidden_dim);
  p.out_w = uniform(output_dim, hidden_dim, hidden_dim);
  p.out_b = uniform(output_dim, 1, hidden_dim);
  p.c = 1.0 / static_cast<double>(graph.max_degree());
  if (initial_delays != nullptr) {
    if (initial_delays->size() != graph.edge_count()) throw InputError("delay table does not match the graph");
    p.delays = *initial_delays;
    p.delays.tau_max = tau_max;
    project_delays_in_place(p.delays);
  } else {
    p.delays = DelayTable::zeros(graph, tau_max);
  }
  return p;
}

HistoryFunction encode_history(const ModelParams& params, const Eigen::MatrixXd& first_frame) {
  if (first_frame.cols() != params.dims.input_dim) throw InputError("first frame width differs from input_dim");
  Eigen::MatrixXd pre = first_frame * params.enc_w1.transpose();
  pre.rowwise() += params.enc_b1.transpose();
  Eigen::MatrixXd hidden = pre.array().tanh();
  StateMatrix phi = hidden * params.enc_w2.transpose();
  phi.rowwise() += params.enc_b2.transpose();
  return HistoryFunction{phi};
}

Eigen::VectorXd update_vector(const ModelParams& params, const GateParams& gate, const TrafficGraph& graph,
                              const StateLookup& state_lookup, int node, double t, double t_abs_minutes) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(gate.neighbor.rows());
  for (std::size_t e : graph.in_edges(node)) {
    const double tau = delay_lookup(params.delays, e, t_abs_minutes);
    g += graph.alpha(e) * (gate.neighbor * state_lookup(graph.edge(e).src, t - tau));
  }
  return params.c * g;
}

Eigen::VectorXd derivative(const ModelParams& params, const TrafficGraph& graph, const SplinePath& spline,
                           const StateLookup& state_lookup, int node, double t, double t_abs_minutes) {
  const Eigen::VectorXd g = update_vector(params, params.input_gate, graph, state_lookup, node, t, t_abs_minutes);
  const Eigen::VectorXd h = state_lookup(node, t);
  const Eigen::VectorXd pre = params.input_gate.w_z * h + params.input_gate.u_z * g + params.input_gate.b_z;
  const Eigen::VectorXd z = pre.unaryExpr([](double x) { return sigmoid(x); });
  const Eigen::VectorXd control = params.control_w * spline.eval_derivative(node, t) + params.control_b;
  return ((1.0 - z.array()) * (g - h).array() * control.array()).matrix();
}

ForwardPass run_forward(const ModelParams& params, const TrafficGraph& graph, const WindowInput& window,
                        std::span<const double> request_times, const ModelConfig& config) {
  const int nodes = graph.node_count();
  const int in_dim = params.dims.input_dim;
  if (window.frames() < 2) throw InputError("window needs at least 2 frames");
  if (window.values.cols() != static_cast<Eigen::Index>(nodes) * in_dim) {
    throw InputError("window width does not match nodes * input_dim");
  }
  check_requests(request_times, window.input_end());

  ForwardPass pass;
  std::vector<double> knots(window.frames());
  for (int m = 0; m < window.frames(); ++m) knots[m] = m * window.spacing;
  pass.spline = fit_natural_cubic(knots, window.values, in_dim);

  pass.first_frame.resize(nodes, in_dim);
  for (int i = 0; i < nodes; ++i) pass.first_frame.row(i) = window.values.row(0).segment(static_cast<Eigen::Index>(i) * in_dim, in_dim);
  Eigen::MatrixXd pre = pass.first_frame * params.enc_w1.transpose();
  pre.rowwise() += params.enc_b1.transpose();
  pass.enc_hidden = pre.array().tanh();
  StateMatrix phi = pass.enc_hidden * params.enc_w2.transpose();
  phi.rowwise() += params.enc_b2.transpose();

  PhaseDynamics in_dyn(params, params.input_gate, graph, &pass.spline, window.start_minute, config.minutes_per_unit);
  pass.input = std::make_unique<Trajectory>(integrate(in_dyn, HistoryFunction{phi}, SolverConfig{config.eta, window.input_end()}));

  PhaseDynamics out_dyn(params, params.output_gate, graph, nullptr, window.start_minute, config.minutes_per_unit);
  pass.decoder = std::make_unique<Trajectory>(
      integrate_continuation(out_dyn, *pass.input, decoder_solver(*pass.input, request_times, config.eta)));
  pass.request_times.assign(request_times.begin(), request_times.end());
  pass.outputs = outputs_at(params, *pass.decoder, request_times);
  return pass;
}

void run_backward(const ModelParams& params, const TrafficGraph& graph, const WindowInput& window,
                  const ForwardPass& pass, const Eigen::MatrixXd& output_grads, ModelParams& grads,
                  const ModelConfig& config) {
  const int nodes = graph.node_count();
  const int out_dim = params.dims.output_dim;
  if (output_grads.rows() != pass.outputs.rows() || output_grads.cols() != pass.outputs.cols()) {
    throw InputError("output gradient shape differs from the forward outputs");
  }
  AdjointStore store(2 * graph.edge_count());
  for (std::size_t r = 0; r < pass.request_times.size(); ++r) {
    const double t = pass.request_times[r];
    for (int i = 0; i < nodes; ++i) {
      const Eigen::VectorXd ybar =
          output_grads.row(static_cast<Eigen::Index>(r)).segment(static_cast<Eigen::Index>(i) * out_dim, out_dim).transpose();
      const Eigen::VectorXd h = pass.decoder->state_at(i, t);
      grads.out_w.noalias() += ybar * h.transpose();
      grads.out_b += ybar;
      store.add_state(*pass.decoder, i, t, (params.out_w.transpose() * ybar).transpose());
    }
  }

  PhaseDynamics out_dyn(params, params.output_gate, graph, nullptr, window.start_minute, config.minutes_per_unit,
                        &grads, &grads.output_gate);
  backward(*pass.decoder, out_dyn, store);
  PhaseDynamics in_dyn(params, params.input_gate, graph, &pass.spline, window.start_minute, config.minutes_per_unit,
                       &grads, &grads.input_gate);
  backward(*pass.input, in_dyn, store);

  // History encoder.
  const StateMatrix& phi_bar = store.history;
  if (phi_bar.size() != 0) {
    grads.enc_b2 += phi_bar.colwise().sum().transpose();
    grads.enc_w2.noalias() += phi_bar.transpose() * pass.enc_hidden;
    const Eigen::MatrixXd hidden_bar = phi_bar * params.enc_w2;
    const Eigen::MatrixXd pre_bar = hidden_bar.array() * (1.0 - pass.enc_hidden.array().square());
    grads.enc_w1.noalias() += pre_bar.transpose() * pass.first_frame;
    grads.enc_b1 += pre_bar.colwise().sum().transpose();
  }

  for (std::size_t e = 0; e < graph.edge_count(); ++e) {
    grads.delays.tau_offpeak[e] += store.delays[2 * e];
    grads.delays.tau_peak[e] += store.delays[2 * e + 1];
  }
}

Forecast decode(const ModelParams& params, const TrafficGraph& graph, const Trajectory& input,
                std::span<const double> request_times, const ModelConfig& config, double start_minute) {
  check_requests(request_times, input.end_time());
  PhaseDynamics out_dyn(params, params.output_gate, graph, nullptr, start_minute, config.minutes_per_unit);
  const Trajectory decoder = integrate_continuation(out_dyn, input, decoder_solver(input, request_times, config.eta));
  Forecast f;
  f.request_times.assign(request_times.begin(), request_times.end());
  f.values = outputs_at(params, decoder, request_times);
  return f;
}

double huber_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth, double delta) {
  if (!(delta > 0.0)) throw InputError("Huber delta must be positive");
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw InputError("Huber inputs differ in shape");
  if (pred.size() == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index j = 0; j < pred.cols(); ++j) {
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      const double e = truth(i, j) - pred(i, j);
      const double a = std::abs(e);
      sum += a <= delta ? 0.5 * e * e : delta * a - 0.5 * delta * delta;
    }
  }
  return sum / static_cast<double>(pred.size());
}

Eigen::MatrixXd huber_grad(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth, double delta) {
  if (!(delta > 0.0)) throw InputError("Huber delta must be positive");
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw InputError("Huber inputs differ in shape");
  Eigen::MatrixXd g(pred.rows(), pred.cols());
  const double scale = pred.size() > 0 ? 1.0 / static_cast<double>(pred.size()) : 0.0;
  for (Eigen::Index j = 0; j < pred.cols(); ++j) {
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      const double e = truth(i, j) - pred(i, j);
      const double psi = std::abs(e) <= delta ? e : (e > 0.0 ? delta : -delta);
      g(i, j) = -psi * scale;
    }
  }
  return g;
}

Forecast forecast(const ModelParams& params, const TrafficGraph& graph, const Eigen::MatrixXd& raw_window,
                  const Standardizer& scaler, std::span<const double> request_times, const ModelConfig& config,
                  double spacing, double start_minute) {
  WindowInput window{scaler.apply(raw_window), spacing, start_minute};
  const double end = window.input_end();
  for (double t : request_times) {
    if (!(t > end)) {
      throw InputError("request time " + std::to_string(t) + " is not after the input end " + std::to_string(end));
    }
  }
  const ForwardPass pass = run_forward(params, graph, window, request_times, config);
  Forecast f;
  f.request_times = pass.request_times;
  f.values = scaler.invert(pass.outputs);
  return f;
}

}  // namespace stdde
